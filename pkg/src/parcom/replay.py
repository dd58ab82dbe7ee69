"""Scripted single-pair replay: both link endpoints over a loss-scriptable channel.

No MAC contention here; transmissions happen at the slot they are decided and
arrive ``latency`` slots later unless the loss script drops them. The source
has no delivery feedback (it assumes every transmission arrived), which is the
regime in which status losses cause persistent estimate divergence and the
calibration/confirmation/correction machinery earns its keep.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Slot
from .link import (KIND_CALIBRATION, KIND_CONFIRMATION, KIND_CORRECTION, KIND_STATUS,
                   Correction, DestinationEndpoint, LinkConfig, ModelCalibration,
                   ModelConfirmation, SourceEndpoint, StatusOta)

# lose(kind, slot, nth_of_kind) -> True drops that transmission
LossScript = Callable[[str, Slot, int], bool]


@dataclass
class ReplayResult:
    est_src: np.ndarray       # (T, dim) source estimate per slot
    est_dst: np.ndarray       # (T, dim) destination estimate per slot
    misaligned: np.ndarray    # (T,) bool, any exact component mismatch
    sent: dict[str, int]      # transmissions per packet kind
    lost: dict[str, int]

    def divergence_spans(self) -> list[tuple[int, int]]:
        """Maximal [start, end) runs of misaligned slots."""
        spans, start = [], None
        for t, bad in enumerate(self.misaligned):
            if bad and start is None:
                start = t
            elif not bad and start is not None:
                spans.append((start, t))
                start = None
        if start is not None:
            spans.append((start, len(self.misaligned)))
        return spans


def run_replay(cfg: LinkConfig, statuses: np.ndarray, exo: np.ndarray | None = None,
               lose: LossScript | None = None) -> ReplayResult:
    """Replay ``statuses`` (T, dim) through one source/destination pair."""
    statuses = np.asarray(statuses, dtype=np.float64)
    n_slots = statuses.shape[0]
    if exo is None:
        exo = statuses[:, ~np.asarray(cfg.predicted_mask, dtype=bool)].reshape(n_slots, -1)
        exo = exo[:, 0] if exo.shape[1] else np.zeros(n_slots)
    src = SourceEndpoint(cfg)
    dst = DestinationEndpoint(cfg)

    arrivals: dict[Slot, list] = {}
    confirm_queue: list[tuple[Slot, Slot]] = []  # (send slot, calib stamp)
    est_src = np.empty_like(statuses)
    est_dst = np.empty_like(statuses)
    misaligned = np.zeros(n_slots, dtype=bool)
    sent: dict[str, int] = {k: 0 for k in (KIND_STATUS, KIND_CALIBRATION,
                                           KIND_CONFIRMATION, KIND_CORRECTION)}
    lost: dict[str, int] = dict(sent)

    def transmit(kind: str, t: Slot, payload) -> bool:
        n = sent[kind]
        sent[kind] += 1
        dropped = bool(lose(kind, t, n)) if lose is not None else False
        if dropped:
            lost[kind] += 1
        else:
            arrivals.setdefault(t + cfg.latency, []).append(payload)
        return not dropped

    for t in range(n_slots):
        obs = statuses[t]
        src.begin_slot(t, obs, float(exo[t]))
        dst.begin_slot(t, float(exo[t]))

        bearing = False  # did the source push a status over the air this slot
        if t % cfg.decision_period == 0 and src.should_transmit():
            transmit(KIND_STATUS, t,
                     StatusOta(0, 1, obs.copy(), t, src.model_stamp))
            bearing = True
        if t > 0 and t % cfg.calib_period == 0:
            model = src.make_calibration(t)
            if model is not None:
                transmit(KIND_CALIBRATION, t,
                         ModelCalibration(0, 1, model, t, obs.copy(), t, src.model_stamp))
                src.calibration_transmitted(t, t)
        if cfg.correction_period > 0 and t > 0 and t % cfg.correction_period == 0:
            transmit(KIND_CORRECTION, t,
                     Correction(0, 1, src.model, src.model_stamp, obs.copy(), t))
            bearing = True

        due = [q for q in confirm_queue if q[0] == t]
        confirm_queue = [q for q in confirm_queue if q[0] > t]
        for _, stamp in due:
            superseded = (dst.model_stamp > stamp
                          or (dst.candidate is not None and dst.candidate.stamp > stamp))
            if superseded:
                continue
            transmit(KIND_CONFIRMATION, t, ModelConfirmation(1, 0, stamp))
            dst.confirmation_sent(t, stamp, acked=None)

        for pkt in arrivals.pop(t, []):
            if isinstance(pkt, ModelCalibration):
                stamp = dst.on_calibration(t, pkt)
                if stamp is not None:
                    for k in range(cfg.confirm_repeats):
                        confirm_queue.append((t + 1 + k, stamp))
            elif isinstance(pkt, StatusOta):
                dst.on_status(t, pkt)
            elif isinstance(pkt, Correction):
                dst.on_correction(t, pkt)
            elif isinstance(pkt, ModelConfirmation):
                src.on_confirmation(t, pkt.calib_stamp)

        est_src[t] = src.end_slot(t, obs if bearing else None)
        est_dst[t] = dst.end_slot(t)
        misaligned[t] = not np.array_equal(est_src[t], est_dst[t])

    return ReplayResult(est_src, est_dst, misaligned, sent, lost)
