"""Pairwise status link: transmit-on-model-mismatch plus model lifecycle.

One link connects a status source (e.g. a follower vehicle) to a destination
(its platoon leader). Both ends run the same linear predictor every slot; the
source transmits over the air only when its own prediction misses the sensed
status by more than the trigger threshold. Model updates travel as
calibration packets and take effect only after a confirmation exchange, so
both ends switch models at the same slot; periodic correction packets
overwrite the destination's model and estimate unconditionally as a safety
net against silent divergence.

Endpoints are channel-agnostic: an orchestrator (the MAC engine or the
scripted replay harness) moves packets between them and reports delivery
facts. The per-slot lifecycle at each end is ``begin_slot`` (model switch due
this slot, one-step prediction), packet handling, then ``end_slot`` (estimate
update, Eqs. of the source/destination recovery rules).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ErrorMeasure, Slot, StatusVector, vector_error
from .predictor import LinearModel, SampleWindow, fit_lms, predict_values, zero_model

KIND_STATUS = "StatusOTA"
KIND_CALIBRATION = "ModelCalibration"
KIND_CONFIRMATION = "ModelConfirmation"
KIND_CORRECTION = "Correction"

# Packet kinds whose payload refreshes the estimate on delivery. Calibration
# packets also carry a sample, but it is informational only: using it for
# recovery would silently mask estimate divergence every calibration period,
# which is exactly what correction packets exist to repair explicitly.
STATUS_BEARING = (KIND_STATUS, KIND_CORRECTION)


@dataclass(frozen=True)
class StatusOta:
    src: int
    dst: int
    status: np.ndarray
    stamp: Slot
    model_stamp: Slot  # version of the model the source is currently running


@dataclass(frozen=True)
class ModelCalibration:
    src: int
    dst: int
    model: LinearModel
    calib_stamp: Slot       # version of the proposed model (= fit slot)
    status: np.ndarray      # piggybacked sample, fresh at transmit time
    stamp: Slot
    model_stamp: Slot


@dataclass(frozen=True)
class ModelConfirmation:
    src: int
    dst: int
    calib_stamp: Slot


@dataclass(frozen=True)
class Correction:
    src: int
    dst: int
    model: LinearModel
    model_stamp: Slot       # version of the carried (currently running) model
    status: np.ndarray
    stamp: Slot


@dataclass(frozen=True)
class LinkConfig:
    dim: int = 3
    predicted_mask: tuple[bool, ...] = (True, True, False)
    measure: ErrorMeasure = ErrorMeasure.L1
    delta: float = 0.1
    decision_period: int = 10
    calib_period: int = 100
    correction_period: int = 1000  # 0 disables correction packets
    confirm_timeout: int = 10
    confirm_repeats: int = 3
    n_input: int = 1
    window_capacity: int = 100
    # Relative singular value cutoff for the periodic refit. The endpoint
    # default is deliberately coarser than the solver's numerical floor: when
    # the link idles at one operating point the window's only variation is
    # sensing noise, and keeping those directions bakes the noise into the
    # matrix, so rolls wander and the trigger fires on model error that the
    # fit invented. Truncating them leaves the minimum-norm map, which holds
    # the roll at the operating point instead.
    fit_rcond: float = 1e-3
    timestamping: bool = True
    latency: int = 0               # decode delay tau in slots
    candidate_ttl: int = 64        # destination forgets an unconfirmed staged model

    def next_epoch(self, t: Slot) -> Slot:
        """First decision epoch strictly after t (model switches land here)."""
        return (t // self.decision_period + 1) * self.decision_period


def tx_decide(observed: StatusVector, predicted: StatusVector, delta: float,
              measure: ErrorMeasure = ErrorMeasure.L1,
              mask: Sequence[bool] | None = None) -> bool:
    """Transmit iff the prediction error on the compared components exceeds delta."""
    a, b = observed.values, predicted.values
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        a, b = a[m], b[m]
    return vector_error(a, b, measure) > delta


class _EstimateRing:
    """Bounded per-slot record of estimates, needed for timestamp re-rolls."""

    def __init__(self, keep: int = 128):
        self.keep = keep
        self._d: dict[Slot, np.ndarray] = {}

    def get(self, t: Slot) -> np.ndarray | None:
        return self._d.get(t)

    def put(self, t: Slot, v: np.ndarray) -> None:
        self._d[t] = v
        if len(self._d) > 4 * self.keep:
            cut = t - self.keep
            for k in [k for k in self._d if k < cut]:
                del self._d[k]


@dataclass
class PendingCalibration:
    model: LinearModel
    stamp: Slot
    sent_slot: Slot | None = None  # set when the packet actually left the radio


class _EndpointBase:
    def __init__(self, cfg: LinkConfig):
        self.cfg = cfg
        self.mask = np.asarray(cfg.predicted_mask, dtype=bool)
        self.model = zero_model(cfg.dim, cfg.predicted_mask, cfg.n_input)
        self.model_stamp: Slot = 0
        self.est = _EstimateRing()
        self._sbar: np.ndarray | None = None
        self._last_anchor: tuple[Slot, np.ndarray] | None = None

    def _stacked(self, t: Slot) -> np.ndarray:
        parts = []
        for u in range(t - self.cfg.n_input, t):
            e = self.est.get(u)
            parts.append(e if e is not None else np.zeros(self.cfg.dim))
        return np.concatenate(parts) if len(parts) > 1 else parts[0]

    def _roll(self, t: Slot, exo_now: float) -> np.ndarray:
        """One-step model prediction for slot t as a full status vector."""
        out = np.empty(self.cfg.dim)
        out[self.mask] = predict_values(self.model, self._stacked(t))
        out[~self.mask] = exo_now
        return out

    def _reroll_from_anchor(self, t: Slot) -> None:
        """Recompute recent estimates under the current model.

        A model switch invalidates everything rolled under the previous model
        (after the zero initial model the history is useless); replaying from
        the last over-the-air sample hands the new model a sound input. Both
        ends share anchor slots on a lossless channel, so they re-roll
        identically. Skipped when no anchor is within ring range.
        """
        if self._last_anchor is None:
            return
        at, values = self._last_anchor
        if not 0 < t - at <= self.est.keep:
            return
        self.est.put(at, np.array(values, dtype=np.float64))
        exo_prev = values[~self.mask]
        for u in range(at + 1, t):
            old = self.est.get(u)
            exo = old[~self.mask] if old is not None else exo_prev
            rolled = np.empty(self.cfg.dim)
            rolled[self.mask] = predict_values(self.model, self._stacked(u))
            rolled[~self.mask] = exo
            self.est.put(u, rolled)
            exo_prev = exo

    def predicted(self) -> np.ndarray:
        """This slot's prediction (valid between begin_slot and end_slot)."""
        assert self._sbar is not None
        return self._sbar


class SourceEndpoint(_EndpointBase):
    """Transmitter side: senses, decides, proposes models, tracks its own estimate."""

    def __init__(self, cfg: LinkConfig):
        super().__init__(cfg)
        self.window = SampleWindow(cfg.window_capacity)
        self.pending: PendingCalibration | None = None
        self._adopt: tuple[Slot, LinearModel, Slot] | None = None
        self._obs: np.ndarray | None = None
        self._exo_now = 0.0

    def begin_slot(self, t: Slot, obs_values: np.ndarray, exo_now: float) -> None:
        if self._adopt is not None and t >= self._adopt[0]:
            _, self.model, self.model_stamp = self._adopt
            self._adopt = None
            self._reroll_from_anchor(t)
        self._obs = obs_values
        self._exo_now = exo_now
        sample = obs_values.copy()
        # Exogenous components are commanded, not sensed, so the fit window
        # gets their exact values; a noisy regressor column would leak noise
        # into every fitted coefficient.
        sample[~self.mask] = exo_now
        self.window.push(StatusVector(sample, t))
        self._sbar = self._roll(t, exo_now)

    def observed(self) -> np.ndarray:
        assert self._obs is not None
        return self._obs

    def trigger_error(self) -> float:
        return vector_error(self._obs[self.mask], self._sbar[self.mask], self.cfg.measure)

    def should_transmit(self) -> bool:
        return self.trigger_error() > self.cfg.delta

    def make_calibration(self, t: Slot) -> LinearModel | None:
        """Fit a fresh model and stage it; supersedes any outstanding proposal."""
        if len(self.window) < self.cfg.n_input + 1:
            return None
        model = fit_lms(self.window, self.cfg.predicted_mask, self.cfg.n_input,
                        version=t, rcond=self.cfg.fit_rcond)
        self.pending = PendingCalibration(model, t)
        return model

    def calibration_transmitted(self, t: Slot, stamp: Slot) -> None:
        """The staged proposal left the radio: the confirmation clock starts now."""
        if self.pending is not None and self.pending.stamp == stamp and self.pending.sent_slot is None:
            self.pending.sent_slot = t

    def on_confirmation(self, t: Slot, calib_stamp: Slot) -> None:
        if self.pending is not None and self.pending.stamp == calib_stamp:
            self._adopt = (self.cfg.next_epoch(t), self.pending.model, self.pending.stamp)
            self.pending = None

    def end_slot(self, t: Slot, delivered_values: np.ndarray | None) -> np.ndarray:
        """Estimate update: the transmitted sample if it (reportedly) arrived, else the prediction."""
        if delivered_values is not None:
            est = np.array(delivered_values, dtype=np.float64)
            self._last_anchor = (t, est)
        else:
            est = self._sbar.copy()
            est[~self.mask] = self._exo_now
        self.est.put(t, est)
        if (self.pending is not None and self.pending.sent_slot is not None
                and t - self.pending.sent_slot >= self.cfg.confirm_timeout):
            self.pending = None  # confirmation lost; keep the old model
        return est


@dataclass
class _Candidate:
    model: LinearModel
    stamp: Slot
    staged_at: Slot
    adopt_slot: Slot | None = None


class DestinationEndpoint(_EndpointBase):
    """Receiver side: recovers the status, stages and confirms proposed models."""

    def __init__(self, cfg: LinkConfig):
        super().__init__(cfg)
        self.prev_model = self.model
        self.prev_stamp: Slot = 0
        self.candidate: _Candidate | None = None
        self.last_switch: Slot = -1
        self._anchors: list[tuple[Slot, np.ndarray]] = []
        self._exo_now = 0.0

    def begin_slot(self, t: Slot, exo_now: float) -> None:
        if self.candidate is not None:
            c = self.candidate
            if c.adopt_slot is not None and t >= c.adopt_slot:
                self._switch(c.model, c.stamp, t)
                self.candidate = None
            elif c.adopt_slot is None and t - c.staged_at > self.cfg.candidate_ttl:
                self.candidate = None  # never confirmed, forget it
        self._exo_now = exo_now
        self._anchors = []
        self._sbar = self._roll(t, exo_now)

    def _switch(self, model: LinearModel, stamp: Slot, t: Slot) -> None:
        self.prev_model, self.prev_stamp = self.model, self.model_stamp
        self.model, self.model_stamp = model, stamp
        self.last_switch = t
        self._reroll_from_anchor(t)
        if self._sbar is not None:
            self._sbar = self._roll(t, self._exo_now)

    def on_calibration(self, t: Slot, pkt: ModelCalibration) -> Slot | None:
        """Stage the proposal; returns the stamp to confirm (next slot, repeated)."""
        self.on_source_stamp(t, pkt.model_stamp, pkt.stamp)
        if pkt.calib_stamp <= self.model_stamp:
            return None
        self.candidate = _Candidate(pkt.model, pkt.calib_stamp, staged_at=t)
        return pkt.calib_stamp

    def confirmation_sent(self, tx_slot: Slot, calib_stamp: Slot, acked: bool | None) -> None:
        """One confirmation repeat left the radio.

        ``acked`` is the ground-truth delivery outcome when the MAC exposes
        acknowledgments, or None when it does not. Without feedback the
        destination assumes the first repeat arrived; a wrong assumption is
        detected later through the version stamps on source packets.
        """
        c = self.candidate
        if c is None or c.stamp != calib_stamp or c.adopt_slot is not None:
            return
        if acked is True or acked is None:
            c.adopt_slot = self.cfg.next_epoch(tx_slot + self.cfg.latency)

    def on_source_stamp(self, t: Slot, model_stamp: Slot, status_slot: Slot) -> None:
        """Reconcile against the model version the source says it is running."""
        if model_stamp == self.model_stamp:
            return
        if self.candidate is not None and model_stamp == self.candidate.stamp:
            # The source is already on the staged model: join it immediately.
            self._switch(self.candidate.model, self.candidate.stamp, t)
            self.candidate = None
        elif model_stamp == self.prev_stamp and status_slot >= self.last_switch >= 0:
            # We adopted but the source never got the confirmation: fall back.
            stale_model, stale_stamp = self.model, self.model_stamp
            self._switch(self.prev_model, self.prev_stamp, t)
            self.candidate = _Candidate(stale_model, stale_stamp, staged_at=t)

    def on_status(self, t: Slot, pkt: StatusOta) -> None:
        self.note_status(t, pkt.status, pkt.stamp)
        self.on_source_stamp(t, pkt.model_stamp, pkt.stamp)

    def on_correction(self, t: Slot, pkt: Correction) -> None:
        """Corrections overwrite unconditionally: model and estimate."""
        if pkt.model_stamp != self.model_stamp:
            self._switch(pkt.model, pkt.model_stamp, t)
        if self.candidate is not None and self.candidate.stamp <= pkt.model_stamp:
            self.candidate = None
        self.note_status(t, pkt.status, pkt.stamp)

    def note_status(self, arrival: Slot, values: np.ndarray, stamp: Slot) -> None:
        """Queue a received sample; applied at end_slot at its carried stamp."""
        at = stamp if self.cfg.timestamping else arrival
        self._anchors.append((at, values))

    def end_slot(self, t: Slot) -> np.ndarray:
        est = self._sbar.copy()
        est[~self.mask] = self._exo_now
        for at, values in self._anchors:
            if at > t:
                at = t  # a stamp from the future degenerates to arrival time
            if self._last_anchor is None or at >= self._last_anchor[0]:
                self._last_anchor = (at, np.array(values, dtype=np.float64))
            self.est.put(at, np.array(values, dtype=np.float64))
            for u in range(at + 1, t + 1):
                old = self.est.get(u)
                exo = old[~self.mask] if old is not None else est[~self.mask]
                rolled = np.empty(self.cfg.dim)
                rolled[self.mask] = predict_values(self.model, self._stacked(u))
                rolled[~self.mask] = exo
                self.est.put(u, rolled)
            e = self.est.get(t)
            est = e if e is not None else est
        self.est.put(t, est)
        return est
