"""Run outputs: the per-run summary, the trace file, and trace-derived metrics.

A trace is one CSV per run with a fixed column order:

    slot,node,event,subframe,subchannel,outcome,
    s_d,s_v,s_a,shat_d,shat_v,shat_a,shatp_d,shatp_v,shatp_a,error,m

Three row families share it. MAC rows (event is the packet kind) carry one row
per intended receiver with ``outcome`` formatted ``<result>:<receiver>``.
State rows (event ``state``) carry the true status, the source estimate and
the destination estimate for one pair. Trigger rows (event ``trigger``) mark
a transmit decision at a decision epoch. Floats are written with ``repr`` so
parsing a trace back recovers bit-identical values; every derived summary
field is recomputable from the trace alone.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ErrorMeasure, vector_error

TRACE_COLUMNS = ("slot", "node", "event", "subframe", "subchannel", "outcome",
                 "s_d", "s_v", "s_a", "shat_d", "shat_v", "shat_a",
                 "shatp_d", "shatp_v", "shatp_a", "error", "m")

EVENT_STATE = "state"
EVENT_TRIGGER = "trigger"


def fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class PairSummary:
    pair_id: str
    src: str
    dst: str
    # MAC counters for this pair's link-scoped packets
    status_tx: int = 0
    status_delivered: int = 0
    status_collisions: int = 0
    status_half_duplex: int = 0
    status_channel_loss: int = 0
    calib_tx: int = 0
    calib_delivered: int = 0
    confirm_tx: int = 0
    confirm_delivered: int = 0
    correction_tx: int = 0
    correction_delivered: int = 0
    # protocol / estimation quality
    decisions: list[int] = field(default_factory=list)
    recovery_err_sum: float = 0.0
    recovery_err_max: float = 0.0
    misaligned_slots: int = 0
    max_misaligned_span: int = 0
    aoi_sum: int = 0
    aoi_slots: int = 0
    # control quality (vehicles only; None for absolute-coordinate links)
    min_safe_distance: float | None = None
    deviation_sq_sum: float | None = None
    # adaptive scheduler
    final_m: float | None = None
    m_trajectory: list[float] = field(default_factory=list)
    window_costs: list[float] = field(default_factory=list)

    def recovery_err_mean(self, n_slots: int) -> float:
        return self.recovery_err_sum / n_slots if n_slots else 0.0

    def mean_aoi(self) -> float | None:
        return self.aoi_sum / self.aoi_slots if self.aoi_slots else None

    def rms_deviation(self, n_slots: int) -> float | None:
        if self.deviation_sq_sum is None or not n_slots:
            return None
        return float(np.sqrt(self.deviation_sq_sum / n_slots))


@dataclass
class RunSummary:
    scenario: str
    mode: str                    # parallel | baseline | explore
    seed: int
    duration_slots: int
    crashed: bool = False
    occupancy: float = 0.0
    n_windows: int = 0
    constants: dict = field(default_factory=dict)
    pairs: list[PairSummary] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        pairs = [PairSummary(**p) for p in d.pop("pairs")]
        return cls(pairs=pairs, **d)

    @classmethod
    def loads(cls, text: str) -> "RunSummary":
        return cls.from_dict(json.loads(text))

    def pair(self, pair_id: str) -> PairSummary:
        for p in self.pairs:
            if p.pair_id == pair_id:
                return p
        raise KeyError(pair_id)

    def total(self, field_name: str) -> float:
        return sum(getattr(p, field_name) for p in self.pairs)


class TraceWriter:
    """Streams trace rows to a file; order is the engine's emission order."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = self.path.open("w")
        self._fh.write(",".join(TRACE_COLUMNS) + "\n")

    def row(self, slot: int, node: str, event: str, subframe: str = "",
            subchannel: str = "", outcome: str = "", s: tuple = ("", "", ""),
            shat: tuple = ("", "", ""), shatp: tuple = ("", "", ""),
            error: str = "", m: str = "") -> None:
        self._fh.write(",".join((str(slot), node, event, subframe, subchannel,
                                 outcome, *s, *shat, *shatp, error, m)) + "\n")

    def close(self) -> None:
        self._fh.close()


def read_trace(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ",".join(TRACE_COLUMNS):
        raise ValueError(f"{path} is not a trace file")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(dict(zip(TRACE_COLUMNS, parts)))
    return rows


def compute_aoi(rows: list[dict], duration_slots: int) -> dict[str, float | None]:
    """Mean age of information per pair from delivered status-bearing rows.

    Age at slot t is t minus the freshest delivered generation stamp; the
    stamp of a delivery is its transmit slot (payloads are sampled at
    transmit time). Slots before the first delivery carry no age.
    """
    deliveries: dict[str, list[int]] = {}
    pair_ids = set()
    for r in rows:
        if r["event"] == EVENT_STATE:
            pair_ids.add(r["node"])
        if r["event"] in ("StatusOTA", "Correction") and r["outcome"].startswith("delivered:"):
            deliveries.setdefault(r["node"], []).append(int(r["slot"]))
    out: dict[str, float | None] = {}
    for pid in sorted(pair_ids):
        slots = sorted(deliveries.get(pid, []))
        if not slots:
            out[pid] = None
            continue
        total, n, freshest, i = 0, 0, None, 0
        for t in range(duration_slots):
            while i < len(slots) and slots[i] <= t:
                freshest = slots[i]
                i += 1
            if freshest is not None:
                total += t - freshest
                n += 1
        out[pid] = total / n if n else None
    return out


def _span_stats(flags: list[bool]) -> tuple[int, int]:
    """(total set count, longest consecutive run) of a boolean sequence."""
    total = longest = cur = 0
    for f in flags:
        if f:
            total += 1
            cur += 1
            longest = max(longest, cur)
        else:
            cur = 0
    return total, longest


def recompute_summary(rows: list[dict], base: RunSummary) -> RunSummary:
    """Rebuild every derived summary field from the trace.

    Constants (scenario, seed, config echoes) are taken from ``base``; all
    counters and statistics are re-derived, in the same accumulation order the
    engine used, so floating-point results match exactly.
    """
    cons = base.constants
    measure = ErrorMeasure(cons["error_measure"])
    mask = np.asarray(cons["predicted_mask"], dtype=bool)
    d_des = cons["d_des"]
    eval_interval = cons["eval_interval"]
    out = RunSummary(scenario=base.scenario, mode=base.mode, seed=base.seed,
                     duration_slots=base.duration_slots, constants=dict(cons))
    pairs: dict[str, PairSummary] = {}
    order: list[str] = []
    for p in base.pairs:
        ps = PairSummary(pair_id=p.pair_id, src=p.src, dst=p.dst)
        if p.deviation_sq_sum is not None:
            ps.deviation_sq_sum = 0.0
        pairs[p.pair_id] = ps
        order.append(p.pair_id)

    kind_map = {"StatusOTA": "status", "ModelCalibration": "calib",
                "ModelConfirmation": "confirm", "Correction": "correction"}
    seen_attempts: set[tuple[str, str, str]] = set()
    used_resources: set[tuple[int, int]] = set()
    misaligned: dict[str, list[bool]] = {pid: [] for pid in pairs}
    gaps_min: dict[str, float] = {}
    win_dev: dict[str, tuple[float, int]] = {pid: (0.0, 0) for pid in pairs}
    last_m: dict[str, str] = {}
    freshest: dict[str, int | None] = {pid: None for pid in pairs}

    for r in rows:
        slot = int(r["slot"])
        pid = r["node"]
        event = r["event"]
        if event == EVENT_TRIGGER:
            pairs[pid].decisions.append(slot)
            continue
        if event == EVENT_STATE:
            ps = pairs[pid]
            s = np.array([float(r["s_d"]), float(r["s_v"]), float(r["s_a"])])
            shatp = np.array([float(r["shatp_d"]), float(r["shatp_v"]), float(r["shatp_a"])])
            err = vector_error(s[mask], shatp[mask], measure)
            ps.recovery_err_sum += err
            ps.recovery_err_max = max(ps.recovery_err_max, err)
            misaligned[pid].append(
                (r["shat_d"], r["shat_v"], r["shat_a"])
                != (r["shatp_d"], r["shatp_v"], r["shatp_a"]))
            if ps.deviation_sq_sum is not None:
                dev = s[0] - d_des
                ps.deviation_sq_sum += dev * dev
                gaps_min[pid] = min(gaps_min.get(pid, np.inf), s[0])
                if s[0] <= 0.0:
                    out.crashed = True
                acc_d, acc_n = win_dev[pid]
                win_dev[pid] = (acc_d + dev * dev, acc_n + 1)
            if freshest[pid] is not None:
                ps.aoi_sum += slot - freshest[pid]
                ps.aoi_slots += 1
            if r["m"]:
                last_m[pid] = r["m"]
            # Window boundaries close after the state rows of their last slot.
            if (slot + 1) % eval_interval == 0 and r["m"]:
                acc_d, acc_n = win_dev[pid]
                if acc_n:
                    pairs[pid].window_costs.append(float(np.sqrt(acc_d / acc_n)))
                win_dev[pid] = (0.0, 0)
            continue
        if event == "Control":
            # Control broadcasts occupy pool resources (one row per receiver)
            # but belong to a formation, not to any one status pair.
            used_resources.add((slot, int(r["subchannel"])))
            continue
        if event in kind_map:
            ps = pairs[pid]
            prefix = kind_map[event]
            key = (r["slot"], pid, event)
            if key not in seen_attempts:
                seen_attempts.add(key)
                setattr(ps, f"{prefix}_tx", getattr(ps, f"{prefix}_tx") + 1)
                used_resources.add((slot, int(r["subchannel"])))
            result = r["outcome"].split(":", 1)[0]
            if result == "delivered":
                setattr(ps, f"{prefix}_delivered", getattr(ps, f"{prefix}_delivered") + 1)
                if event in ("StatusOTA", "Correction"):
                    freshest[pid] = slot
            elif event == "StatusOTA":
                if result == "collision":
                    ps.status_collisions += 1
                elif result == "half_duplex":
                    ps.status_half_duplex += 1
                elif result == "channel_loss":
                    ps.status_channel_loss += 1

    for pid in order:
        ps = pairs[pid]
        ps.misaligned_slots, ps.max_misaligned_span = _span_stats(misaligned[pid])
        if ps.deviation_sq_sum is not None:
            ps.min_safe_distance = (d_des - gaps_min[pid]) if pid in gaps_min else 0.0
        if pid in last_m:
            ps.final_m = float(last_m[pid])
        out.pairs.append(ps)

    out.n_windows = base.n_windows
    out.occupancy = (len(used_resources) / (base.n_windows * cons["pool_size"])
                     if base.n_windows else 0.0)
    # m trajectory: m column of each pair's state row at window-final slots.
    if any(p.final_m is not None for p in out.pairs):
        per_pair_m: dict[str, list[float]] = {pid: [] for pid in pairs}
        for r in rows:
            if (r["event"] == EVENT_STATE and r["m"]
                    and (int(r["slot"]) + 1) % eval_interval == 0):
                per_pair_m[r["node"]].append(float(r["m"]))
        for ps in out.pairs:
            if ps.final_m is not None:
                ps.m_trajectory = per_pair_m[ps.pair_id]
    return out
