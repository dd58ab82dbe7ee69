"""Slot-stepped simulation engine tying plant, links, MAC, and control together.

Each slot runs a fixed phase order: (1) plant integration and sensing,
(2) source protocol ticks (transmit decisions, calibration and correction
scheduling), (3) MAC transmission and per-receiver resolution, with payloads
sampled at the transmit slot, (4) receive processing and estimate updates at
both ends plus per-slot accounting, (5) the control epoch, where each
formation leader computes acceleration commands from its recovered estimates
and broadcasts them as a control packet on the shared pool; a follower applies
its command on the slot after the broadcast reaches it and holds the previous
one when it does not. Trace rows come out in phase order within a slot
(trigger, then MAC, then state), and every derived summary field accumulates
in that same order so a trace replay reproduces the summary bit for bit.

Topology: every follower is a status source and its formation leader is the
destination. Vehicle links carry (gap to the vehicle ahead, speed,
acceleration); UAV links carry one coordinate axis each, three links per
follower, all sharing the follower's single radio.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .core import (STREAM_CHANNEL_LOSS, STREAM_EXPLORE, STREAM_MAC_SELECT,
                   STREAM_SENSING, STREAM_TX_PHASE, ErrorMeasure, RngStream,
                   vector_error)
from .link import (KIND_CALIBRATION, KIND_CONFIRMATION, KIND_CORRECTION,
                   KIND_STATUS, Correction, DestinationEndpoint, LinkConfig,
                   ModelCalibration, ModelConfirmation, SourceEndpoint,
                   StatusOta)
from .mac import (Outcome, ResourcePool, TxAttempt, resolve_subframe,
                  schedule_transmission)
from .metrics import (EVENT_STATE, EVENT_TRIGGER, PairSummary, RunSummary,
                      TraceWriter, fmt)
from .plant import (DT, CaccGains, SpeedRamp, cacc_accel,
                    leader_accel_parabola, ramp_accel)
from .smart import (AdaptationState, AuxCostGrid, ErrorQuantizer, PolicyBank,
                    build_policy_bank, estimate_node_model, smart_tx_gate)

MODE_PARALLEL = "parallel"
MODE_BASELINE = "baseline"
MODE_EXPLORE = "explore"

UAV_AXES = "xyz"

# Acceleration commands ride the same contended pool as status traffic (one
# broadcast per formation leader per control epoch), so congestion degrades
# the control loop itself, not just status freshness.
KIND_CONTROL = "Control"

KIND_PREFIX = {KIND_STATUS: "status", KIND_CALIBRATION: "calib",
               KIND_CONFIRMATION: "confirm", KIND_CORRECTION: "correction"}

# Piecewise cruise/brake speed schedule used by the long highway scenario
# (speeds in m/s, times in slots): speed up, hold, brake hard, recover.
SCHEDULE_RAMPS = (SpeedRamp(5000, 22.2), SpeedRamp(15000, 22.2),
                  SpeedRamp(20000, 9.7), SpeedRamp(35000, 22.2))
# Per-axis leader speed ramps for the UAV formation scenario.
UAV_RAMPS = ((SpeedRamp(500, 0.49), SpeedRamp(1000, 0.245)),
             (SpeedRamp(500, 1.715), SpeedRamp(1000, 1.0682)),
             (SpeedRamp(500, 0.49), SpeedRamp(1000, 0.0)))


@dataclass
class Pair:
    """One source-to-destination status link and its run accounting."""

    idx: int
    pair_id: str
    src_node: int
    dst_node: int
    front_node: int | None        # vehicle ahead of the source; None for UAV links
    axis: int                     # coordinate axis for UAV links, -1 otherwise
    src: SourceEndpoint | None
    dst: DestinationEndpoint | None
    summary: PairSummary
    track_distance: bool          # gap-style link: distance metrics apply
    desired: float                # desired gap (or formation offset)
    obs: np.ndarray | None = None
    true_status: np.ndarray | None = None
    est_src: np.ndarray | None = None
    est_dst: np.ndarray | None = None
    last_delivered: np.ndarray | None = None   # zero-order hold for control
    bearing_tx: np.ndarray | None = None       # status payload sent this slot
    bearing_ack: bool = False                  # its delivery truth (feedback mode)
    freshest_stamp: int | None = None
    calib_phase: int = 0          # per-pair stagger of the calibration timer
    corr_phase: int = 0           # likewise for the correction timer
    assumed_accel: float = 0.0    # destination's view of the source's actuator
    # commands the leader has broadcast but whose effect slots are still
    # ahead: (effect slot, accel), at most one per in-flight control packet
    assumed_queue: list = field(default_factory=list)
    min_gap: float = math.inf
    mis_run: int = 0
    # adaptive scheduler state
    m: float | None = None
    adapt: AdaptationState | None = None
    win_dev_sq: float = 0.0
    win_n: int = 0
    win_collisions: int = 0
    prev_level: int | None = None
    prev_fired: bool = False


@dataclass
class ScheduledTx:
    """A reserved (subframe, subchannel) with the packet to build at tx time."""

    node: int
    kind: str
    tx_slot: int
    subchannel: int
    pair: Pair | None = None
    payload: object = None


@dataclass(frozen=True)
class ControlPacket:
    """One leader's acceleration assignments for its whole formation.

    Each command is (follower node, axis, acceleration); axis is -1 for
    vehicles. A follower applies its own entries on the slot after delivery
    and holds the previous command when the broadcast does not reach it.
    """

    leader: int
    commands: tuple[tuple[int, int, float], ...]


@dataclass
class RunResult:
    summary: RunSummary
    trace_path: Path | None = None
    summary_path: Path | None = None


class Engine:
    """One simulation run. Construct, then call run() exactly once."""

    def __init__(self, cfg: ScenarioConfig, mode: str = MODE_PARALLEL,
                 bank: PolicyBank | None = None):
        cfg.validate()
        if mode not in (MODE_PARALLEL, MODE_BASELINE, MODE_EXPLORE):
            raise ValueError(f"unknown mode {mode!r}")
        self.cfg = cfg
        self.mode = mode
        self.pool = ResourcePool(cfg.mac_rri, cfg.mac_subchannels)
        self.measure = ErrorMeasure(cfg.error_measure)
        self.rng_sense = RngStream(cfg.seed, STREAM_SENSING)
        self.rng_select = RngStream(cfg.seed, STREAM_MAC_SELECT)
        self.rng_loss = RngStream(cfg.seed, STREAM_CHANNEL_LOSS)
        self.rng_phase = RngStream(cfg.seed, STREAM_TX_PHASE)
        self.rng_explore = RngStream(cfg.seed, STREAM_EXPLORE)
        self.gains = CaccGains(cfg.w_gap, cfg.w_vel_front, cfg.w_vel_leader,
                               cfg.w_acc_front, cfg.w_acc_leader, cfg.d_des,
                               cfg.accel_min, cfg.accel_max)
        self.link_cfg = LinkConfig(
            dim=3, predicted_mask=(True, True, False), measure=self.measure,
            delta=cfg.delta, decision_period=cfg.decision_period,
            calib_period=cfg.calib_period, correction_period=cfg.correction_period,
            confirm_timeout=cfg.confirm_timeout, confirm_repeats=cfg.confirm_repeats,
            n_input=cfg.n_input, window_capacity=cfg.window_capacity,
            timestamping=cfg.timestamping)
        self._mask = np.asarray(self.link_cfg.predicted_mask, dtype=bool)
        self._sigmas = np.array([cfg.noise_sigma_d, cfg.noise_sigma_v,
                                 cfg.noise_sigma_a])
        self.smart_on = cfg.smart_enabled and mode == MODE_PARALLEL
        self.bank = bank
        self.quantizer = ErrorQuantizer(cfg.smart_levels) if (
            self.smart_on or mode == MODE_EXPLORE) else None
        self.grid = AuxCostGrid(cfg.smart_m_min, cfg.smart_m_max, cfg.smart_m_int)
        if self.smart_on and self.bank is None:
            raise ValueError("adaptive runs need a policy bank (see ensure_bank)")
        self.transitions: list[tuple[int, bool, int]] = []
        self._build_world()
        # MAC plumbing: future transmissions by slot and per-radio subframe
        # occupancy (one radio sends at most one packet per subframe).
        self.agenda: dict[int, list[ScheduledTx]] = {}
        self.busy: set[tuple[int, int]] = set()
        self.used_resources: set[tuple[int, int]] = set()
        self.crashed = False
        self._injected = False
        if mode == MODE_BASELINE:
            self.phases = [int(self.rng_phase.integers(0, cfg.baseline_interval))
                           for _ in self.pairs]

    # ------------------------------------------------------------------ world

    def _build_world(self) -> None:
        cfg = self.cfg
        self.is_uav = cfg.scenario == "uav"
        self.pairs: list[Pair] = []
        parallel = self.mode != MODE_BASELINE

        def make_pair(idx, pair_id, src, dst, front, axis, track, desired):
            s = SourceEndpoint(self.link_cfg) if parallel else None
            d = DestinationEndpoint(self.link_cfg) if parallel else None
            summary = PairSummary(pair_id=pair_id, src=self.node_names[src],
                                  dst=self.node_names[dst])
            if track:
                summary.min_safe_distance = 0.0
                summary.deviation_sq_sum = 0.0
            p = Pair(idx, pair_id, src, dst, front, axis, s, d, summary,
                     track, desired)
            if self.smart_on:
                p.m = cfg.initial_m()
                p.adapt = AdaptationState(
                    m=p.m, delta=cfg.smart_delta if cfg.smart_delta > 0 else None)
            return p

        if self.is_uav:
            n = cfg.uav_count
            self.node_names = [f"u{i}" for i in range(n)]
            off = np.zeros((n, 3))
            for i in range(1, n):
                off[i] = (-cfg.uav_spacing * i, -cfg.uav_spacing * i, 0.0)
            self.uav_offsets = off
            self.pos = off.copy()
            self.vel = np.zeros((n, 3))
            self.applied = np.zeros((n, 3))
            self.pending_cmd: dict = {}
            self.platoons = [list(range(n))]
            idx = 0
            for i in range(1, n):
                for axis in range(3):
                    pid = f"u{i}{UAV_AXES[axis]}"
                    p = make_pair(idx, pid, i, 0, None, axis, False, off[i, axis])
                    p.last_delivered = np.array([self.pos[i, axis], 0.0, 0.0])
                    self.pairs.append(p)
                    idx += 1
        else:
            count = cfg.platoon_count if cfg.scenario == "multi-platoon" else 1
            size = 2 if cfg.scenario == "single-link" else cfg.platoon_size
            self.node_names = []
            self.platoons = []
            n = count * size
            self.pos = np.zeros(n)
            self.vel = np.full(n, float(cfg.initial_speed))
            self.applied = np.zeros(n)
            self.pending_cmd = {}
            idx = 0
            node = 0
            for pnum in range(count):
                members = []
                head = -pnum * cfg.platoon_spacing
                for j in range(size):
                    self.node_names.append(f"p{pnum}v{j}")
                    self.pos[node] = head - j * (cfg.d_des + cfg.vehicle_length)
                    members.append(node)
                    node += 1
                self.platoons.append(members)
                for j in range(1, size):
                    src, dst, front = members[j], members[0], members[j - 1]
                    p = make_pair(idx, self.node_names[src], src, dst, front,
                                  -1, True, cfg.d_des)
                    p.last_delivered = np.array([cfg.d_des, float(cfg.initial_speed),
                                                 0.0])
                    self.pairs.append(p)
                    idx += 1
        self.leaders = [members[0] for members in self.platoons]
        self.followers_of = {members[0]: tuple(members[1:])
                             for members in self.platoons}
        self.pair_by_src = {(p.src_node, p.axis): p for p in self.pairs}
        # Stagger the periodic timers across pairs so calibrations (and
        # corrections) from different links do not all contend for the same
        # selection window. Corrections additionally sit half a period away
        # from calibrations, which matters when the two periods coincide.
        n = len(self.pairs)
        for p in self.pairs:
            p.calib_phase = (p.idx * cfg.calib_period) // n
            if cfg.correction_period:
                p.corr_phase = ((p.idx * cfg.correction_period) // n
                                + cfg.correction_period // 2) % cfg.correction_period

    def _leader_accel(self, t: int):
        cfg = self.cfg
        if cfg.leader_profile == "parabola":
            return leader_accel_parabola(t, cfg.profile_t0, cfg.profile_t1,
                                         cfg.profile_peak)
        if cfg.leader_profile == "schedule":
            return ramp_accel(t, cfg.initial_speed, SCHEDULE_RAMPS)
        if cfg.leader_profile == "uav":
            return np.array([ramp_accel(t, 0.0, UAV_RAMPS[k]) for k in range(3)])
        return np.zeros(3) if self.is_uav else 0.0

    # ------------------------------------------------------------------- MAC

    def _schedule(self, node: int, kind: str, now: int, pair: Pair | None = None,
                  payload: object = None) -> ScheduledTx:
        """Draw a resource in the next selection window for one packet."""
        base = now
        for attempt in range(256):
            tx_slot, subchannel = schedule_transmission(self.pool, base,
                                                        self.rng_select)
            if (node, tx_slot) not in self.busy:
                break
            if attempt % 16 == 15:
                base += self.pool.rri  # window full for this radio: spill over
        else:
            raise RuntimeError("no free subframe found for a transmission")
        st = ScheduledTx(node, kind, tx_slot, subchannel, pair, payload)
        self.busy.add((node, tx_slot))
        self.agenda.setdefault(tx_slot, []).append(st)
        return st

    def _schedule_reply(self, node: int, kind: str, slot: int, pair: Pair,
                        payload: object) -> None:
        """Place a protocol reply at a fixed slot instead of the next window.

        Confirmations answer one slot after receipt (processing delay), so
        they only pick a subchannel; if the radio is already booked for that
        subframe the reply slides to the next free one.
        """
        while (node, slot) in self.busy:
            slot += 1
        subchannel = int(self.rng_select.integers(0, self.pool.subchannels))
        st = ScheduledTx(node, kind, slot, subchannel, pair, payload)
        self.busy.add((node, slot))
        self.agenda.setdefault(slot, []).append(st)

    def _build_packet(self, st: ScheduledTx, t: int):
        """Materialize the packet at transmit time; None if it went stale."""
        p = st.pair
        if st.kind == KIND_STATUS:
            payload = (p.obs if p.src is None else p.src.observed()).copy()
            return StatusOta(p.src_node, p.dst_node, payload, t,
                             p.src.model_stamp if p.src is not None else 0)
        if st.kind == KIND_CALIBRATION:
            model, stamp = st.payload
            if p.src.pending is None or p.src.pending.stamp != stamp:
                return None  # superseded before it ever left the radio
            p.src.calibration_transmitted(t, stamp)
            return ModelCalibration(p.src_node, p.dst_node, model, stamp,
                                    p.src.observed().copy(), t, p.src.model_stamp)
        if st.kind == KIND_CONFIRMATION:
            stamp = st.payload
            c = p.dst.candidate
            if c is None or c.stamp != stamp:
                return None  # a newer proposal superseded this confirmation
            if not self.cfg.mac_feedback:
                p.dst.confirmation_sent(t, stamp, None)
            return ModelConfirmation(p.dst_node, p.src_node, stamp)
        if st.kind == KIND_CORRECTION:
            return Correction(p.src_node, p.dst_node, p.src.model,
                              p.src.model_stamp, p.src.observed().copy(), t)
        if st.kind == KIND_CONTROL:
            return st.payload
        raise AssertionError(st.kind)

    def _mac_phase(self, t: int, trace: TraceWriter | None) -> None:
        due = self.agenda.pop(t, None)
        if not due:
            return
        attempts: list[TxAttempt] = []
        sched: list[ScheduledTx] = []
        for st in due:
            pkt = self._build_packet(st, t)
            if pkt is None:
                continue
            if st.kind == KIND_CONTROL:
                receivers = self.followers_of[st.node]
            elif st.kind == KIND_CONFIRMATION:
                receivers = (st.pair.src_node,)
            else:
                receivers = (st.pair.dst_node,)
            attempts.append(TxAttempt(st.node, st.subchannel, receivers,
                                      st.kind, pkt))
            sched.append(st)
        if not attempts:
            return
        outcomes = self._resolve(attempts, t)
        subframe = str(t % self.pool.rri)
        for st, att, res in zip(sched, attempts, outcomes):
            self.used_resources.add((t, st.subchannel))
            p = st.pair
            s = p.summary if p is not None else None
            if s is not None:
                counter = f"{KIND_PREFIX[st.kind]}_tx"
                setattr(s, counter, getattr(s, counter) + 1)
            row_name = p.pair_id if p is not None else self.node_names[st.node]
            for receiver, outcome in res.items():
                if trace is not None:
                    trace.row(t, row_name, st.kind, subframe,
                              str(st.subchannel),
                              f"{outcome.value}:{self.node_names[receiver]}")
                delivered = outcome is Outcome.DELIVERED
                if delivered:
                    if s is not None:
                        counter = f"{KIND_PREFIX[st.kind]}_delivered"
                        setattr(s, counter, getattr(s, counter) + 1)
                    self._deliver(t, st, att.packet, receiver)
                elif st.kind == KIND_STATUS:
                    if outcome is Outcome.COLLISION:
                        s.status_collisions += 1
                        p.win_collisions += 1
                    elif outcome is Outcome.HALF_DUPLEX:
                        s.status_half_duplex += 1
                    else:
                        s.status_channel_loss += 1
            # Transmitter-side bookkeeping once all receivers are resolved.
            if st.kind in (KIND_STATUS, KIND_CORRECTION):
                p.bearing_tx = att.packet.status
                p.bearing_ack = res.get(p.dst_node) is Outcome.DELIVERED
            elif st.kind == KIND_CONFIRMATION and self.cfg.mac_feedback:
                if res.get(p.src_node) is Outcome.DELIVERED:
                    p.dst.confirmation_sent(t, st.payload, True)

    def _resolve(self, attempts: list[TxAttempt], t: int) -> list[dict[int, Outcome]]:
        outcomes = resolve_subframe(attempts, self.cfg.mac_p_loss, self.rng_loss,
                                    self.cfg.mac_ideal)
        if (not self._injected and self.cfg.inject_loss_slot >= 0
                and t >= self.cfg.inject_loss_slot):
            target = self.pairs[self.cfg.inject_loss_link]
            for att, res in zip(attempts, outcomes):
                if (att.kind == KIND_STATUS and att.packet.src == target.src_node
                        and res.get(att.receivers[0]) is Outcome.DELIVERED):
                    res[att.receivers[0]] = Outcome.CHANNEL_LOSS
                    self._injected = True
                    break
        return outcomes

    def _broadcast_commands(self, t: int, leader: int,
                            cmds: list[tuple[int, int, float]]) -> None:
        """Queue one control broadcast and record the leader's assumptions.

        The leader knows its own transmit slot at reservation time, so each
        destination endpoint assumes the command takes effect one slot after
        that, whether or not the broadcast actually reaches the follower; a
        lost broadcast leaves the follower holding the previous command and
        the two ends disagree about the exogenous input until the next
        delivered one.
        """
        st = self._schedule(leader, KIND_CONTROL, t, None,
                            ControlPacket(leader, tuple(cmds)))
        for node, axis, accel in cmds:
            pair = self.pair_by_src.get((node, axis))
            if pair is not None:
                pair.assumed_queue.append((st.tx_slot + 1, accel))

    def _deliver(self, t: int, st: ScheduledTx, pkt, receiver: int) -> None:
        if st.kind == KIND_CONTROL:
            for node, axis, accel in pkt.commands:
                if node == receiver:
                    key = (node, axis) if self.is_uav else node
                    self.pending_cmd[key] = (t + 1, accel)
            return
        p = st.pair
        if st.kind == KIND_STATUS:
            p.last_delivered = np.array(pkt.status, dtype=np.float64)
            p.freshest_stamp = pkt.stamp
            if p.dst is not None:
                p.dst.on_status(t, pkt)
        elif st.kind == KIND_CALIBRATION:
            stamp = p.dst.on_calibration(t, pkt)
            if stamp is not None:
                for k in range(self.cfg.confirm_repeats):
                    self._schedule_reply(p.dst_node, KIND_CONFIRMATION,
                                         t + 1 + k, p, stamp)
        elif st.kind == KIND_CORRECTION:
            p.last_delivered = np.array(pkt.status, dtype=np.float64)
            p.freshest_stamp = pkt.stamp
            p.dst.on_correction(t, pkt)
        elif st.kind == KIND_CONFIRMATION:
            p.src.on_confirmation(t, pkt.calib_stamp)

    # ----------------------------------------------------------------- phases

    def _plant_and_sense(self, t: int) -> None:
        cfg = self.cfg
        lead_a = self._leader_accel(t)
        for key, (eff, a) in list(self.pending_cmd.items()):
            if eff <= t:
                self.applied[key] = a
                del self.pending_cmd[key]
        if self.is_uav:
            self.applied[0] = np.clip(lead_a, -cfg.uav_accel_limit,
                                      cfg.uav_accel_limit)
        else:
            for leader in self.leaders:
                self.applied[leader] = lead_a
        self.vel += self.applied * DT
        self.pos += self.vel * DT
        for p in self.pairs:
            while p.assumed_queue and p.assumed_queue[0][0] <= t:
                p.assumed_accel = p.assumed_queue.pop(0)[1]
            if self.is_uav:
                i, k = p.src_node, p.axis
                true = np.array([self.pos[i, k], self.vel[i, k], self.applied[i, k]])
            else:
                i = p.src_node
                gap = self.pos[p.front_node] - self.pos[i] - cfg.vehicle_length
                if gap <= 0.0:
                    self.crashed = True
                true = np.array([gap, self.vel[i], self.applied[i]])
            p.true_status = true
            p.obs = true + self._sigmas * self.rng_sense.normal(size=3)

    def _source_phase(self, t: int, trace: TraceWriter | None) -> None:
        cfg = self.cfg
        epoch = t % cfg.decision_period == 0
        for p in self.pairs:
            p.bearing_tx = None
            p.bearing_ack = False
            if self.mode == MODE_BASELINE:
                if t % cfg.baseline_interval == self.phases[p.idx]:
                    p.summary.decisions.append(t)
                    if trace is not None:
                        trace.row(t, p.pair_id, EVENT_TRIGGER)
                    self._schedule(p.src_node, KIND_STATUS, t, p)
                continue
            # Exogenous acceleration: the follower rolls with the accel it is
            # actually applying (commanded, so noise-free), mirroring the
            # destination's use of the assumed command.
            p.src.begin_slot(t, p.obs, float(p.true_status[2]))
            p.dst.begin_slot(t, p.assumed_accel)
            if epoch:
                err = p.src.trigger_error()
                fire = err > cfg.delta
                if self.mode == MODE_EXPLORE:
                    level = self.quantizer.index(err)
                    if p.prev_level is not None:
                        self.transitions.append((p.prev_level, p.prev_fired, level))
                    fire = fire and self.rng_explore.random() < 0.5
                    p.prev_level, p.prev_fired = level, fire
                elif self.smart_on:
                    fire = fire and smart_tx_gate(self.bank, self.quantizer,
                                                  p.m, err)
                if fire:
                    p.summary.decisions.append(t)
                    if trace is not None:
                        trace.row(t, p.pair_id, EVENT_TRIGGER, error=fmt(err),
                                  m="" if p.m is None else fmt(p.m))
                    self._schedule(p.src_node, KIND_STATUS, t, p)
            due_calib = (t >= cfg.calib_period
                         and t % cfg.calib_period == p.calib_phase)
            if (not due_calib and epoch and p.src.pending is None
                    and (p.src.model_stamp == 0
                         or t - p.src.model_stamp >= cfg.calib_period)):
                # Retry state: the handshake for the last period's model was
                # lost (or the first one has not completed yet), so propose
                # again at every epoch once the sample window has filled.
                # Waiting out a whole period after every lost confirmation
                # would leave the link on a stale model for most of a
                # congested stretch, and stale models mispredict, which keeps
                # the channel congested.
                due_calib = len(p.src.window) >= cfg.window_capacity
            if due_calib:
                model = p.src.make_calibration(t)
                if model is not None:
                    self._schedule(p.src_node, KIND_CALIBRATION, t, p, (model, t))
            if (cfg.correction_period and t >= cfg.correction_period
                    and t % cfg.correction_period == p.corr_phase):
                self._schedule(p.src_node, KIND_CORRECTION, t, p)

    def _finalize_phase(self, t: int, trace: TraceWriter | None) -> None:
        cfg = self.cfg
        boundary = self.smart_on and (t + 1) % cfg.smart_eval_interval == 0
        for p in self.pairs:
            if self.mode == MODE_BASELINE:
                p.est_src = p.obs
                p.est_dst = p.last_delivered
            else:
                delivered = None
                if p.bearing_tx is not None and (not cfg.mac_feedback
                                                 or p.bearing_ack):
                    delivered = p.bearing_tx
                p.est_src = p.src.end_slot(t, delivered)
                p.est_dst = p.dst.end_slot(t)
            s = p.summary
            if p.est_src.tobytes() != p.est_dst.tobytes():
                p.mis_run += 1
                s.misaligned_slots += 1
                if p.mis_run > s.max_misaligned_span:
                    s.max_misaligned_span = p.mis_run
            else:
                p.mis_run = 0
            err = vector_error(p.true_status[self._mask], p.est_dst[self._mask],
                               self.measure)
            s.recovery_err_sum += err
            if err > s.recovery_err_max:
                s.recovery_err_max = err
            if p.track_distance:
                gap = p.true_status[0]
                if gap < p.min_gap:
                    p.min_gap = gap
                dev = gap - p.desired
                s.deviation_sq_sum += dev * dev
                if self.smart_on:
                    p.win_dev_sq += dev * dev
                    p.win_n += 1
            if p.freshest_stamp is not None:
                s.aoi_sum += t - p.freshest_stamp
                s.aoi_slots += 1
            if self.smart_on:
                s.final_m = p.m
            if trace is not None:
                trace.row(t, p.pair_id, EVENT_STATE,
                          s=tuple(fmt(x) for x in p.true_status),
                          shat=tuple(fmt(x) for x in p.est_src),
                          shatp=tuple(fmt(x) for x in p.est_dst),
                          error=fmt(err), m="" if p.m is None else fmt(p.m))
            if boundary:
                s.m_trajectory.append(p.m)
                if p.win_n:
                    cost = math.sqrt(p.win_dev_sq / p.win_n)
                    s.window_costs.append(cost)
                    if cfg.smart_adapt:
                        p.m = p.adapt.observe_window(cost, p.win_collisions,
                                                     self.grid)
                p.win_dev_sq, p.win_n, p.win_collisions = 0.0, 0, 0

    def _control_phase(self, t: int) -> None:
        cfg = self.cfg
        if t % cfg.control_period != 0:
            return
        if self.is_uav:
            cmds = []
            for p in self.pairs:
                est = self._control_estimate(p)
                target = self.pos[0, p.axis] + self.uav_offsets[p.src_node, p.axis]
                a = (cfg.uav_kp * (target - float(est[0]))
                     + cfg.uav_kd * (self.vel[0, p.axis] - float(est[1])))
                a = float(min(max(a, -cfg.uav_accel_limit), cfg.uav_accel_limit))
                cmds.append((p.src_node, p.axis, a))
            if cmds:
                self._broadcast_commands(t, 0, cmds)
            return
        lead_a = float(self._leader_accel(t))
        for members, leader in zip(self.platoons, self.leaders):
            a_front = lead_a
            v_front = float(self.vel[leader])
            cmds = []
            for node in members[1:]:
                p = self.pair_by_src[(node, -1)]
                est = self._control_estimate(p)
                a = cacc_accel(self.gains, float(est[0]), float(est[1]), v_front,
                               float(self.vel[leader]), a_front, lead_a)
                cmds.append((node, -1, a))
                a_front = a
                v_front = float(est[1])
            if cmds:
                self._broadcast_commands(t, leader, cmds)

    def _control_estimate(self, p: Pair) -> np.ndarray:
        """Recovered status the controller acts on.

        While the destination is running the all-zero starting model (first
        handshake not completed yet, or reverted to it after a failed one)
        its rolling prediction is useless, so the controller holds the last
        delivered raw status instead, exactly as the model-free baseline does
        at every slot.
        """
        if p.dst is not None and p.dst.model_stamp > 0:
            return p.est_dst
        return p.last_delivered

    # -------------------------------------------------------------------- run

    def run(self, trace: TraceWriter | None = None) -> RunSummary:
        cfg = self.cfg
        for t in range(cfg.duration_slots):
            self._plant_and_sense(t)
            self._source_phase(t, trace)
            self._mac_phase(t, trace)
            self._finalize_phase(t, trace)
            self._control_phase(t)
        n_windows = math.ceil(cfg.duration_slots / self.pool.rri)
        summary = RunSummary(
            scenario=cfg.scenario, mode=self.mode, seed=cfg.seed,
            duration_slots=cfg.duration_slots, crashed=self.crashed,
            n_windows=n_windows,
            occupancy=(len(self.used_resources) / (n_windows * self.pool.size)
                       if n_windows else 0.0),
            constants={
                "error_measure": cfg.error_measure,
                "predicted_mask": list(self.link_cfg.predicted_mask),
                "d_des": cfg.d_des,
                "eval_interval": cfg.smart_eval_interval,
                "pool_size": self.pool.size,
                "mac_rri": cfg.mac_rri,
                "delta": cfg.delta,
            })
        for p in self.pairs:
            if p.track_distance:
                p.summary.min_safe_distance = (
                    p.desired - p.min_gap if p.min_gap != math.inf else 0.0)
            summary.pairs.append(p.summary)
        return summary


# --------------------------------------------------------------------- driver

def ensure_bank(cfg: ScenarioConfig) -> PolicyBank:
    """Load or build the adaptive scheduler's policy bank for this config.

    The per-node transition model is estimated from a short exploratory run
    of the same scenario with a coin-flip transmit gate, then solved for every
    auxiliary cost on the grid. Banks persist as JSON keyed by a model hash.
    """
    path = Path(cfg.smart_bank_path) if cfg.smart_bank_path else None
    if path is not None and path.exists():
        return PolicyBank.load(path)
    explore_cfg = dataclasses.replace(
        cfg, duration_slots=min(cfg.duration_slots, cfg.smart_explore_slots),
        smart_enabled=False, write_trace=False, inject_loss_slot=-1)
    eng = Engine(explore_cfg, mode=MODE_EXPLORE)
    eng.run(None)
    model = estimate_node_model(eng.transitions, ErrorQuantizer(cfg.smart_levels))
    bank = build_policy_bank(
        model, AuxCostGrid(cfg.smart_m_min, cfg.smart_m_max, cfg.smart_m_int))
    if path is not None:
        bank.save(path)
    return bank


def run(cfg: ScenarioConfig, out_dir: str | Path | None = None,
        mode: str = MODE_PARALLEL) -> RunResult:
    """One full simulation; writes trace.csv and summary.json under out_dir."""
    bank = None
    if cfg.smart_enabled and mode == MODE_PARALLEL:
        bank = ensure_bank(cfg)
    engine = Engine(cfg, mode, bank)
    trace = None
    trace_path = summary_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary_path = out / "summary.json"
        if cfg.write_trace:
            trace_path = out / "trace.csv"
            trace = TraceWriter(trace_path)
    try:
        summary = engine.run(trace)
    finally:
        if trace is not None:
            trace.close()
    if summary_path is not None:
        summary_path.write_text(summary.dumps())
    return RunResult(summary, trace_path, summary_path)


def run_baseline(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> RunResult:
    return run(cfg, out_dir, mode=MODE_BASELINE)


def sweep(cfg: ScenarioConfig, param: str, values, out_dir: str | Path | None = None,
          mode: str = MODE_PARALLEL) -> list[RunResult]:
    """One run per parameter value, common seed, optional per-value out dirs."""
    results = []
    for v in values:
        sub = dataclasses.replace(cfg, **{param: v}).validate()
        sub_dir = Path(out_dir) / f"{param}-{v}" if out_dir is not None else None
        results.append(run(sub, sub_dir, mode))
    return results
