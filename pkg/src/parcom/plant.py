"""Vehicle and UAV motion plus the platoon acceleration law.

Integration is semi-implicit Euler at the slot period: velocity first, then
position with the updated velocity. With piecewise-constant acceleration the
velocity trace is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DT = 1e-3  # seconds per slot


@dataclass(frozen=True)
class VehicleState:
    position: float      # m, along-road coordinate of the front bumper
    velocity: float      # m/s
    acceleration: float  # m/s^2 applied during the last step
    length: float = 5.0  # m

    def gap_to(self, front: "VehicleState") -> float:
        """Bumper-to-bumper distance to the vehicle ahead."""
        return front.position - self.position - front.length


@dataclass(frozen=True)
class CaccGains:
    """Weights of the five feedback/feedforward terms of the platoon law."""

    w_gap: float = -0.5        # on (d_des - d_n)
    w_vel_front: float = -0.6  # on (v_n - v_{n-1})
    w_vel_leader: float = -0.2  # on (v_n - v_leader)
    w_acc_front: float = 0.4   # on a_des,{n-1}
    w_acc_leader: float = 0.1  # on a_des,leader
    d_des: float = 10.0        # m
    a_min: float = -2.94       # m/s^2
    a_max: float = 4.0


def cacc_accel(gains: CaccGains, d_hat: float, v_hat: float, v_hat_front: float,
               v_leader: float, a_des_front: float, a_des_leader: float) -> float:
    """Commanded acceleration for one follower, clamped to the actuator range."""
    a = (gains.w_gap * (gains.d_des - d_hat)
         + gains.w_vel_front * (v_hat - v_hat_front)
         + gains.w_vel_leader * (v_hat - v_leader)
         + gains.w_acc_front * a_des_front
         + gains.w_acc_leader * a_des_leader)
    return float(min(max(a, gains.a_min), gains.a_max))


def leader_accel_parabola(t: int, t0: int, t1: int, peak: float,
                          normalized: bool = True) -> float:
    """Parabolic acceleration pulse over slots [t0, t1], zero outside.

    Normalized form peaks at ``peak`` at the midpoint and vanishes at both
    ends. ``normalized=False`` keeps the raw product form
    ``peak * (t1 - t) * (t - t0)`` whose maximum scales with the pulse width
    squared; it exists for auditing against the printed coefficient form.
    """
    if t1 <= t0:
        raise ValueError("pulse needs t1 > t0")
    if t < t0 or t > t1:
        return 0.0
    raw = (t1 - t) * (t - t0)
    if not normalized:
        return peak * raw
    return peak * 4.0 * raw / float(t1 - t0) ** 2


def kinematics_step(state: VehicleState, accel: float, dt: float = DT) -> VehicleState:
    """One integration step under the given applied acceleration."""
    v = state.velocity + accel * dt
    x = state.position + v * dt
    return VehicleState(x, v, accel, state.length)


def euler_step(pos: np.ndarray, vel: np.ndarray, accel: np.ndarray,
               dt: float = DT) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized form of kinematics_step for a whole fleet (in place)."""
    vel += accel * dt
    pos += vel * dt
    return pos, vel


@dataclass
class UavState:
    """Point mass in three axes; arrays are (3,)."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def uav_step(state: UavState, accel: np.ndarray, a_min: float = -4.0,
             a_max: float = 4.0, dt: float = DT) -> UavState:
    a = np.clip(np.asarray(accel, dtype=np.float64), a_min, a_max)
    v = state.velocity + a * dt
    p = state.position + v * dt
    return UavState(p, v, a)


@dataclass(frozen=True)
class SpeedRamp:
    """One piecewise-linear speed segment: reach v_end at t_end (slots)."""

    t_end: int
    v_end: float


def ramp_accel(t: int, v0: float, ramps: tuple[SpeedRamp, ...]) -> float:
    """Acceleration at slot t for a piecewise-linear speed schedule.

    Each ramp runs from the previous ramp's end (speed and time) to its own;
    after the last ramp the speed holds.
    """
    t_prev, v_prev = 0, v0
    for r in ramps:
        if t < r.t_end:
            return (r.v_end - v_prev) / ((r.t_end - t_prev) * DT)
        t_prev, v_prev = r.t_end, r.v_end
    return 0.0


def min_safe_distance(gaps: np.ndarray, d_des: float) -> float:
    """Worst encroachment below the desired gap over a run.

    Negative when every gap stayed above the desired distance; kept signed so
    that sweeps can still rank runs that never encroached.
    """
    g = np.asarray(gaps, dtype=np.float64)
    if g.size == 0:
        return 0.0
    return float(d_des - g.min())


def has_crash(gaps: np.ndarray) -> bool:
    """True if any bumper-to-bumper gap went non-positive."""
    g = np.asarray(gaps, dtype=np.float64)
    return bool(g.size > 0 and g.min() <= 0.0)
