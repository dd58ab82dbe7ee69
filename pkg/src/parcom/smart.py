"""Adaptive transmission pricing: per-node average-cost MDPs over error levels.

Each source's transmit decision is modeled as a two-action average-cost MDP on
quantized prediction-error levels: stay silent and drift, or transmit (paying
an auxiliary cost m) and reset toward the noise floor. Policies are solved by
relative value iteration for every m on a grid and stored in a bank; at run
time a supervising destination nudges each source's m up or down from observed
cost and collision trends, and the source gates its over-the-air status
transmissions with the banked policy for its current m.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class AuxCostGrid:
    """Admissible auxiliary costs: m_min, m_min + m_int, ..., m_max."""

    m_min: float = 0.0
    m_max: float = 4.0
    m_int: float = 0.5

    def __post_init__(self):
        if self.m_int <= 0 or self.m_max < self.m_min:
            raise ValueError("need m_int > 0 and m_max >= m_min")

    def points(self) -> np.ndarray:
        n = int(round((self.m_max - self.m_min) / self.m_int)) + 1
        return self.m_min + self.m_int * np.arange(n)

    def clamp(self, m: float) -> float:
        return float(min(max(m, self.m_min), self.m_max))

    def nearest(self, m: float) -> float:
        pts = self.points()
        return float(pts[int(np.argmin(np.abs(pts - m)))])


@dataclass(frozen=True)
class ErrorQuantizer:
    """Maps a scalar prediction error onto representative grid levels."""

    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        if len(lv) < 2 or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be at least 2 strictly increasing values")
        object.__setattr__(self, "levels", lv)

    @property
    def n(self) -> int:
        return len(self.levels)

    def index(self, error: float) -> int:
        """Nearest level; exact midpoints resolve to the lower level."""
        arr = np.asarray(self.levels)
        d = np.abs(arr - error)
        return int(np.argmin(d))


@dataclass(frozen=True)
class NodeModel:
    """Ingredients of one node's decoupled MDP (row-stochastic transitions)."""

    p_silent: np.ndarray     # (n, n)
    p_transmit: np.ndarray   # (n, n)
    cost: np.ndarray         # (n,) per-slot holding cost of each error level
    levels: tuple[float, ...]

    def __post_init__(self):
        for name in ("p_silent", "p_transmit"):
            p = np.asarray(getattr(self, name), dtype=np.float64)
            if p.ndim != 2 or p.shape[0] != p.shape[1]:
                raise ValueError(f"{name} must be square")
            if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError(f"{name} rows must be probability distributions")
            object.__setattr__(self, name, p)
        object.__setattr__(self, "cost", np.asarray(self.cost, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    def digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.p_silent, self.p_transmit, self.cost, np.asarray(self.levels)):
            h.update(np.ascontiguousarray(part, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class MdpSolution:
    transmit: np.ndarray  # (n,) bool policy
    f: np.ndarray         # relative value function, f[0] == 0
    j_star: float         # optimal average cost per slot
    sweeps: int


def _bellman_terms(model: NodeModel, m: float, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q_silent = model.cost + model.p_silent @ f
    q_transmit = m + model.cost + model.p_transmit @ f
    return q_silent, q_transmit


def bellman_residual(model: NodeModel, m: float, f: np.ndarray) -> float:
    """Span seminorm of (Tf - f); zero iff (f, J) solves the optimality equation."""
    q0, q1 = _bellman_terms(model, m, f)
    r = np.minimum(q0, q1) - f
    return float(r.max() - r.min())


def solve_decoupled_mdp(model: NodeModel, m: float, tol: float = 1e-8,
                        max_sweeps: int = 100_000) -> MdpSolution:
    """Relative value iteration on one node's two-action average-cost MDP.

    Sweeps use the damped operator (1-tau) I + tau T, which has the same
    optimal policies and relative values but is aperiodic, so the iteration
    converges in span seminorm even for periodic chains. Stops when the span
    of the undamped Bellman update falls below ``tol``; ties between actions
    resolve to silent.
    """
    tau = 0.5
    n = model.n
    f = np.zeros(n)
    c0 = tau * model.cost
    c1 = tau * (model.cost + m)
    p0 = tau * model.p_silent
    p1 = tau * model.p_transmit
    for sweep in range(1, max_sweeps + 1):
        w = np.minimum(c0 + p0 @ f, c1 + p1 @ f) + (1.0 - tau) * f
        delta = w - f
        span = float(delta.max() - delta.min())
        f = w - w[0]
        if span <= tol * tau:
            q0, q1 = _bellman_terms(model, m, f)
            r = np.minimum(q0, q1) - f
            j = float((r.max() + r.min()) / 2.0)
            return MdpSolution(q1 < q0, f, j, sweep)
    raise RuntimeError(
        f"relative value iteration did not reach span {tol} in {max_sweeps} sweeps "
        f"(m={m}); the transition model is likely not unichain")


@dataclass
class PolicyBank:
    """Solved policies for every auxiliary cost on the grid, persistable."""

    model: NodeModel
    grid: AuxCostGrid
    solutions: dict[float, MdpSolution]
    model_hash: str

    def policy_for(self, m: float) -> np.ndarray:
        """Transmit policy at the nearest grid point to m."""
        return self.solutions[self.grid.nearest(m)].transmit

    def save(self, path: str | Path) -> None:
        doc = {
            "format_version": 1,
            "model_hash": self.model_hash,
            "grid": [self.grid.m_min, self.grid.m_max, self.grid.m_int],
            "levels": list(self.model.levels),
            "cost": self.model.cost.tolist(),
            "p_silent": self.model.p_silent.tolist(),
            "p_transmit": self.model.p_transmit.tolist(),
            "solutions": {
                repr(m): {
                    "transmit": [int(x) for x in sol.transmit],
                    "f": sol.f.tolist(),
                    "j_star": sol.j_star,
                    "sweeps": sol.sweeps,
                }
                for m, sol in self.solutions.items()
            },
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "PolicyBank":
        doc = json.loads(Path(path).read_text())
        if doc.get("format_version") != 1:
            raise ValueError(f"unsupported bank format: {doc.get('format_version')}")
        model = NodeModel(np.array(doc["p_silent"]), np.array(doc["p_transmit"]),
                          np.array(doc["cost"]), tuple(doc["levels"]))
        if model.digest() != doc["model_hash"]:
            raise ValueError("bank file does not match its recorded model hash")
        grid = AuxCostGrid(*doc["grid"])
        sols = {}
        for key, s in doc["solutions"].items():
            sols[float(key)] = MdpSolution(np.array(s["transmit"], dtype=bool),
                                           np.array(s["f"]), s["j_star"], s["sweeps"])
        return cls(model, grid, sols, doc["model_hash"])


def build_policy_bank(model: NodeModel, grid: AuxCostGrid, tol: float = 1e-8,
                      residual_tol: float = 1e-6) -> PolicyBank:
    """Solve every grid point and verify each solution's Bellman residual."""
    sols: dict[float, MdpSolution] = {}
    for m in grid.points():
        m = float(m)
        sol = solve_decoupled_mdp(model, m, tol=tol)
        res = bellman_residual(model, m, sol.f)
        if res > residual_tol:
            raise RuntimeError(f"banked policy at m={m} has Bellman residual {res:.2e}")
        sols[m] = sol
    return PolicyBank(model, grid, sols, model.digest())


def smart_tx_gate(bank: PolicyBank, quantizer: ErrorQuantizer, m: float,
                  error: float) -> bool:
    """True if the banked policy for m transmits at this error level."""
    return bool(bank.policy_for(m)[quantizer.index(error)])


@dataclass
class AdaptationState:
    """One supervising destination's view of its source's auxiliary cost."""

    m: float
    delta: float | None = None      # None: set to 5% of the first window's cost
    cost_prev: float | None = None
    collisions_prev: int = 0

    def observe_window(self, window_cost: float, window_collisions: int,
                       grid: AuxCostGrid) -> float:
        """One evaluation-window update; returns the (possibly unchanged) new m."""
        if self.cost_prev is None:
            if self.delta is None:
                self.delta = 0.05 * window_cost
            self.cost_prev = window_cost
            self.collisions_prev = window_collisions
            return self.m
        rise = window_cost - self.cost_prev
        collisions_increased = window_collisions > self.collisions_prev
        if rise > self.delta and collisions_increased:
            self.m = grid.clamp(self.m + grid.m_int)
        elif abs(rise) < self.delta:
            pass
        else:
            self.m = grid.clamp(self.m - grid.m_int)
        self.cost_prev = window_cost
        self.collisions_prev = window_collisions
        return self.m


def estimate_node_model(transitions, quantizer: ErrorQuantizer,
                        floor_index: int = 0) -> NodeModel:
    """Frequency-count transition estimation from calibration-run samples.

    ``transitions`` yields (level_index, transmitted, next_level_index) per
    decision epoch. Rows never visited fall back to priors that keep the MDP
    well posed: unseen silent rows drift one level up, unseen transmit rows
    reset to the noise floor.
    """
    n = quantizer.n
    counts = np.zeros((2, n, n))
    for x, u, y in transitions:
        counts[int(bool(u)), x, y] += 1.0
    mats = []
    for action in (0, 1):
        p = np.zeros((n, n))
        for x in range(n):
            row = counts[action, x]
            total = row.sum()
            if total > 0:
                p[x] = row / total
            elif action == 0:
                p[x, min(x + 1, n - 1)] = 1.0
            else:
                p[x, floor_index] = 1.0
        mats.append(p)
    cost = np.asarray(quantizer.levels, dtype=np.float64)
    return NodeModel(mats[0], mats[1], cost, quantizer.levels)


def whittle_index(model: NodeModel, state: int, m_hi: float, tol: float = 1e-4) -> float:
    """Critical auxiliary cost at which this state flips from transmit to silent.

    Bisection over m; assumes the model is indexable (the transmit set shrinks
    as m grows), which holds for the monotone drift/reset chains used here.
    """
    lo, hi = 0.0, float(m_hi)
    if not solve_decoupled_mdp(model, lo).transmit[state]:
        return 0.0
    if solve_decoupled_mdp(model, hi).transmit[state]:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if solve_decoupled_mdp(model, mid).transmit[state]:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
