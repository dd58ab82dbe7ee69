"""Shared primitives: the slotted clock, status vectors, error measures, RNG streams.

One slot is 1 ms of simulated time; slot 0 is the start of a run. All other
modules count time in slots and convert to seconds only inside the plant
integrator.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

# Time in slots. Kept as a plain int; the alias is documentation, not a wrapper.
Slot = int

_MASK64 = (1 << 64) - 1


class ErrorMeasure(Enum):
    """Distance between a status and its estimate: elementwise L1 or L2."""

    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class StatusVector:
    """A sampled (or estimated) status with the slot it refers to."""

    values: np.ndarray
    stamp: Slot

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("status values must be a flat vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("status components must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "stamp", int(self.stamp))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def vector_error(a: np.ndarray, b: np.ndarray, measure: ErrorMeasure = ErrorMeasure.L1) -> float:
    """Error between two raw component arrays (no stamp semantics)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    if measure is ErrorMeasure.L1:
        return float(np.sum(np.abs(d)))
    return float(np.sqrt(np.sum(d * d)))


def status_error(a: StatusVector, b: StatusVector, measure: ErrorMeasure = ErrorMeasure.L1) -> float:
    """Error between two statuses; stamps are not compared."""
    return vector_error(a.values, b.values, measure)


class RngStream:
    """A named Philox substream.

    Draw values depend only on (seed, stream_id, draw index within the
    stream), so adding draws to one subsystem never shifts another
    subsystem's sequence. Each stochastic subsystem gets its own stream id.
    """

    def __init__(self, seed: int, stream_id: int):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.draws = 0

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray | float:
        self.draws += 1
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int) -> int:
        """One uniform integer in [low, high)."""
        self.draws += 1
        return int(self._gen.integers(low, high))

    def random(self) -> float:
        """One uniform float in [0, 1)."""
        self.draws += 1
        return float(self._gen.random())


# Stream ids, one per stochastic subsystem. Keeping them centralized avoids
# accidental reuse of the same (seed, id) pair by two subsystems.
STREAM_SENSING = 0
STREAM_MAC_SELECT = 1
STREAM_CHANNEL_LOSS = 2
STREAM_TX_PHASE = 3
STREAM_EXPLORE = 4


def add_sensing_noise(s: StatusVector, sigmas: Sequence[float], rng: RngStream) -> StatusVector:
    """Gaussian observation noise, one sigma per component (sigma 0 = exact)."""
    sig = np.asarray(sigmas, dtype=np.float64)
    if sig.shape != s.values.shape:
        raise ValueError(f"sigma shape {sig.shape} does not match status {s.values.shape}")
    if np.any(sig < 0):
        raise ValueError("noise sigma must be non-negative")
    noisy = s.values + sig * rng.normal(size=s.values.shape)
    return StatusVector(noisy, s.stamp)
