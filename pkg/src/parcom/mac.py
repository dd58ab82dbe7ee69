"""Simplified C-V2X mode-4 style medium access.

Resources form a grid of ``rri`` subframes (slots) by ``subchannels``. A node
wanting to send picks one resource uniformly at random and transmits at that
subframe of the next selection window. There are no semi-persistent
reselection counters: every packet draws a fresh resource.

Per subframe, outcome rules in priority order:
  1. two or more attempts on the same subchannel collide, for every receiver;
  2. a receiver that itself transmitted anywhere in this subframe hears nothing
     (half duplex);
  3. otherwise the packet is delivered, except an independent channel loss
     with probability ``p_loss`` per receiver.

``ideal=True`` bypasses all three (every attempt delivered to every listed
receiver), which is the lossless-channel configuration used by alignment
tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .core import RngStream, Slot


@dataclass(frozen=True)
class ResourcePool:
    rri: int = 10           # selection window length in slots
    subchannels: int = 2

    def __post_init__(self):
        if self.rri < 1 or self.subchannels < 1:
            raise ValueError("resource pool must have at least one resource")

    @property
    def size(self) -> int:
        return self.rri * self.subchannels


class Outcome(Enum):
    DELIVERED = "delivered"
    COLLISION = "collision"
    HALF_DUPLEX = "half_duplex"
    CHANNEL_LOSS = "channel_loss"


@dataclass
class TxAttempt:
    """One transmission in one subframe."""

    transmitter: int
    subchannel: int
    receivers: tuple[int, ...]
    kind: str = ""
    packet: object | None = None


def select_resource(pool: ResourcePool, rng: RngStream) -> tuple[int, int]:
    """Uniform draw over the rri x subchannels grid -> (subframe, subchannel)."""
    r = rng.integers(0, pool.size)
    return r // pool.subchannels, r % pool.subchannels


def schedule_transmission(pool: ResourcePool, now: Slot, rng: RngStream) -> tuple[Slot, int]:
    """Pick a resource for a packet enqueued at ``now``.

    Returns the absolute transmit slot (within the next window after ``now``)
    and the subchannel.
    """
    subframe, subchannel = select_resource(pool, rng)
    window_start = (now // pool.rri + 1) * pool.rri
    return window_start + subframe, subchannel


def resolve_subframe(attempts: Sequence[TxAttempt], p_loss: float = 0.0,
                     rng: RngStream | None = None, ideal: bool = False,
                     ) -> list[dict[int, Outcome]]:
    """Outcome of every attempt at every intended receiver for one subframe."""
    if p_loss > 0.0 and rng is None and not ideal:
        raise ValueError("p_loss > 0 needs an rng")
    if ideal:
        return [{r: Outcome.DELIVERED for r in a.receivers} for a in attempts]
    by_channel: dict[int, int] = {}
    for a in attempts:
        by_channel[a.subchannel] = by_channel.get(a.subchannel, 0) + 1
    transmitters = {a.transmitter for a in attempts}
    out: list[dict[int, Outcome]] = []
    for a in attempts:
        res: dict[int, Outcome] = {}
        collided = by_channel[a.subchannel] >= 2
        for r in a.receivers:
            if collided:
                res[r] = Outcome.COLLISION
            elif r in transmitters:
                res[r] = Outcome.HALF_DUPLEX
            elif p_loss > 0.0 and rng.random() < p_loss:
                res[r] = Outcome.CHANNEL_LOSS
            else:
                res[r] = Outcome.DELIVERED
        out.append(res)
    return out


def occupancy(used_resources: Iterable[tuple[Slot, int]], pool: ResourcePool,
              n_windows: int) -> float:
    """Fraction of pool resources carrying at least one attempt.

    ``used_resources`` are (absolute slot, subchannel) pairs over ``n_windows``
    consecutive windows; multiple attempts on one resource count once.
    """
    if n_windows < 1:
        raise ValueError("need at least one window")
    used = len(set(used_resources))
    return used / (n_windows * pool.size)
