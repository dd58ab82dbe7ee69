"""Canned scenario configurations.

Four shipped setups: a two-vehicle link, a three-vehicle platoon, a
multi-platoon highway, and a ten-UAV formation. Each builder returns a
ScenarioConfig that a run can use as-is or override per key.
"""
from __future__ import annotations

import dataclasses

from .config import ScenarioConfig


def single_link(seed: int = 1, **overrides) -> ScenarioConfig:
    """Two vehicles, one status link, parabolic leader pulse."""
    cfg = ScenarioConfig(
        scenario="single-link",
        seed=seed,
        duration_slots=5000,
        delta=0.1,
        calib_period=100,
        correction_period=1000,
        platoon_count=1,
        platoon_size=2,
        leader_profile="parabola",
        profile_t0=478,
        profile_t1=2478,
        profile_peak=4.0,
    )
    return dataclasses.replace(cfg, **overrides).validate()


def platoon(seed: int = 1, **overrides) -> ScenarioConfig:
    """Leader plus two followers, later leader pulse, looser trigger."""
    cfg = ScenarioConfig(
        scenario="platoon",
        seed=seed,
        duration_slots=8000,
        delta=0.15,
        calib_period=100,
        correction_period=1000,
        platoon_count=1,
        platoon_size=3,
        leader_profile="parabola",
        profile_t0=2400,
        profile_t1=4000,
        profile_peak=4.0,
    )
    return dataclasses.replace(cfg, **overrides).validate()


def multi_platoon(seed: int = 1, platoons: int = 3, **overrides) -> ScenarioConfig:
    """Highway of 8-vehicle platoons driving the full speed schedule.

    Refits are frequent (100 ms) and the sample window long (500 samples):
    with 21 links sharing two subchannels a stale or ill-conditioned model
    misfires often enough to congest the pool for everyone, so model upkeep
    is cheaper than the retransmissions it prevents.
    """
    cfg = ScenarioConfig(
        scenario="multi-platoon",
        seed=seed,
        duration_slots=35000,
        delta=0.15,
        calib_period=100,
        correction_period=500,
        window_capacity=500,
        platoon_count=platoons,
        platoon_size=8,
        leader_profile="schedule",
        write_trace=False,
    )
    return dataclasses.replace(cfg, **overrides).validate()


def uav_formation(seed: int = 1, **overrides) -> ScenarioConfig:
    """Ten UAVs, three per-axis links each, noiseless sensing."""
    cfg = ScenarioConfig(
        scenario="uav",
        seed=seed,
        duration_slots=8000,
        delta=0.1,
        calib_period=1000,
        correction_period=1000,
        noise_sigma_d=0.0,
        noise_sigma_v=0.0,
        uav_count=10,
        leader_profile="uav",
        write_trace=False,
    )
    return dataclasses.replace(cfg, **overrides).validate()


BUILDERS = {
    "single-link": single_link,
    "platoon": platoon,
    "multi-platoon": multi_platoon,
    "uav": uav_formation,
}


def build(name: str, seed: int = 1, **overrides) -> ScenarioConfig:
    if name not in BUILDERS:
        raise ValueError(f"unknown scenario {name!r} (choose from {sorted(BUILDERS)})")
    return BUILDERS[name](seed=seed, **overrides)
