"""Run configuration: a flat, typed key=value file with CLI overrides.

Every simulator knob lives in one ScenarioConfig so a run is reproducible
from its config file and seed alone. The file format is line-oriented
``key = value`` with ``#`` comments; keys match the dataclass field names
exactly and unknown keys are rejected rather than ignored.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

CONFIG_VERSION = 1

SCENARIOS = ("single-link", "platoon", "multi-platoon", "uav")
PROFILES = ("none", "parabola", "schedule", "uav")


class ConfigError(ValueError):
    """Raised for malformed files, unknown keys, or out-of-range values."""


@dataclass
class ScenarioConfig:
    config_version: int = CONFIG_VERSION
    scenario: str = "single-link"
    seed: int = 1
    duration_slots: int = 5000

    # Link protocol
    delta: float = 0.1
    error_measure: str = "l1"          # l1 | l2
    decision_period: int = 10
    calib_period: int = 100
    correction_period: int = 1000      # 0 disables correction packets
    confirm_timeout: int = 10
    confirm_repeats: int = 3
    n_input: int = 1
    window_capacity: int = 100
    timestamping: bool = True

    # Sensing noise standard deviations. Kept well under delta so the trigger
    # reflects model error rather than the noise floor. The accelerometer noise
    # only enters the model-fit window; estimates roll on the commanded value.
    noise_sigma_d: float = 0.01
    noise_sigma_v: float = 0.01
    noise_sigma_a: float = 0.05

    # MAC
    mac_rri: int = 10
    mac_subchannels: int = 2
    mac_p_loss: float = 0.0
    mac_ideal: bool = False            # bypass collisions/HD/loss entirely
    mac_feedback: bool = False         # per-receiver delivery truth at the transmitter

    # Plant and control
    control_period: int = 10
    d_des: float = 10.0
    vehicle_length: float = 5.0
    initial_speed: float = 10.0
    w_gap: float = -0.5
    w_vel_front: float = -0.6
    w_vel_leader: float = -0.2
    w_acc_front: float = 0.4
    w_acc_leader: float = 0.1
    accel_min: float = -2.94
    accel_max: float = 4.0
    uav_kp: float = 1.0
    uav_kd: float = 2.0
    uav_accel_limit: float = 4.0
    uav_spacing: float = 5.0

    # Scenario shape
    platoon_count: int = 1
    platoon_size: int = 2
    platoon_spacing: float = 150.0     # m between successive platoon tails
    uav_count: int = 10
    leader_profile: str = "parabola"
    profile_t0: int = 478
    profile_t1: int = 2478
    profile_peak: float = 4.0

    # Status-unaware baseline (used by baseline runs and sweeps)
    baseline_interval: int = 40

    # Adaptive scheduler
    smart_enabled: bool = False
    smart_adapt: bool = True           # false: hold m at smart_m_init (fixed-price run)
    smart_m_min: float = 0.0
    smart_m_max: float = 4.0
    smart_m_int: float = 0.5
    smart_m_init: str = "min"          # min | mid | max | numeric literal
    smart_eval_interval: int = 1000
    smart_delta: float = 0.0           # 0 = auto: 5% of the first window's cost
    smart_levels: tuple[float, ...] = (0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2)
    smart_explore_slots: int = 4000
    smart_bank_path: str = ""

    # Fault injection and outputs
    inject_loss_slot: int = -1         # drop the next status delivery at/after this slot
    inject_loss_link: int = 0
    write_trace: bool = True

    def validate(self) -> "ScenarioConfig":
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"config_version {self.config_version} unsupported "
                              f"(expected {CONFIG_VERSION})")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.leader_profile not in PROFILES:
            raise ConfigError(f"unknown leader_profile {self.leader_profile!r}")
        if self.error_measure not in ("l1", "l2"):
            raise ConfigError(f"error_measure must be l1 or l2, got {self.error_measure!r}")
        positive = ("duration_slots", "decision_period", "calib_period", "confirm_timeout",
                    "confirm_repeats", "n_input", "window_capacity", "mac_rri",
                    "mac_subchannels", "control_period", "platoon_count", "platoon_size",
                    "uav_count", "baseline_interval", "smart_eval_interval",
                    "smart_explore_slots")
        for name in positive:
            v = getattr(self, name)
            floor = 0 if name == "duration_slots" else 1
            if v < floor:
                raise ConfigError(f"{name} must be >= {floor}, got {v}")
        if self.correction_period < 0:
            raise ConfigError("correction_period must be >= 0 (0 disables)")
        if not 0.0 <= self.mac_p_loss < 1.0:
            raise ConfigError("mac_p_loss must lie in [0, 1)")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        for name in ("noise_sigma_d", "noise_sigma_v", "noise_sigma_a"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.smart_m_int <= 0 or self.smart_m_max < self.smart_m_min:
            raise ConfigError("need smart_m_int > 0 and smart_m_max >= smart_m_min")
        if len(self.smart_levels) < 2 or any(
                b <= a for a, b in zip(self.smart_levels, self.smart_levels[1:])):
            raise ConfigError("smart_levels must be at least 2 strictly increasing values")
        if self.smart_m_init not in ("min", "mid", "max"):
            try:
                float(self.smart_m_init)
            except ValueError:
                raise ConfigError(f"smart_m_init must be min/mid/max or a number, "
                                  f"got {self.smart_m_init!r}") from None
        if self.scenario == "platoon" and self.platoon_size < 2:
            raise ConfigError("a platoon needs at least 2 vehicles")
        if self.scenario == "uav" and self.uav_count < 2:
            raise ConfigError("a formation needs at least 2 UAVs")
        return self

    def initial_m(self) -> float:
        mid = self.smart_m_min + (self.smart_m_max - self.smart_m_min) / 2.0
        named = {"min": self.smart_m_min, "mid": mid, "max": self.smart_m_max}
        if self.smart_m_init in named:
            return named[self.smart_m_init]
        return float(self.smart_m_init)


def _parse_value(name: str, text: str, ftype) -> object:
    text = text.strip()
    if ftype is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    if ftype is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {text!r}") from None
    if ftype is float:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {text!r}") from None
    if ftype is str:
        return text
    # Remaining field type: tuple of floats, comma-separated.
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from None


_FIELD_TYPES = {f.name: (bool if f.type == "bool" else
                         int if f.type == "int" else
                         float if f.type == "float" else
                         str if f.type == "str" else tuple)
                for f in dataclasses.fields(ScenarioConfig)}


def apply_settings(cfg: ScenarioConfig, settings: dict[str, str]) -> ScenarioConfig:
    """Typed update of config fields from raw key -> value-text pairs."""
    updates = {}
    for key, raw in settings.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _parse_value(key, raw, _FIELD_TYPES[key])
    return dataclasses.replace(cfg, **updates)


def parse_config_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    settings: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key in settings:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        settings[key] = raw
    cfg = apply_settings(base if base is not None else ScenarioConfig(), settings)
    return cfg.validate()


def load_config(path: str | Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(), base)


def dump_config(cfg: ScenarioConfig) -> str:
    """Render a config as a reloadable key=value document."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(float(x)) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: ScenarioConfig, overrides: list[str]) -> ScenarioConfig:
    """CLI-style ``key=value`` overrides, applied after the file."""
    settings: dict[str, str] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        settings[key.strip()] = raw
    return apply_settings(cfg, settings).validate()
