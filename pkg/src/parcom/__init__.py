"""Parallel status communications: predict locally, transmit on surprise.

Both ends of a status link run the same fitted linear predictor; the source
only spends air time when its own prediction misses the sensed status by more
than a threshold. The package bundles the link protocol (calibration,
confirmation, correction), a slotted MAC with semi-persistent scheduling, the
vehicle/UAV plants, an index-based adaptive transmit scheduler, and a
deterministic slot-stepped engine that ties them together.
"""
from .config import ConfigError, ScenarioConfig, load_config
from .core import ErrorMeasure, RngStream, StatusVector, status_error
from .engine import (MODE_BASELINE, MODE_EXPLORE, MODE_PARALLEL, Engine,
                     ensure_bank, run, run_baseline, sweep)
from .link import DestinationEndpoint, LinkConfig, SourceEndpoint
from .metrics import RunSummary, read_trace, recompute_summary
from .predictor import LinearModel, SampleWindow, fit_lms, predict_values
from .replay import run_replay
from .scenarios import build
from .smart import (AuxCostGrid, ErrorQuantizer, NodeModel, PolicyBank,
                    build_policy_bank, solve_decoupled_mdp, whittle_index)

__version__ = "0.1.0"

__all__ = [
    "AuxCostGrid",
    "ConfigError",
    "DestinationEndpoint",
    "Engine",
    "ErrorMeasure",
    "ErrorQuantizer",
    "LinearModel",
    "LinkConfig",
    "MODE_BASELINE",
    "MODE_EXPLORE",
    "MODE_PARALLEL",
    "NodeModel",
    "PolicyBank",
    "RngStream",
    "RunSummary",
    "SampleWindow",
    "ScenarioConfig",
    "SourceEndpoint",
    "StatusVector",
    "build",
    "build_policy_bank",
    "ensure_bank",
    "fit_lms",
    "load_config",
    "predict_values",
    "read_trace",
    "recompute_summary",
    "run",
    "run_baseline",
    "run_replay",
    "solve_decoupled_mdp",
    "status_error",
    "sweep",
    "whittle_index",
    "__version__",
]
