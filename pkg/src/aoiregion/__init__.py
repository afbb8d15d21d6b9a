"""Throughput/AoI capacity-region tools for slotted unreliable wireless networks."""

from .core import (
    ConfigError,
    InfeasibleProblemError,
    NetworkConfig,
    SecondOrderPoint,
    SimState,
    TargetPairs,
    TraceMetrics,
    validate_config,
)
from .policies import MaxWeightPolicy, RandomPolicy, VWDPolicy, make_policy
from .region import aoi_approx, allocate_variances, check_inner, check_outer, system_variance
from .simulator import run_ensemble, run_trace, step
from .solvers import check_admission, solve_cost_soft, solve_min_aoi_hard, solve_prop_fair
from .experiments import Scenario, run_sweep

__all__ = [
    "ConfigError",
    "InfeasibleProblemError",
    "MaxWeightPolicy",
    "NetworkConfig",
    "RandomPolicy",
    "Scenario",
    "SecondOrderPoint",
    "SimState",
    "TargetPairs",
    "TraceMetrics",
    "VWDPolicy",
    "allocate_variances",
    "aoi_approx",
    "check_admission",
    "check_inner",
    "check_outer",
    "make_policy",
    "run_ensemble",
    "run_sweep",
    "run_trace",
    "solve_cost_soft",
    "solve_min_aoi_hard",
    "solve_prop_fair",
    "step",
    "system_variance",
    "validate_config",
]
