"""Adaptive robust planning for persistent surveillance on graphs.

An agent alternates sensing and moving on a graph whose nodes hide unknown
threat types. Per-node Bayesian beliefs shrink credible sets of threat
prototypes, and a value-iteration planner optimizes the worst case over
those sets.
"""

from ._validation import ConfigurationError, ConvergenceError
from .belief import BeliefState, CredibleSets, posterior_log_gap, shrink_credible_set, update_belief
from .config import load_config
from .experiments import PRESETS, TrendFit, compare_planners, run_preset
from .graph_env import GraphEnvironment, TopologySpec, build_topology, read_edge_list, write_edge_list
from .planner import (
    PlannerKind,
    PlanningProblem,
    RobustPlanner,
    bellman_backup,
    iteration_bound,
    nominal_bellman_backup,
    robust_bellman_backup,
    value_iteration,
)
from .reward import RewardConfig, robust_sense_surrogate, nominal_sense_surrogate
from .sim import EpisodeLog, SimConfig, SummaryStats, run_campaign, run_episode
from .threat_models import (
    Gaussian,
    GaussianMixture,
    LogNormal,
    PrototypeSet,
    ThreatPrototype,
    bundled_prototypes,
    load_prototypes,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "ConfigurationError",
    "ConvergenceError",
    "CredibleSets",
    "EpisodeLog",
    "Gaussian",
    "GaussianMixture",
    "GraphEnvironment",
    "LogNormal",
    "PRESETS",
    "PlannerKind",
    "PlanningProblem",
    "PrototypeSet",
    "RewardConfig",
    "RobustPlanner",
    "SimConfig",
    "SummaryStats",
    "ThreatPrototype",
    "TopologySpec",
    "TrendFit",
    "bellman_backup",
    "build_topology",
    "bundled_prototypes",
    "compare_planners",
    "iteration_bound",
    "load_config",
    "load_prototypes",
    "nominal_bellman_backup",
    "nominal_sense_surrogate",
    "posterior_log_gap",
    "read_edge_list",
    "robust_bellman_backup",
    "robust_sense_surrogate",
    "run_campaign",
    "run_episode",
    "run_preset",
    "shrink_credible_set",
    "update_belief",
    "value_iteration",
    "write_edge_list",
]
