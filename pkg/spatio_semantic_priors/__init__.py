"""Spatio-semantic priors estimated from sampled workspaces, and planning
against them."""
from .errors import (
    ConfigError,
    FloorEstimationError,
    InputError,
    OracleError,
    PlanningInfeasibleError,
    SampleSetError,
    SpatioSemanticError,
    UnknownLabelError,
)
from .priors import (
    Configuration,
    RobotFootprint,
    SampleSet,
    SemanticQuery,
    WorkspaceSample,
    prior_estimate,
)

__all__ = [
    "ConfigError",
    "Configuration",
    "FloorEstimationError",
    "InputError",
    "OracleError",
    "PlanningInfeasibleError",
    "RobotFootprint",
    "SampleSet",
    "SampleSetError",
    "SemanticQuery",
    "SpatioSemanticError",
    "UnknownLabelError",
    "WorkspaceSample",
    "prior_estimate",
]
