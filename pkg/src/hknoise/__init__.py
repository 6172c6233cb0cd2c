"""Noisy heterogeneous Hegselmann-Krause opinion dynamics: simulation, metrics
and robust-reachability certification."""
from .core import (
    ModelVariant,
    OpinionState,
    Population,
    TrajectoryRecord,
    edges,
    neighbor_set,
    project_unit,
    simulate,
    step_comm,
    step_env,
    tilde_x,
)
from .errors import BudgetError, ConfigError, DomainError, HKError, PreconditionError
from .noise import NoiseKind, NoiseModel, RngContext, density_lower_bound, sample_comm, sample_env

__all__ = [
    "BudgetError",
    "ConfigError",
    "DomainError",
    "HKError",
    "ModelVariant",
    "NoiseKind",
    "NoiseModel",
    "OpinionState",
    "Population",
    "PreconditionError",
    "RngContext",
    "TrajectoryRecord",
    "density_lower_bound",
    "edges",
    "neighbor_set",
    "project_unit",
    "sample_comm",
    "sample_env",
    "simulate",
    "step_comm",
    "step_env",
    "tilde_x",
]
