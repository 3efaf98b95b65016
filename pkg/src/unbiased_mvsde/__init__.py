"""Unbiased estimation of invariant-measure expectations for McKean-Vlasov SDEs."""

from ._backend import get_backend, set_backend
from .estimator import (
    EstimateResult,
    EstimatorConfig,
    ReplicateResult,
    SimulationError,
    estimate,
    expected_cost,
    replicate_cost,
    run_replicates,
    summarize,
    unbiased_single,
)
from .measure import SignedEmpiricalMeasure
from .models import BUILTINS, ConfigError, Model, build_model, curie_weiss, mean_field_ou, mle_gaussian, neuron3d
from .particles import EmpiricalMeasure, LevelParams, ParticleBlowUp
from .rng import Role, StreamKey

__version__ = "0.1.0"

__all__ = [
    "BUILTINS", "ConfigError", "EmpiricalMeasure", "EstimateResult", "EstimatorConfig",
    "LevelParams", "Model", "ParticleBlowUp", "ReplicateResult", "Role",
    "SignedEmpiricalMeasure", "SimulationError", "StreamKey", "build_model", "curie_weiss",
    "estimate", "expected_cost", "get_backend", "mean_field_ou", "mle_gaussian", "neuron3d",
    "replicate_cost", "run_replicates", "set_backend", "summarize", "unbiased_single",
]
