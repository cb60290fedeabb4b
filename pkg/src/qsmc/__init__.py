"""Simulate diffusions killed at a rate chosen so that a target density is the quasi-limiting law."""

__version__ = "0.1.0"

from .model import (
    DriftSpec,
    KillingSpec,
    ScalarField,
    TargetSpec,
    build_killing,
    check_assumptions,
    find_shift_K,
    kappa_tilde_direct,
    kappa_tilde_log,
    make_model,
)
from .ensemble import EnsembleConfig, ModelBundle, run_ensemble, summarize
from .spectral import GridSpec, OUParams, discretize_generator, low_eigenvalues

__all__ = [
    "DriftSpec",
    "EnsembleConfig",
    "GridSpec",
    "KillingSpec",
    "ModelBundle",
    "OUParams",
    "ScalarField",
    "TargetSpec",
    "build_killing",
    "check_assumptions",
    "discretize_generator",
    "find_shift_K",
    "kappa_tilde_direct",
    "kappa_tilde_log",
    "low_eigenvalues",
    "make_model",
    "run_ensemble",
    "summarize",
]
