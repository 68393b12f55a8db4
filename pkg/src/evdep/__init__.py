"""Consistent estimation of exponent measures for max-stable distributions."""

__version__ = "0.1.0"

from .lattice import (  # noqa: E402
    ExponentSet,
    MoebiusDecomposition,
    Subset,
    check_consistency,
    d_values,
    enumerate_subsets,
    moebius_coefficients,
    reconstruct_V,
    theta_bounds_m3,
)
from .models import LogisticModel, RngStream, logistic_evaluation_set, sample_logistic  # noqa: E402

__all__ = [
    "ExponentSet",
    "LogisticModel",
    "MoebiusDecomposition",
    "RngStream",
    "Subset",
    "check_consistency",
    "d_values",
    "enumerate_subsets",
    "logistic_evaluation_set",
    "moebius_coefficients",
    "reconstruct_V",
    "sample_logistic",
    "theta_bounds_m3",
]
