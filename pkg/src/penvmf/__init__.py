"""Penalized maximum-likelihood estimation for mixtures of von Mises-Fisher distributions."""

from .em import EmConfig, FitReport, fit
from .model import (
    PenaltyConfig,
    VmfComponent,
    VmfMixture,
    check_penalty_conditions,
    log_likelihood,
    penalized_log_likelihood,
    sample_mixture,
    sample_vmf,
)
from .special import bessel_ratio, kappa_approx, log_bessel_i, log_norm_const, solve_kappa_exact

__version__ = "0.1.0"
