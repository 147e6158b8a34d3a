"""Truncated-Wigner simulation of pumped and damped Bose-Hubbard chains."""

from .correlations import CorrelationSnapshot, CriteriaReport, analyze
from .engine import EnsemblePlan, MomentAccumulator, run_ensemble, run_trajectory
from .model import ChainConfig, ConfigError, Diverged, NonZeroChi, Singular, classical_fixed_point
from .oracle import linear_moments, meanfield_evolve

__all__ = [
    "ChainConfig", "ConfigError", "Diverged", "NonZeroChi", "Singular", "classical_fixed_point",
    "EnsemblePlan", "MomentAccumulator", "run_ensemble", "run_trajectory",
    "CorrelationSnapshot", "CriteriaReport", "analyze",
    "linear_moments", "meanfield_evolve",
]
