"""Typicality of pure states: random and fixed-energy ensembles of populations,
their maximum-entropy approximations, and brute-force oracles."""

__version__ = "0.1.0"

from ._backend import BACKEND, available as available_backends
from .approx import (
    ApproxDistribution,
    LagrangeSolution,
    feee_approx_I,
    feee_approx_II,
    mean_entropy_feee_I,
    mean_entropy_feee_II,
    mean_entropy_rpse,
    rpse_approx,
    solve_lagrange,
)
from .errors import (
    CapacityError,
    ConsistencyFault,
    DomainError,
    NumericError,
    TypicalityError,
    UsageError,
)
from .feee import ChainConfig, FeeeChain, FeeeTarget, feee_density, mh_step, reconstruct
from .observables import Histogram, RunningStats, gaussian_fit, histogram, shannon_entropy
from .rpse import PopulationVector, PureState, sample_simplex, sample_simplex_batch, sample_state
from .spectrum import EnergySpectrum, build_spin_spectrum, read_spectrum

__all__ = [
    "__version__", "BACKEND", "available_backends",
    "ApproxDistribution", "LagrangeSolution", "feee_approx_I", "feee_approx_II",
    "mean_entropy_feee_I", "mean_entropy_feee_II", "mean_entropy_rpse", "rpse_approx",
    "solve_lagrange",
    "CapacityError", "ConsistencyFault", "DomainError", "NumericError", "TypicalityError",
    "UsageError",
    "ChainConfig", "FeeeChain", "FeeeTarget", "feee_density", "mh_step", "reconstruct",
    "Histogram", "RunningStats", "gaussian_fit", "histogram", "shannon_entropy",
    "PopulationVector", "PureState", "sample_simplex", "sample_simplex_batch", "sample_state",
    "EnergySpectrum", "build_spin_spectrum", "read_spectrum",
]
