"""Greedy multi-step inertial randomized Kaczmarz and related row-action solvers."""

__version__ = "0.1.0"

from .errors import KaczError
from .linalg import (
    CoherenceSummary,
    LinearSystem,
    SpectralSummary,
    build_system,
    coherence,
    delta,
    gammas,
    residual,
    spectral_summary,
)
from .selection import GreedyContext, ProbabilityRule
from .solvers import VARIANTS, IterationTrace, RunConfig, SolverState, run, sketch2_project
from .theory import ConvergenceCertificate, certificate

__all__ = [
    "KaczError",
    "CoherenceSummary",
    "LinearSystem",
    "SpectralSummary",
    "build_system",
    "coherence",
    "delta",
    "gammas",
    "residual",
    "spectral_summary",
    "GreedyContext",
    "ProbabilityRule",
    "VARIANTS",
    "IterationTrace",
    "RunConfig",
    "SolverState",
    "run",
    "sketch2_project",
    "ConvergenceCertificate",
    "certificate",
]
