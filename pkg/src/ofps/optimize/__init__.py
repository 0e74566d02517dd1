"""Constrained probe-state optimization."""
from .cobyla import CobylaConfig, CobylaResult, cobyla_minimize
from .probe import (
    ProbeSearchProblem,
    ProbeSearchResult,
    SweepRow,
    optimize_probe,
    random_phase_validation,
    transmission_sweep,
)

__all__ = [
    "CobylaConfig",
    "CobylaResult",
    "cobyla_minimize",
    "ProbeSearchProblem",
    "ProbeSearchResult",
    "SweepRow",
    "optimize_probe",
    "random_phase_validation",
    "transmission_sweep",
]
