"""Dyson maps, metric operators and time-dependent tools for non-Hermitian quantum mechanics."""

__version__ = "0.1.0"

from . import (  # noqa: E402,F401
    anharmonic,
    darboux,
    dynamics,
    entropy,
    ermakov,
    errors,
    invariants,
    metric,
    models,
    numcore,
    symmetry,
)
