"""Simulation and numerical analysis of a two-spin mean-field credit contagion model."""

from .model import (
    CELLS,
    InitialLaw,
    ModelParams,
    MomentVector,
    Regime,
    RegimeTag,
    critical_gamma,
    law_from_moments,
    moments_from_law,
    regime,
)

__version__ = "0.1.0"

__all__ = [
    "CELLS",
    "InitialLaw",
    "ModelParams",
    "MomentVector",
    "Regime",
    "RegimeTag",
    "critical_gamma",
    "law_from_moments",
    "moments_from_law",
    "regime",
    "__version__",
]
