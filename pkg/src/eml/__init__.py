"""Pseudo-spectral toolkit for the normalized one-fluid Euler-Maxwell system."""

from .errors import (
    BreakdownError,
    ConfigError,
    ConstraintError,
    EMLError,
    GeometryError,
    GridMismatchError,
    LocalizationError,
    RangeError,
    VacuumError,
)
from .spectral import Grid, RealField, SpectralField

__version__ = "0.1.0"

__all__ = [
    "BreakdownError",
    "ConfigError",
    "ConstraintError",
    "EMLError",
    "GeometryError",
    "Grid",
    "GridMismatchError",
    "LocalizationError",
    "RangeError",
    "RealField",
    "SpectralField",
    "VacuumError",
]
