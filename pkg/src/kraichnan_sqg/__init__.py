"""Stochastic Euler / gSQG with Kraichnan transport noise on a periodic torus."""

from .params import ModelParams, ParameterError, ValidationReport, critical_exponent, validate
from .spectral import Grid, SpectralField, VectorField

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "ModelParams",
    "ParameterError",
    "SpectralField",
    "ValidationReport",
    "VectorField",
    "critical_exponent",
    "validate",
]
