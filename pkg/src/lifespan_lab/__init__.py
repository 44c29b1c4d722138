"""Numerical laboratory for blowup of semilinear wave equations with
time-dependent speed and damping."""
from __future__ import annotations

from .coefficients import CoefficientModel, make_constant, make_custom, make_power_law, model_from_config
from .exponents import exponent_report, gamma_hwy, lifespan_exponent, p_hwy

__version__ = "0.1.0"

__all__ = [
    "CoefficientModel", "make_constant", "make_custom", "make_power_law", "model_from_config",
    "exponent_report", "gamma_hwy", "lifespan_exponent", "p_hwy",
]
