"""The three bundled state-space models."""

from __future__ import annotations

from .growth import (
    GrowthCoefficients,
    GrowthModel,
    GrowthParams,
    bundled_coefficients,
    growth_conditional_moments,
    growth_transition,
    load_coefficients,
)
from .habit import (
    HabitModel,
    HabitParams,
    gamma_coefficients,
    rf_to_beta,
    surplus_steady_state,
)
from .qar1 import (
    QuadraticAR1,
    QuadraticAR1Params,
    conditional_disturbance_posterior,
    first_stage_moments,
    stationary_moments,
)

MODEL_NAMES = ("qar1", "growth", "habit")


def build_model(name: str, fixture_path=None):
    """Instantiate a bundled model by its CLI name."""
    if name == "qar1":
        return QuadraticAR1()
    if name == "growth":
        coeffs = load_coefficients(fixture_path) if fixture_path else None
        return GrowthModel(coeffs)
    if name == "habit":
        return HabitModel()
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


__all__ = [
    "GrowthCoefficients",
    "GrowthModel",
    "GrowthParams",
    "HabitModel",
    "HabitParams",
    "MODEL_NAMES",
    "QuadraticAR1",
    "QuadraticAR1Params",
    "build_model",
    "bundled_coefficients",
    "conditional_disturbance_posterior",
    "first_stage_moments",
    "gamma_coefficients",
    "growth_conditional_moments",
    "growth_transition",
    "load_coefficients",
    "rf_to_beta",
    "stationary_moments",
    "surplus_steady_state",
]
