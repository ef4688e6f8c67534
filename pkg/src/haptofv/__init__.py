"""Finite-volume simulation of a degenerate haptotaxis model with a priori estimate diagnostics."""

from .grid import Grid
from .model import InitialData, ModelInputError, ModelParams, Quadratic, Window, reaction_rate, saturation, validate_initial_data
from .scheme import SchemeConfig, SchemeFailure, State, compute_flux, simulate, stable_dt, step
from .diagnostics import DiagnosticsRecord, EnvelopeReport, check_envelopes, evaluate

__all__ = [
    "Grid", "InitialData", "ModelInputError", "ModelParams", "Quadratic", "Window", "reaction_rate",
    "saturation", "validate_initial_data", "SchemeConfig", "SchemeFailure", "State", "compute_flux",
    "simulate", "stable_dt", "step", "DiagnosticsRecord", "EnvelopeReport", "check_envelopes", "evaluate",
]
