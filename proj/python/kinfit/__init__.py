"""Kinetic-network simulation, sensitivities and Gauss-Newton parameter identification."""

from pathlib import Path

from ._core import (
    DomainError,
    EvaluationError,
    IntegrationError,
    Model,
    ModelError,
    NoDataError,
    ParseError,
    fit,
    rank,
    sensitivities,
    simulate,
    solve_min_norm,
)

__all__ = [
    "DomainError",
    "EvaluationError",
    "IntegrationError",
    "Model",
    "ModelError",
    "NoDataError",
    "ParseError",
    "fit",
    "fit_files",
    "rank",
    "sensitivities",
    "simulate",
    "solve_min_norm",
]


def fit_files(model_path, data_path, **kwargs):
    """Loads a model file and a measurement CSV and fits the parameters."""
    return fit(Model.load(str(model_path)), Path(data_path).read_text(), **kwargs)
