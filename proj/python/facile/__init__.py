"""Python bindings for the facile coarse-to-fine few-shot core."""

import json

from ._facile import (
    ConfigError,
    ContractError,
    DimensionError,
    DivergenceError,
    DomainError,
    Error,
    FormatError,
    NumericalError,
    accuracy,
    fit_predict,
    fit_risk_curve,
    latent_augment,
    macro_f1,
    simclr_loss,
    summarize,
    supcon_loss,
    synthetic_hierarchy,
)
from ._facile import _run_pipeline


def run_pipeline(config=None):
    """Generate data, pretrain and evaluate in memory.

    `config` uses the same flat keys as the CLI's JSON config files.
    """
    return json.loads(_run_pipeline(json.dumps(config or {})))


__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "DivergenceError",
    "DomainError",
    "Error",
    "FormatError",
    "NumericalError",
    "accuracy",
    "fit_predict",
    "fit_risk_curve",
    "latent_augment",
    "macro_f1",
    "run_pipeline",
    "simclr_loss",
    "summarize",
    "supcon_loss",
    "synthetic_hierarchy",
]
