"""Federated WiFi fingerprint localization (Python front end)."""

import json

from ._fedloc import (
    Activation,
    ConfigError,
    DatasetError,
    DivergenceError,
    Head,
    MlpArchitecture,
    aggregate,
    batch_loss,
    forward,
    gradient,
    init_params,
    load_csv,
    predict_floor,
    write_synthetic_corpus,
)
from . import _fedloc


def resolve_config(config):
    """Validated config with every default filled in, as a dict."""
    return json.loads(_fedloc.resolve_config(_as_json(config)))


def run_experiment(config):
    """Run an experiment described by a dict or JSON string.

    Writes results.csv, summary.csv, runs.csv and config.resolved to the
    configured output directory and returns the summary rows and run statuses.
    """
    return _fedloc.run_experiment(_as_json(config))


def _as_json(config):
    return config if isinstance(config, str) else json.dumps(config)


__all__ = [
    "Activation",
    "ConfigError",
    "DatasetError",
    "DivergenceError",
    "Head",
    "MlpArchitecture",
    "aggregate",
    "batch_loss",
    "forward",
    "gradient",
    "init_params",
    "load_csv",
    "predict_floor",
    "resolve_config",
    "run_experiment",
    "write_synthetic_corpus",
]
