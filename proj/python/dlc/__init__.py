"""Deep layerwise clustering on hierarchical generative models."""

import json

from ._dlc import (
    DeepModel,
    DlcError,
    Spec,
    analytics,
    cluster_gamma,
    count_distinct,
    forward,
    hyperparams,
    init_net,
    load_model,
    mean_image,
    resolve_spec,
    sample_dataset,
    spec_from_json,
    train_deep,
    validate_spec,
)
from ._dlc import evaluate as _evaluate
from ._dlc import run_suite as _run_suite

__all__ = [
    "DeepModel",
    "DlcError",
    "Spec",
    "analytics",
    "cluster_gamma",
    "count_distinct",
    "evaluate",
    "forward",
    "hyperparams",
    "init_net",
    "load_model",
    "mean_image",
    "resolve_spec",
    "run_suite",
    "sample_dataset",
    "spec_from_json",
    "train_deep",
    "validate_spec",
]


def evaluate(model, data):
    """Accuracy and confusion counts of `model` on a list of examples."""
    return json.loads(_evaluate(model, data))


def run_suite(name, spec="m1", trials=50, draws=2000, runs=10, seed=1):
    """Run a verification suite; returns one report dict per check."""
    return [json.loads(r) for r in _run_suite(name, spec, trials, draws, runs, seed)]
