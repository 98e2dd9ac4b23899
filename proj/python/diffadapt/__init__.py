"""Difficulty-adaptive inference routing.

Thin Python layer over the compiled core in ``diffadapt._core``.
"""

import json as _json

from . import _core
from ._core import (
    DomainError,
    FormatError,
    LookupError,
    ValidationError,
    answers_equivalent,
    assign_label,
    budget,
    correctness_rate,
    default_thresholds,
    entropy_from_logprobs,
    extract_answer,
    mean_entropy,
    oracle_select,
    probe_forward,
    probe_loss,
    probe_predict,
    run_command,
    save_probe,
    sim_representation,
    token_entropy,
    token_savings,
    verdict,
)
from .featurefile import read_dffv, write_dffv

__version__ = _core.__version__


def resolve_strategy(label, base_max_tokens, budget_scale=1.0):
    return _json.loads(_core.resolve_strategy(label, base_max_tokens, budget_scale))


def train_probe(features, labels, **kwargs):
    """Train the probe; returns a dict with params (flat), dims and the loss log."""
    return _json.loads(_core.train_probe_json(features, labels, **kwargs))


def load_probe(path):
    return _json.loads(_core.load_probe_json(path))


def read_feature_file(path):
    """Read a feature file with the compiled reader."""
    return _json.loads(_core.read_feature_file_json(path))


def sim_complete(problem, strategy="Normal", max_tokens=32768, seed=0, sample_index=0):
    """One simulated completion for a problem dict (needs difficulty_rating)."""
    return _json.loads(
        _core.sim_complete_json(_json.dumps(problem), strategy, max_tokens, seed, sample_index)
    )


__all__ = [
    "DomainError",
    "FormatError",
    "LookupError",
    "ValidationError",
    "answers_equivalent",
    "assign_label",
    "budget",
    "correctness_rate",
    "default_thresholds",
    "entropy_from_logprobs",
    "extract_answer",
    "load_probe",
    "mean_entropy",
    "oracle_select",
    "probe_forward",
    "probe_loss",
    "probe_predict",
    "read_dffv",
    "read_feature_file",
    "resolve_strategy",
    "run_command",
    "save_probe",
    "sim_complete",
    "sim_representation",
    "token_entropy",
    "token_savings",
    "train_probe",
    "verdict",
    "write_dffv",
]
