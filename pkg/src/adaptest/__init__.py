"""Adaptive testing engine with 2PL IRT scoring, content-balanced selection,
Bayesian calibration, and measurement-error reliability/validity models."""

from .bank import Item, ItemBank, SynthSpec, load_bank, save_bank, synth_bank
from .engine import (
    Score,
    SessionConfig,
    SessionState,
    default_config,
    final_score,
    start_session,
    submit_answer,
)
from .irt import (
    GridPosterior,
    GridSpec,
    ItemParams,
    item_information,
    posterior_from_responses,
    prob_correct,
    standard_error,
    test_information,
)

__version__ = "0.1.0"

__all__ = [
    "Item",
    "ItemBank",
    "SynthSpec",
    "load_bank",
    "save_bank",
    "synth_bank",
    "Score",
    "SessionConfig",
    "SessionState",
    "default_config",
    "final_score",
    "start_session",
    "submit_answer",
    "GridPosterior",
    "GridSpec",
    "ItemParams",
    "item_information",
    "posterior_from_responses",
    "prob_correct",
    "standard_error",
    "test_information",
    "__version__",
]
