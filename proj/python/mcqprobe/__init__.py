"""LLM choice uncertainty vs. student response distributions."""

import json

from ._core import (
    BackendError,
    ChiSquaredResult,
    ConfigError,
    CorrelationResult,
    Dataset,
    MockModelSpec,
    ParseError,
    Question,
    StatsError,
    UncertaintyProfile,
    ValidationError,
    __version__,
    analyze,
    chi2_survival,
    chi_squared_gof,
    classify_question_type,
    counts_from_proportions,
    entropy,
    load_dataset,
    mock_profiles,
    mock_spec_from_dataset,
    probe,
    report_kinds,
    spearman,
    synth,
    synthesize_dataset,
)
from . import _core


def analysis_reports(dataset, profiles, phrasing=1, alpha=0.05):
    """Single-phrasing reports, parsed, keyed by report kind."""
    raw = _core.analysis_reports(dataset, profiles, phrasing, alpha)
    return {kind: json.loads(text) for kind, text in raw.items()}


def phrasing_comparison(dataset, phrasing1, phrasing2, alpha=0.05):
    return json.loads(_core.phrasing_comparison(dataset, phrasing1, phrasing2, alpha))
