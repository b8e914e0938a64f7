"""Retro-translated parallel corpus construction, filtering and evaluation."""

__version__ = "0.1.0"

from .corpus import Document, DomainTag, ParallelPair, Variety, normalize_text, validate_document
from .filters import (
    BoilerplateFilter,
    CharsetFilter,
    DuplicateFilter,
    LengthFilter,
    MiscFilter,
    PatternFilter,
)
from .metrics import EvalPair, MetricResult, bleu_corpus, exact_match_rate, mean_with_t_ci, rouge_l
from .pipeline import FunnelReport, PipelineConfig, run_pipeline
from .variety import VarietyClassifier, VidResult, vid_score

__all__ = [
    "BoilerplateFilter",
    "CharsetFilter",
    "Document",
    "DomainTag",
    "DuplicateFilter",
    "EvalPair",
    "FunnelReport",
    "LengthFilter",
    "MetricResult",
    "MiscFilter",
    "ParallelPair",
    "PatternFilter",
    "PipelineConfig",
    "Variety",
    "VarietyClassifier",
    "VidResult",
    "bleu_corpus",
    "exact_match_rate",
    "mean_with_t_ci",
    "normalize_text",
    "rouge_l",
    "run_pipeline",
    "validate_document",
    "vid_score",
]
