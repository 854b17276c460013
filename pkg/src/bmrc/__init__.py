"""Bidirectional machine-reading-comprehension extraction of
(aspect, opinion, sentiment) triplets from review sentences."""

from .corpus import AnnotatedSentence, DatasetSplit, GoldTriplet, Sentiment, TokenSpan, load_split, parse_line
from .encoder import EncoderConfig, Vocabulary
from .evaluation import PRF, MatchMode, aggregate_runs, score
from .inference import extract_triplets, fuse, run_direction
from .model import BMRCModel
from .queries import Direction, derive_supervision
from .training import OptimizerConfig, fit, gradient_check

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSentence",
    "BMRCModel",
    "DatasetSplit",
    "Direction",
    "EncoderConfig",
    "GoldTriplet",
    "MatchMode",
    "OptimizerConfig",
    "PRF",
    "Sentiment",
    "TokenSpan",
    "Vocabulary",
    "aggregate_runs",
    "derive_supervision",
    "extract_triplets",
    "fit",
    "fuse",
    "gradient_check",
    "load_split",
    "parse_line",
    "run_direction",
    "score",
]
