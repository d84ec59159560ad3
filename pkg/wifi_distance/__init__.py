"""WiFi fingerprint pair distance estimation."""

from .fingerprints import Fingerprint, PairRecord, PairTable, generate_pairs
from .evaluation import EvalReport, evaluate
from .learners.base import TrainedModel
from .learners.registry import fit_model
from .selection.masks import FeatureMask
from .signal_metrics import FEATURE_NAMES, extract_features

__all__ = [
    "EvalReport",
    "FEATURE_NAMES",
    "FeatureMask",
    "Fingerprint",
    "PairRecord",
    "PairTable",
    "TrainedModel",
    "evaluate",
    "extract_features",
    "fit_model",
    "generate_pairs",
]
