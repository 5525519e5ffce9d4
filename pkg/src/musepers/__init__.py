"""Multimodal continuous affect regression with per-subject personalisation."""
from .errors import MuseError
from .objective import ccc, ccc_loss, combined_score
from .seqdata import DIMENSIONS, AlignedSample, FeatureSequence, LabelSequence

__version__ = "0.1.0"

__all__ = [
    "DIMENSIONS",
    "AlignedSample",
    "FeatureSequence",
    "LabelSequence",
    "MuseError",
    "ccc",
    "ccc_loss",
    "combined_score",
]
