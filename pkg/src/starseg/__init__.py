"""Starlet-based multi-level segmentation of photomicrographs."""

__version__ = "0.1.0"

from .imagecore import BinaryMask, ImageFormatError, ImageGrid, load_grayscale, load_mask, save_mask
from .metrics import ConfusionCounts, ScoreReport, confusion, mcc, overlay, scores
from .mlsos import LevelElection, LevelScoreTable, apply_mlsos, elect_level, score_training_image
from .mlss import SegmentationSet, segment_all, segment_level
from .quantify import ConcentrationResult, ScaleBar, batch_quantify, quantify
from .starlet import StarletDecomposition, decompose, decompose_oracle, smooth_level

__all__ = [
    "BinaryMask", "ImageFormatError", "ImageGrid", "load_grayscale", "load_mask", "save_mask",
    "ConfusionCounts", "ScoreReport", "confusion", "mcc", "overlay", "scores",
    "LevelElection", "LevelScoreTable", "apply_mlsos", "elect_level", "score_training_image",
    "SegmentationSet", "segment_all", "segment_level",
    "ConcentrationResult", "ScaleBar", "batch_quantify", "quantify",
    "StarletDecomposition", "decompose", "decompose_oracle", "smooth_level",
]
