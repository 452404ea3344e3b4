"""Multi-level starlet segmentation.

Detail planes 1 and 2 are dropped as noise; for each level ``i`` in
``3..L`` the planes ``w_3..w_i`` are summed and thresholded at zero, giving
one binary segmentation ``R_i`` per level.

Two binarization rules are available:

``"detail"`` (default)
    foreground iff ``w_3 + ... + w_i > 0``.
``"literal"``
    foreground iff ``(w_3 + ... + w_i) - c_0 > 0``. On non-negative
    images this plane equals ``-(w_1 + w_2 + w_{i+1} + ... + w_L + c_L)``,
    which no longer contains the band-pass structure; it is kept for
    comparison only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import BinaryMask, ImageGrid
from .starlet import StarletDecomposition, decompose

__all__ = [
    "RULES",
    "FIRST_LEVEL",
    "SegmentationSet",
    "level_response",
    "segment_level",
    "segment_all",
]

RULES = ("detail", "literal")
FIRST_LEVEL = 3


@dataclass(frozen=True)
class SegmentationSet:
    """Masks ``R_3..R_L`` keyed by level."""

    masks: dict
    source_levels: int

    def levels(self) -> list[int]:
        return list(self.masks)

    def __getitem__(self, level: int) -> BinaryMask:
        return self.masks[level]

    def __len__(self) -> int:
        return len(self.masks)


def _check_rule(rule: str) -> None:
    if rule not in RULES:
        raise ValueError(f"unknown MLSS rule {rule!r}; expected one of {RULES}")


def _image_plane(image) -> np.ndarray:
    return image.data if isinstance(image, ImageGrid) else np.asarray(image, dtype=np.float64)


def level_response(image, decomposition: StarletDecomposition, i: int,
                   rule: str = "detail") -> np.ndarray:
    """Signed plane whose positive pixels form ``R_i``."""
    _check_rule(rule)
    plane = _image_plane(image)
    if plane.shape != decomposition.shape:
        raise ValueError(
            f"image shape {plane.shape} does not match decomposition shape {decomposition.shape}"
        )
    if not FIRST_LEVEL <= i <= decomposition.levels:
        raise ValueError(
            f"segmentation level must lie in [{FIRST_LEVEL}, {decomposition.levels}], got {i}"
        )
    total = decomposition.detail(FIRST_LEVEL).copy()
    for j in range(FIRST_LEVEL + 1, i + 1):
        total += decomposition.detail(j)
    if rule == "literal":
        total -= plane
    return total


def segment_level(image, decomposition: StarletDecomposition, i: int,
                  rule: str = "detail") -> BinaryMask:
    """Binary segmentation ``R_i``; zero responses are background."""
    return BinaryMask(level_response(image, decomposition, i, rule) > 0.0)


def segment_all(image, levels: int = 10, dilate: bool = True,
                rule: str = "detail",
                decomposition: StarletDecomposition | None = None) -> SegmentationSet:
    """Decompose once and return every ``R_i`` for ``i = 3..levels``.

    The running detail sum is accumulated in the same order as
    :func:`level_response`, so each mask is bit-identical to the
    per-level computation.
    """
    _check_rule(rule)
    if levels < FIRST_LEVEL:
        raise ValueError(
            f"MLSS requires at least three levels; levels 1-2 are ignored per the method (got {levels})"
        )
    plane = _image_plane(image)
    if decomposition is None:
        decomposition = decompose(image, levels, dilate)
    elif decomposition.levels < levels or decomposition.shape != plane.shape:
        raise ValueError("supplied decomposition does not cover the requested levels/shape")
    masks = {}
    total = None
    for i in range(FIRST_LEVEL, levels + 1):
        w = decomposition.detail(i)
        total = w.copy() if total is None else total + w
        response = total - plane if rule == "literal" else total
        masks[i] = BinaryMask(response > 0.0)
    return SegmentationSet(masks, levels)
