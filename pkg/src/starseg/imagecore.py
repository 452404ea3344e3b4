"""Image and mask containers plus grayscale raster I/O.

Every intensity image is held as a float64 array in ``[0, 1]`` with shape
``(height, width)``; masks are boolean arrays of the same shape. Supported
inputs are PNG and PGM/PPM (binary or ASCII), 8 or 16 bits per sample.
Inputs are expected to be pre-cropped, i.e. the SEM information bar must be
removed before segmentation.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "ImageFormatError",
    "ImageGrid",
    "BinaryMask",
    "binarize",
    "load_grayscale",
    "load_mask",
    "save_mask",
    "save_rgb",
]

PathLike = Union[str, os.PathLike]

SUPPORTED_FORMATS = {"PNG", "PPM"}  # Pillow reports PGM/PPM/PBM as "PPM"

_EIGHT_BIT_MODES = {"1", "L", "LA", "P", "RGB", "RGBA"}
_SIXTEEN_BIT_MODES = {"I;16", "I;16B", "I;16L", "I"}


class ImageFormatError(ValueError):
    """Raised for rasters whose format, mode or bit depth is not supported."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """A grayscale image with intensities in ``[0, 1]``.

    ``data`` is stored read-only with shape ``(height, width)``.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise ValueError(f"image data must be a non-empty 2D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError(
                f"image intensities must lie in [0, 1], got [{data.min()}, {data.max()}]"
            )
        object.__setattr__(self, "data", _readonly(data.copy()))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Foreground (``True``) / background (``False``) labeling of an image."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError(f"mask must be a non-empty 2D array, got shape {labels.shape}")
        if labels.dtype != np.bool_:
            values = np.unique(labels)
            if not np.all(np.isin(values, (0, 1))):
                raise ValueError(f"mask labels must be boolean or 0/1, got values {values[:5]}")
            labels = labels.astype(bool)
        object.__setattr__(self, "labels", _readonly(labels.copy()))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.labels))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.labels, other.labels))

    __hash__ = None


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unrecognized raster format") from exc
    except OSError as exc:
        raise OSError(f"{path}: cannot read image ({exc})") from exc
    if img.format not in SUPPORTED_FORMATS:
        raise ImageFormatError(f"{path}: unsupported format {img.format!r} (expected PNG or PGM/PPM)")
    return img


def load_grayscale(path: PathLike) -> ImageGrid:
    """Load a raster and map it linearly onto ``[0, 1]``.

    8-bit samples are divided by 255, 16-bit samples by 65535. RGB(A) inputs
    are collapsed with the unweighted mean of the three color channels before
    scaling; alpha is discarded.
    """
    img = _open(path)
    mode = img.mode
    if mode in _EIGHT_BIT_MODES:
        if mode == "1":
            arr = np.asarray(img.convert("L"), dtype=np.float64)
        elif mode in ("P", "RGB", "RGBA"):
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
            arr = rgb.sum(axis=2) / 3.0
        elif mode == "LA":
            arr = np.asarray(img, dtype=np.float64)[..., 0]
        else:
            arr = np.asarray(img, dtype=np.float64)
        scale = 255.0
    elif mode in _SIXTEEN_BIT_MODES:
        arr = np.asarray(img, dtype=np.float64)
        if arr.min() < 0 or arr.max() > 65535:
            raise ImageFormatError(
                f"{path}: bit depth exceeds 16 bits (mode {mode!r}, max value {arr.max():.0f})"
            )
        scale = 65535.0
    else:
        raise ImageFormatError(f"{path}: unsupported pixel mode {mode!r}")
    return ImageGrid(np.clip(arr / scale, 0.0, 1.0))


def binarize(grid: ImageGrid, threshold: float = 0.5) -> BinaryMask:
    """Intensities ``>= threshold`` become foreground."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return BinaryMask(grid.data >= threshold)


def load_mask(path: PathLike, threshold: float = 0.5) -> BinaryMask:
    """Load a ground truth or mask, binarized with :func:`binarize`."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return binarize(load_grayscale(path), threshold)


def save_mask(mask: BinaryMask, path: PathLike) -> None:
    """Write ``mask`` as an 8-bit grayscale PNG (foreground 255, background 0)."""
    path = Path(path)
    arr = np.where(mask.labels, 255, 0).astype(np.uint8)
    try:
        Image.fromarray(arr).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write mask to {path}: {exc}") from exc


def save_rgb(rgb: np.ndarray, path: PathLike) -> None:
    """Write an ``(h, w, 3)`` uint8 array as an 8-bit RGB PNG."""
    path = Path(path)
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 array, got {rgb.shape} {rgb.dtype}")
    try:
        Image.fromarray(rgb).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write image to {path}: {exc}") from exc
