"""Starlet (isotropic undecimated B3-spline) wavelet transform.

The à trous scheme smooths with the B3-spline kernel ``[1, 4, 6, 4, 1] / 16``
dilated by ``2**(j - 1)`` at level ``j``; the detail plane is the difference
between consecutive smoothings, so the detail planes plus the last smooth
plane reconstruct the input exactly.

Borders use mirror extension without repeating the edge sample
(``d c b | a b c d | c b a``), periodically continued when the dilated kernel
reaches past the image.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .imagecore import ImageGrid

__all__ = [
    "B3_TAPS",
    "B3_TAPS_EXACT",
    "StarletDecomposition",
    "b3_kernel_1d",
    "b3_kernel_2d",
    "mirror_indices",
    "smooth_level",
    "decompose",
    "decompose_oracle",
    "dump_planes",
]

B3_TAPS_EXACT = tuple(Fraction(v, 16) for v in (1, 4, 6, 4, 1))
B3_TAPS = np.array([float(v) for v in B3_TAPS_EXACT])
B3_OFFSETS = np.arange(-2, 3)


def b3_kernel_1d(step: int = 1) -> np.ndarray:
    """B3-spline taps with ``step - 1`` zeros inserted between neighbours."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    kernel = np.zeros(4 * step + 1)
    kernel[::step] = B3_TAPS
    return kernel


def b3_kernel_2d(step: int = 1) -> np.ndarray:
    """Separable 2D kernel ``h[k, l] = h1d[k] * h1d[l]`` (dilated by ``step``)."""
    k = b3_kernel_1d(step)
    return np.outer(k, k)


def mirror_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Map arbitrary integer positions onto ``[0, n)`` by mirror reflection."""
    idx = np.asarray(idx)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    m = np.mod(idx, period)
    return np.where(m < n, m, period - m)


def _step(level_index: int, dilate: bool) -> int:
    return 2 ** (level_index - 1) if dilate else 1


def _convolve_axis(plane: np.ndarray, step: int, axis: int) -> np.ndarray:
    n = plane.shape[axis]
    base = np.arange(n)
    out = np.zeros_like(plane)
    for tap, offset in zip(B3_TAPS, B3_OFFSETS):
        src = mirror_indices(base + offset * step, n)
        out += tap * np.take(plane, src, axis=axis)
    return out


def smooth_level(plane, level_index: int, dilate: bool = True) -> np.ndarray:
    """Smooth ``plane`` with the level-``level_index`` B3 kernel.

    Rows are filtered first, then columns. With ``dilate=False`` the
    undilated kernel is used at every level.
    """
    if level_index < 1:
        raise ValueError(f"level_index must be >= 1, got {level_index}")
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2D plane, got shape {plane.shape}")
    step = _step(level_index, dilate)
    rows = _convolve_axis(plane, step, axis=1)
    return _convolve_axis(rows, step, axis=0)


@dataclass(frozen=True, eq=False)
class StarletDecomposition:
    """Detail planes ``w_1..w_L`` and the final smooth plane ``c_L``."""

    details: tuple
    smooth: np.ndarray
    dilate: bool = True

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def shape(self) -> tuple[int, int]:
        return self.smooth.shape

    def detail(self, j: int) -> np.ndarray:
        """Detail plane of level ``j`` (1-based)."""
        if not 1 <= j <= self.levels:
            raise ValueError(f"detail level must lie in [1, {self.levels}], got {j}")
        return self.details[j - 1]

    def reconstruct(self) -> np.ndarray:
        out = self.smooth.copy()
        for w in self.details:
            out += w
        return out


def _as_plane(image) -> np.ndarray:
    if isinstance(image, ImageGrid):
        return image.data
    plane = np.asarray(image, dtype=np.float64)
    if plane.ndim != 2 or plane.size == 0:
        raise ValueError(f"expected a non-empty 2D image, got shape {plane.shape}")
    if not np.all(np.isfinite(plane)):
        raise ValueError("image contains non-finite values")
    return plane


def _check_levels(levels: int, shape: tuple[int, int], dilate: bool) -> None:
    if int(levels) != levels or levels < 1:
        raise ValueError(f"levels must be an integer >= 1, got {levels}")
    span = 4 * _step(levels, dilate)
    if span > max(shape):
        warnings.warn(
            f"kernel span {span} at level {levels} exceeds image size {max(shape)}; "
            "mirror extension wraps around the image",
            RuntimeWarning,
            stacklevel=3,
        )


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def decompose(image, levels: int = 10, dilate: bool = True) -> StarletDecomposition:
    """Starlet transform of ``image`` over ``levels`` scales.

    Parameters
    ----------
    image : ImageGrid or array_like
        Input plane ``c_0``. Plain arrays need not be confined to ``[0, 1]``.
    levels : int
        Number of detail planes ``L`` (at least 1).
    dilate : bool
        Insert the à trous holes (default). ``False`` reuses the undilated
        kernel at every level.

    Returns
    -------
    StarletDecomposition
        ``details[j - 1] = c_{j-1} - c_j`` and ``smooth = c_L``.
    """
    plane = _as_plane(image)
    _check_levels(levels, plane.shape, dilate)
    current = plane.copy()
    details = []
    for j in range(1, levels + 1):
        smoothed = smooth_level(current, j, dilate)
        details.append(_freeze(current - smoothed))
        current = smoothed
    return StarletDecomposition(tuple(details), _freeze(current), dilate)


def _dense_smooth(plane: np.ndarray, step: int) -> np.ndarray:
    kernel = b3_kernel_2d(step)
    half = 2 * step
    padded = np.pad(plane, half, mode="reflect")
    h, w = plane.shape
    out = np.zeros_like(plane)
    size = kernel.shape[0]
    for a in range(size):
        for b in range(size):
            out += kernel[a, b] * padded[a:a + h, b:b + w]
    return out


def decompose_oracle(image, levels: int = 10, dilate: bool = True) -> StarletDecomposition:
    """Reference transform by dense 2D convolution; for small test images only.

    Uses the full ``(4s + 1) x (4s + 1)`` dilated kernel and NumPy's reflect
    padding instead of the separable path, so it checks :func:`decompose`
    independently.
    """
    plane = _as_plane(image)
    _check_levels(levels, plane.shape, dilate)
    current = plane.copy()
    details = []
    for j in range(1, levels + 1):
        smoothed = _dense_smooth(current, _step(j, dilate))
        details.append(_freeze(current - smoothed))
        current = smoothed
    return StarletDecomposition(tuple(details), _freeze(current), dilate)


def dump_planes(decomposition: StarletDecomposition, out_dir, stem: str) -> list[Path]:
    """Write every plane as a 16-bit PNG plus a min/max sidecar.

    Each plane is mapped affinely from ``[min, max]`` onto ``[0, 65535]``;
    ``<stem>_planes.txt`` lists ``name min max`` per plane (``repr`` floats)
    so values can be restored as ``min + v / 65535 * (max - min)``.
    """
    out_dir = Path(out_dir)
    planes = [(f"{stem}_w{j}", w) for j, w in enumerate(decomposition.details, start=1)]
    planes.append((f"{stem}_c{decomposition.levels}", decomposition.smooth))
    written = []
    lines = ["# plane min max"]
    for name, plane in planes:
        lo, hi = float(plane.min()), float(plane.max())
        if hi > lo:
            scaled = np.rint((plane - lo) / (hi - lo) * 65535.0)
        else:
            scaled = np.zeros_like(plane)
        path = out_dir / f"{name}.png"
        Image.fromarray(scaled.astype(np.uint16)).save(path, format="PNG")
        written.append(path)
        lines.append(f"{name} {lo!r} {hi!r}")
    sidecar = out_dir / f"{stem}_planes.txt"
    sidecar.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(sidecar)
    return written
