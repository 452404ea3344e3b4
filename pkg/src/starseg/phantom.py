"""Synthetic blob phantoms with known ground truth.

Bright Gaussian spots on a smooth linear background gradient, with additive
Gaussian noise. A spot's diameter spans four standard deviations of its
profile (the ``+-2 sigma`` visible extent), and the ground truth marks every
pixel inside that disk.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagecore import BinaryMask, ImageGrid, save_mask

__all__ = ["PhantomParams", "DEFAULT_PARAMS", "make_phantom", "write_phantom_suite"]

SIGMAS_PER_DIAMETER = 4.0


@dataclass(frozen=True)
class PhantomParams:
    size: tuple = (512, 512)
    n_blobs: int = 150
    diameter_range: tuple = (10.0, 30.0)
    amplitude: float = 0.6
    background_level: float = 0.15
    gradient_amplitude: float = 0.2
    noise_sigma: float = 0.05
    min_gap: float = 4.0


DEFAULT_PARAMS = PhantomParams()


def _place_blobs(rng, params: PhantomParams):
    h, w = params.size
    lo, hi = params.diameter_range
    placed = []
    attempts = 0
    while len(placed) < params.n_blobs and attempts < 100 * params.n_blobs:
        attempts += 1
        d = rng.uniform(lo, hi)
        cy = rng.uniform(d / 2, h - d / 2)
        cx = rng.uniform(d / 2, w - d / 2)
        if all(np.hypot(cy - y, cx - x) >= (d + e) / 2 + params.min_gap for y, x, e in placed):
            placed.append((cy, cx, d))
    return placed


def make_phantom(seed: int, params: PhantomParams = DEFAULT_PARAMS):
    """Return ``(image, ground_truth)`` for one deterministic phantom."""
    rng = np.random.default_rng(seed)
    h, w = params.size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xx / max(w - 1, 1) + np.sin(angle) * yy / max(h - 1, 1))
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    clean = params.background_level + params.gradient_amplitude * ramp

    truth = np.zeros((h, w), dtype=bool)
    for cy, cx, d in _place_blobs(rng, params):
        sigma = d / SIGMAS_PER_DIAMETER
        r2 = (yy - cy) ** 2 + (xx - cx) ** 2
        clean += params.amplitude * np.exp(-r2 / (2 * sigma ** 2))
        truth |= r2 <= (d / 2) ** 2

    noisy = clean + rng.normal(0.0, params.noise_sigma, size=(h, w))
    return ImageGrid(np.clip(noisy, 0.0, 1.0)), BinaryMask(truth)


def _save_gray(grid: ImageGrid, path: Path) -> None:
    from PIL import Image

    Image.fromarray(np.rint(grid.data * 65535).astype(np.uint16)).save(path, format="PNG")


def write_phantom_suite(out_dir, count: int, seed: int = 0,
                        params: PhantomParams = DEFAULT_PARAMS, prefix: str = "phantom") -> list[Path]:
    """Write ``count`` phantoms as 16-bit PNGs with ``<stem>_gt.png`` ground truths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(count):
        image, truth = make_phantom(seed + k, params)
        stem = f"{prefix}_{seed + k:03d}"
        path = out_dir / f"{stem}.png"
        _save_gray(image, path)
        save_mask(truth, out_dir / f"{stem}_gt.png")
        paths.append(path)
    return paths
