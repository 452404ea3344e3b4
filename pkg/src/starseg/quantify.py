"""Physical concentration estimates from segmented masks and a scale bar.

Two quantities are reported for every mask:

* ``area_physical = count * (length / pixels) ** 2``, the foreground area in
  squared length units;
* ``total_au_paper = (length / pixels * count) ** 2``, the squared-product
  form used by the original method. It agrees with the area for a single
  pixel and grows quadratically with the count otherwise.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .imagecore import BinaryMask

__all__ = [
    "ScaleBar",
    "ConcentrationResult",
    "BatchEntry",
    "BatchRow",
    "CSV_FIELDS",
    "quantify",
    "batch_quantify",
    "batch_to_csv",
]

CSV_FIELDS = ("id", "magnification", "reduction_time_min", "total_np",
              "area_um2", "total_au_paper", "error")


@dataclass(frozen=True)
class ScaleBar:
    """Scale bar of ``length`` units spanning ``pixels`` pixels (e.g. 1 µm = 400 px)."""

    length: float
    pixels: float
    unit: str = "um"

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValueError(f"scale bar length must be positive, got {self.length}")
        if not (math.isfinite(self.pixels) and self.pixels > 0):
            raise ValueError(f"scale bar pixel extent must be positive, got {self.pixels}")

    @property
    def units_per_pixel(self) -> float:
        return self.length / self.pixels


@dataclass(frozen=True)
class ConcentrationResult:
    total_np: int
    total_au_paper: float
    area_physical: float
    unit: str

    @property
    def area_unit(self) -> str:
        return f"{self.unit}^2"


def quantify(mask: BinaryMask, scale: ScaleBar) -> ConcentrationResult:
    count = mask.foreground_count
    ratio = scale.length / scale.pixels
    return ConcentrationResult(
        total_np=count,
        total_au_paper=(ratio * count) ** 2,
        area_physical=count * ratio ** 2,
        unit=scale.unit,
    )


@dataclass(frozen=True)
class BatchEntry:
    """One mask to quantify; ``scale`` may be given raw as ``(length, pixels, unit)``."""

    id: str
    mask: Optional[BinaryMask]
    scale: object
    magnification: Optional[float] = None
    reduction_time_min: Optional[float] = None


@dataclass(frozen=True)
class BatchRow:
    id: str
    result: Optional[ConcentrationResult]
    magnification: Optional[float] = None
    reduction_time_min: Optional[float] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.result is not None


def _scale(value) -> ScaleBar:
    if isinstance(value, ScaleBar):
        return value
    return ScaleBar(*value)


def batch_quantify(entries: Iterable[BatchEntry]) -> list[BatchRow]:
    """Quantify every entry in order; a failing entry yields a row with ``error`` set."""
    rows = []
    for entry in entries:
        try:
            if entry.mask is None:
                raise ValueError("mask could not be loaded")
            result = quantify(entry.mask, _scale(entry.scale))
            rows.append(BatchRow(entry.id, result, entry.magnification, entry.reduction_time_min))
        except (ValueError, TypeError) as exc:
            rows.append(BatchRow(entry.id, None, entry.magnification,
                                 entry.reduction_time_min, str(exc)))
    return rows


def _num(value) -> str:
    if value is None:
        return ""
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)


def _sci(value: float) -> str:
    return f"{value:.9e}"


def batch_to_csv(rows: Iterable[BatchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        if row.ok:
            r = row.result
            values = [str(r.total_np), _sci(r.area_physical), _sci(r.total_au_paper)]
        else:
            values = ["", "", ""]
        writer.writerow([row.id, _num(row.magnification), _num(row.reduction_time_min),
                         *values, row.error])
    return buf.getvalue()
