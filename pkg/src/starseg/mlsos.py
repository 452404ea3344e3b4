"""Optimal segmentation level election against ground truths.

Each training image is segmented at every level ``3..L`` and scored by MCC.
The dataset-wide level is then elected either by majority vote over the
per-image best levels or by the highest mean MCC.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .imagecore import BinaryMask
from .metrics import ConfusionCounts, ScoreReport, confusion, scores
from .mlss import segment_all, segment_level
from .starlet import decompose

__all__ = [
    "METHODS",
    "CSV_FIELDS",
    "LevelScoreRow",
    "LevelScoreTable",
    "LevelElection",
    "score_training_image",
    "best_level",
    "make_row",
    "elect_level",
    "apply_mlsos",
    "table_rows",
    "table_to_csv",
    "election_to_dict",
    "election_to_json",
]

METHODS = ("majority", "mean")
CSV_FIELDS = ("image", "level", "tp", "fp", "fn", "tn", "mcc",
              "precision", "recall", "accuracy", "undefined")


@dataclass(frozen=True)
class LevelScoreRow:
    image_id: str
    counts: dict
    reports: dict
    argmax_level: int

    @property
    def levels(self) -> list[int]:
        return list(self.reports)

    @property
    def mcc(self) -> dict:
        return {level: r.mcc for level, r in self.reports.items()}


@dataclass
class LevelScoreTable:
    rows: list = field(default_factory=list)

    def append(self, row: LevelScoreRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass(frozen=True)
class LevelElection:
    optimal_level: int
    per_level_mean_mcc: dict
    vote_counts: dict
    method: str


def best_level(mcc_by_level: dict) -> int:
    """Level with the highest MCC; the lowest level wins exact ties."""
    if not mcc_by_level:
        raise ValueError("no levels to choose from")
    return min(mcc_by_level, key=lambda level: (-mcc_by_level[level], level))


def make_row(image_id: str, counts: dict) -> LevelScoreRow:
    """Build a score row from per-level confusion counts."""
    counts = {level: counts[level] for level in sorted(counts)}
    reports = {level: scores(c) for level, c in counts.items()}
    argmax = best_level({level: r.mcc for level, r in reports.items()})
    return LevelScoreRow(image_id, counts, reports, argmax)


def score_training_image(image, gt: BinaryMask, levels: int = 10, *,
                         image_id: str = "", dilate: bool = True,
                         rule: str = "detail") -> LevelScoreRow:
    """Segment ``image`` at every level and score each mask against ``gt``."""
    shape = image.shape if hasattr(image, "shape") else None
    if shape != gt.shape:
        raise ValueError(f"image shape {shape} does not match ground truth shape {gt.shape}")
    segmentation = segment_all(image, levels, dilate=dilate, rule=rule)
    counts = {level: confusion(mask, gt) for level, mask in segmentation.masks.items()}
    return make_row(image_id, counts)


def _rows(table) -> list[LevelScoreRow]:
    rows = list(table.rows if isinstance(table, LevelScoreTable) else table)
    if not rows:
        raise ValueError("cannot elect a level from an empty score table")
    levels = rows[0].levels
    for row in rows[1:]:
        if row.levels != levels:
            raise ValueError(
                f"row {row.image_id!r} covers levels {row.levels}, expected {levels}"
            )
    return rows


def elect_level(table, method: str = "majority") -> LevelElection:
    """Elect one level for the whole dataset.

    ``majority`` picks the level that is the per-image best most often, ties
    going to the higher mean MCC and then the lower level. ``mean`` picks the
    level with the highest mean MCC, ties going to the lower level. Undefined
    MCC values enter the mean as 0.
    """
    if method not in METHODS:
        raise ValueError(f"unknown election method {method!r}; expected one of {METHODS}")
    rows = _rows(table)
    levels = rows[0].levels
    # fsum is exactly rounded, so the means do not depend on row order.
    mean_mcc = {
        level: math.fsum(r.reports[level].mcc for r in rows) / len(rows) for level in levels
    }
    votes = Counter(r.argmax_level for r in rows)
    vote_counts = {level: votes.get(level, 0) for level in levels}
    if method == "majority":
        optimal = min(levels, key=lambda lv: (-vote_counts[lv], -mean_mcc[lv], lv))
    else:
        optimal = min(levels, key=lambda lv: (-mean_mcc[lv], lv))
    return LevelElection(optimal, mean_mcc, vote_counts, method)


def apply_mlsos(images: Sequence, elected: int, levels: int | None = None, *,
                dilate: bool = True, rule: str = "detail") -> list[BinaryMask]:
    """Segment every image at the elected level, preserving order.

    ``levels`` defaults to ``elected``; deeper decompositions give identical
    ``R_elected`` because detail planes up to ``elected`` do not depend on
    later levels.
    """
    levels = elected if levels is None else levels
    if not 3 <= elected <= levels:
        raise ValueError(f"elected level must lie in [3, {levels}], got {elected}")
    out = []
    for image in images:
        decomposition = decompose(image, levels, dilate)
        out.append(segment_level(image, decomposition, elected, rule))
    return out


def _fmt(value: float) -> str:
    return repr(float(value))


def table_rows(table: Iterable[LevelScoreRow]) -> list[dict]:
    out = []
    for row in table:
        for level in row.levels:
            c: ConfusionCounts = row.counts[level]
            r: ScoreReport = row.reports[level]
            out.append({
                "image": row.image_id,
                "level": level,
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
                "tn": c.tn,
                "mcc": _fmt(r.mcc),
                "precision": _fmt(r.precision_pct),
                "recall": _fmt(r.recall_pct),
                "accuracy": _fmt(r.accuracy_pct),
                "undefined": ";".join(sorted(r.undefined)),
            })
    return out


def table_to_csv(table: Iterable[LevelScoreRow]) -> str:
    """Long-format CSV, one line per (image, level)."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(table_rows(table))
    return buf.getvalue()


def election_to_dict(election: LevelElection, table=None) -> dict:
    out = {
        "election": {
            "method": election.method,
            "optimal_level": election.optimal_level,
            "votes": {str(k): v for k, v in election.vote_counts.items()},
            "mean_mcc_per_level": {str(k): v for k, v in election.per_level_mean_mcc.items()},
        }
    }
    if table is not None:
        out["images"] = [
            {"image": row.image_id, "argmax_level": row.argmax_level,
             "mcc": {str(k): v for k, v in row.mcc.items()}}
            for row in table
        ]
    return out


def election_to_json(election: LevelElection, table=None) -> str:
    return json.dumps(election_to_dict(election, table), indent=2) + "\n"
