"""Command line front end: ``starseg <subcommand> ...``.

Subcommands write their outputs under ``--out`` together with a single
``manifest.json`` recording inputs (with SHA-256 hashes), parameters and the
tool version. Exit status is 0 only when every requested output was written.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import re
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .imagecore import load_grayscale, load_mask, save_mask, save_rgb
from .metrics import confusion, overlay, scores
from .mlsos import (
    LevelScoreTable,
    election_to_json,
    elect_level,
    make_row,
    score_training_image,
    table_to_csv,
)
from .mlss import segment_all, segment_level
from .quantify import BatchEntry, ScaleBar, batch_quantify, batch_to_csv
from .starlet import decompose, dump_planes

log = logging.getLogger("starseg")

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")
GT_SUFFIX = "_gt"
MANIFEST = "manifest.json"


class CliError(Exception):
    """Fatal error reported on stderr with exit status 1."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _inputs_record(paths) -> list[dict]:
    out = []
    for p in paths:
        p = Path(p)
        try:
            out.append({"path": str(p), "sha256": _sha256(p)})
        except OSError as exc:
            out.append({"path": str(p), "sha256": None, "error": str(exc)})
    return out


def write_manifest(out: Path, args, inputs, params: dict, *, complete: bool = True,
                   failures: list | None = None, extra: dict | None = None) -> Path:
    manifest = {
        "tool": "starseg",
        "version": __version__,
        "command": args.command,
        "argv": list(getattr(args, "argv", [])),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "parameters": params,
        "inputs": _inputs_record(inputs),
        "complete": complete,
        "failures": failures or [],
    }
    if extra:
        manifest.update(extra)
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _common_params(args) -> dict:
    return {
        "levels": args.levels,
        "dilation": not args.no_dilation,
        "mlss_rule": args.mlss_rule,
        "jobs": args.jobs,
    }


def _pool_map(fn, items, jobs: int) -> list:
    """Apply ``fn`` to every item; results (or raised exceptions) in input order."""

    def guarded(item):
        try:
            return fn(item)
        except Exception as exc:  # noqa: BLE001 - reported per item
            return exc

    if jobs <= 1 or len(items) <= 1:
        return [guarded(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(guarded, items))


def _log_failure(source: str, message: str) -> None:
    log.error("%s", message if source in message else f"{source}: {message}")


def _is_image(path: Path) -> bool:
    return path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES


def list_images(directory: Path) -> list[Path]:
    """Supported rasters in ``directory`` excluding ``*_gt`` files, sorted by name."""
    if not directory.is_dir():
        raise CliError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir()
                  if _is_image(p) and not p.stem.endswith(GT_SUFFIX))


def find_gt(image_path: Path) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        candidate = image_path.with_name(f"{image_path.stem}{GT_SUFFIX}{suffix}")
        if candidate.is_file():
            return candidate
    return None


def discover_pairs(directory: Path) -> list[tuple[Path, Path]]:
    pairs = []
    for image in list_images(directory):
        gt = find_gt(image)
        if gt is not None:
            pairs.append((image, gt))
    return pairs


def _check_level_arg(args) -> None:
    if args.levels < 1:
        raise CliError(f"--levels must be >= 1, got {args.levels}")


def _check_mlss_levels(args) -> None:
    if args.levels < 3:
        raise CliError(
            f"--levels must be >= 3 for segmentation (levels 1-2 are ignored), got {args.levels}"
        )


_LEVEL_SUFFIX = re.compile(r"_R\d+$")


def _read_meta(path: str | None) -> dict:
    """Optional per-image metadata keyed by ``id``."""
    if not path:
        return {}
    meta = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = (row.get("id") or "").strip()
                if key:
                    meta[key] = {k: (v.strip() if isinstance(v, str) else v) for k, v in row.items()}
    except OSError as exc:
        raise CliError(f"cannot read metadata file {path}: {exc}") from exc
    return meta


def _float_or_none(value):
    if value is None or value == "":
        return None
    return float(value)


def _lookup_meta(meta: dict, ident: str) -> dict:
    if ident in meta:
        return meta[ident]
    return meta.get(_LEVEL_SUFFIX.sub("", ident), {})


def _scale_from_args(args):
    if args.scale_length is None or args.scale_pixels is None:
        return None
    return (args.scale_length, args.scale_pixels, args.scale_unit)


def _build_entries(items, args, meta: dict) -> list[BatchEntry]:
    """``items`` is a list of ``(id, mask_or_None)``."""
    default_scale = _scale_from_args(args)
    entries = []
    for ident, mask in items:
        info = _lookup_meta(meta, ident)
        scale = default_scale
        if info.get("scale_length") or info.get("scale_pixels"):
            scale = (_float_or_none(info.get("scale_length")),
                     _float_or_none(info.get("scale_pixels")),
                     info.get("scale_unit") or args.scale_unit)
        if scale is None:
            scale = (float("nan"), float("nan"), args.scale_unit)
        entries.append(BatchEntry(
            id=ident,
            mask=mask,
            scale=scale,
            magnification=_float_or_none(info.get("magnification")),
            reduction_time_min=_float_or_none(info.get("reduction_time_min")),
        ))

    def order(entry: BatchEntry):
        return (entry.magnification if entry.magnification is not None else -1.0,
                entry.reduction_time_min if entry.reduction_time_min is not None else -1.0,
                entry.id)

    return sorted(entries, key=order)


def _chart_csv(rows, paper_formula: bool) -> str:
    quantity = "total_au_paper" if paper_formula else "area_physical"
    lines = ["magnification,reduction_time_min,id,quantity,value"]
    for row in rows:
        if not row.ok:
            continue
        value = row.result.total_au_paper if paper_formula else row.result.area_physical
        mag = "" if row.magnification is None else f"{row.magnification:g}"
        red = "" if row.reduction_time_min is None else f"{row.reduction_time_min:g}"
        lines.append(f"{mag},{red},{row.id},{quantity},{value:.9e}")
    return "\n".join(lines) + "\n"


def _write_quantification(out: Path, rows, paper_formula: bool) -> None:
    (out / "concentration.csv").write_text(batch_to_csv(rows), encoding="utf-8")
    (out / "chart.csv").write_text(_chart_csv(rows, paper_formula), encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_decompose(args) -> int:
    _check_level_arg(args)
    src = Path(args.input)
    image = load_grayscale(src)
    out = _out_dir(args)
    decomposition = decompose(image, args.levels, dilate=not args.no_dilation)
    written = []
    if args.dump_planes:
        written = dump_planes(decomposition, out, src.stem)
    stats = {
        f"w{j}": {"min": float(w.min()), "max": float(w.max())}
        for j, w in enumerate(decomposition.details, start=1)
    }
    stats[f"c{decomposition.levels}"] = {"min": float(decomposition.smooth.min()),
                                         "max": float(decomposition.smooth.max())}
    write_manifest(out, args, [src], _common_params(args) | {"dump_planes": args.dump_planes},
                   extra={"outputs": [p.name for p in written], "planes": stats})
    log.info("decomposed %s into %d levels", src, decomposition.levels)
    return 0


def cmd_segment(args) -> int:
    _check_mlss_levels(args)
    if args.level is not None and not 3 <= args.level <= args.levels:
        raise CliError(f"--level must lie in [3, {args.levels}], got {args.level}")
    src = Path(args.input)
    image = load_grayscale(src)
    out = _out_dir(args)
    dilate = not args.no_dilation
    if args.level is not None:
        decomposition = decompose(image, args.level, dilate)
        masks = {args.level: segment_level(image, decomposition, args.level, args.mlss_rule)}
    else:
        masks = segment_all(image, args.levels, dilate=dilate, rule=args.mlss_rule).masks
    written = []
    for level, mask in masks.items():
        path = out / f"{src.stem}_R{level}.png"
        save_mask(mask, path)
        written.append(path.name)
    write_manifest(out, args, [src], _common_params(args) | {"level": args.level},
                   extra={"outputs": written})
    log.info("wrote %d mask(s) to %s", len(written), out)
    return 0


def cmd_evaluate(args) -> int:
    _check_mlss_levels(args)
    src = Path(args.input)
    gt_path = Path(args.gt)
    image = load_grayscale(src)
    gt = load_mask(gt_path, args.gt_threshold)
    if image.shape != gt.shape:
        raise CliError(f"ground truth shape {gt.shape} does not match image shape {image.shape}")
    out = _out_dir(args)
    segmentation = segment_all(image, args.levels, dilate=not args.no_dilation,
                               rule=args.mlss_rule)
    counts = {}
    for level, mask in segmentation.masks.items():
        counts[level] = confusion(mask, gt)
        save_rgb(overlay(mask, gt), out / f"{src.stem}_R{level}_overlay.png")
    row = make_row(src.stem, counts)
    (out / "scores.csv").write_text(table_to_csv([row]), encoding="utf-8")
    summary = {
        "image": src.stem,
        "argmax_level": row.argmax_level,
        "levels": {
            str(level): {
                "mcc": r.mcc,
                "precision": r.precision_pct,
                "recall": r.recall_pct,
                "accuracy": r.accuracy_pct,
                "undefined": sorted(r.undefined),
            }
            for level, r in row.reports.items()
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    write_manifest(out, args, [src, gt_path],
                   _common_params(args) | {"gt_threshold": args.gt_threshold})
    print(f"{src.stem}: best level R{row.argmax_level} (MCC {row.reports[row.argmax_level].mcc:.5f})")
    return 0


def _score_pairs(pairs, args) -> tuple[LevelScoreTable, list]:
    dilate = not args.no_dilation

    def work(pair):
        image_path, gt_path = pair
        image = load_grayscale(image_path)
        gt = load_mask(gt_path, args.gt_threshold)
        return score_training_image(image, gt, args.levels, image_id=image_path.stem,
                                    dilate=dilate, rule=args.mlss_rule)

    results = _pool_map(work, pairs, args.jobs)
    table = LevelScoreTable()
    failures = []
    for (image_path, _), result in zip(pairs, results):
        if isinstance(result, Exception):
            failures.append({"input": str(image_path), "stage": "select-level",
                             "error": str(result)})
        else:
            table.append(result)
    return table, failures


def cmd_select_level(args) -> int:
    _check_mlss_levels(args)
    train = Path(args.train_dir)
    pairs = discover_pairs(train)
    if not pairs:
        raise CliError(f"no (image, ground truth) pairs found in {train} "
                       f"(expected <stem>.png with <stem>{GT_SUFFIX}.png)")
    out = _out_dir(args)
    table, failures = _score_pairs(pairs, args)
    params = _common_params(args) | {"method": args.method, "gt_threshold": args.gt_threshold}
    inputs = [p for pair in pairs for p in pair]
    if failures:
        for f in failures:
            _log_failure(f["input"], f["error"])
        write_manifest(out, args, inputs, params, complete=False, failures=failures)
        raise CliError(f"{len(failures)} training pair(s) failed; see {out / MANIFEST}")
    election = elect_level(table, args.method)
    (out / "scores.csv").write_text(table_to_csv(table), encoding="utf-8")
    (out / "election.json").write_text(election_to_json(election, table), encoding="utf-8")
    write_manifest(out, args, inputs, params,
                   extra={"optimal_level": election.optimal_level})
    print(f"elected level: R{election.optimal_level} ({args.method}, {len(table)} image(s))")
    return 0


def _mask_paths(items: list[str]) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if _is_image(q)))
        else:
            paths.append(p)
    return paths


def cmd_quantify(args) -> int:
    scale = _scale_from_args(args)
    if scale is not None:
        try:
            ScaleBar(*scale)
        except ValueError as exc:
            raise CliError(f"invalid scale bar: {exc}") from exc
    paths = _mask_paths(args.masks)
    if not paths:
        raise CliError("no mask files given")
    meta = _read_meta(args.meta)
    out = _out_dir(args)

    items = []
    failures = []
    for path in paths:
        try:
            items.append((path.stem, load_mask(path, 0.5)))
        except (OSError, ValueError) as exc:
            failures.append({"input": str(path), "stage": "load", "error": str(exc)})
            items.append((path.stem, None))
    rows = batch_quantify(_build_entries(items, args, meta))
    _write_quantification(out, rows, args.paper_formula)
    for row in rows:
        if not row.ok and not any(Path(f["input"]).stem == row.id for f in failures):
            failures.append({"input": row.id, "stage": "quantify", "error": row.error})
    params = {"scale_length": args.scale_length, "scale_unit": args.scale_unit,
              "scale_pixels": args.scale_pixels, "paper_formula": args.paper_formula,
              "meta": args.meta}
    write_manifest(out, args, paths, params, complete=not failures, failures=failures)
    if failures:
        for f in failures:
            _log_failure(f["input"], f["error"])
        return 1
    return 0


def cmd_pipeline(args) -> int:
    _check_mlss_levels(args)
    scale = _scale_from_args(args)
    if scale is None:
        raise CliError("pipeline requires --scale-length and --scale-pixels")
    try:
        ScaleBar(*scale)
    except ValueError as exc:
        raise CliError(f"invalid scale bar: {exc}") from exc
    train = Path(args.train_dir)
    apply_dir = Path(args.apply_dir)
    pairs = discover_pairs(train)
    if not pairs:
        raise CliError(f"stage select-level: no (image, ground truth) pairs in {train}")
    apply_images = list_images(apply_dir)
    if not apply_images:
        raise CliError(f"stage apply: no images found in {apply_dir}")
    meta = _read_meta(args.meta)

    out = _out_dir(args)
    params = _common_params(args) | {
        "method": args.method, "gt_threshold": args.gt_threshold,
        "scale_length": args.scale_length, "scale_unit": args.scale_unit,
        "scale_pixels": args.scale_pixels, "paper_formula": args.paper_formula,
        "meta": args.meta,
    }
    inputs = [p for pair in pairs for p in pair] + apply_images

    # stage 1: election
    election_dir = out / "election"
    election_dir.mkdir(exist_ok=True)
    table, failures = _score_pairs(pairs, args)
    if failures:
        for f in failures:
            _log_failure(f["input"], f["error"])
        write_manifest(out, args, inputs, params, complete=False, failures=failures)
        raise CliError(f"stage select-level failed for {len(failures)} pair(s); "
                       f"see {out / MANIFEST}")
    election = elect_level(table, args.method)
    level = election.optimal_level
    (election_dir / "scores.csv").write_text(table_to_csv(table), encoding="utf-8")
    (election_dir / "election.json").write_text(election_to_json(election, table),
                                                encoding="utf-8")
    log.info("elected level R%d", level)

    # stage 2: apply
    masks_dir = out / "masks"
    overlays_dir = out / "overlays"
    masks_dir.mkdir(exist_ok=True)
    dilate = not args.no_dilation

    def work(path: Path):
        image = load_grayscale(path)
        decomposition = decompose(image, level, dilate)
        mask = segment_level(image, decomposition, level, args.mlss_rule)
        save_mask(mask, masks_dir / f"{path.stem}_R{level}.png")
        row = None
        gt_path = find_gt(path)
        if gt_path is not None:
            gt = load_mask(gt_path, args.gt_threshold)
            if gt.shape != mask.shape:
                raise ValueError(f"ground truth {gt_path.name} shape {gt.shape} "
                                 f"does not match image shape {mask.shape}")
            overlays_dir.mkdir(exist_ok=True)
            save_rgb(overlay(mask, gt), overlays_dir / f"{path.stem}_R{level}_overlay.png")
            row = make_row(path.stem, {level: confusion(mask, gt)})
        return mask, row

    results = _pool_map(work, apply_images, args.jobs)
    items = []
    score_rows = []
    for path, result in zip(apply_images, results):
        if isinstance(result, Exception):
            failures.append({"input": str(path), "stage": "apply", "error": str(result)})
            _log_failure(str(path), str(result))
            items.append((path.stem, None))
            continue
        mask, row = result
        items.append((path.stem, mask))
        if row is not None:
            score_rows.append(row)
    (out / "scores.csv").write_text(table_to_csv(score_rows), encoding="utf-8")

    # stage 3: quantify
    rows = batch_quantify(_build_entries(items, args, meta))
    _write_quantification(out, rows, args.paper_formula)
    failed_ids = {Path(f["input"]).stem for f in failures}
    for row in rows:
        if not row.ok and row.id not in failed_ids:
            failures.append({"input": row.id, "stage": "quantify", "error": row.error})

    write_manifest(out, args, inputs, params, complete=not failures, failures=failures,
                   extra={"optimal_level": level,
                          "segmented": sum(1 for _, m in items if m is not None)})
    print(f"elected level: R{level}; segmented {sum(1 for _, m in items if m is not None)}"
          f"/{len(apply_images)} image(s)")
    return 1 if failures else 0


def cmd_make_phantoms(args) -> int:
    from .phantom import write_phantom_suite

    out = _out_dir(args)
    paths = write_phantom_suite(out, args.count, seed=args.seed)
    write_manifest(out, args, [], {"count": args.count, "seed": args.seed},
                   extra={"outputs": [p.name for p in paths]})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--levels", type=int, default=10,
                        help="number of starlet levels L (default: 10)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1,
                        help="maximum number of images processed concurrently")
    common.add_argument("--no-dilation", action="store_true",
                        help="use the undilated B3 kernel at every level")
    common.add_argument("--mlss-rule", choices=("detail", "literal"), default="detail",
                        help="binarization rule for R_i (default: detail)")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    scale = argparse.ArgumentParser(add_help=False)
    scale.add_argument("--scale-length", type=float, help="scale bar length in physical units")
    scale.add_argument("--scale-unit", default="um", help="scale bar unit label (default: um)")
    scale.add_argument("--scale-pixels", type=float, help="scale bar extent in pixels")
    scale.add_argument("--paper-formula", action="store_true",
                       help="chart the squared-product estimate instead of the physical area")
    scale.add_argument("--meta", help="CSV with id,magnification,reduction_time_min "
                                      "[,scale_length,scale_pixels,scale_unit]")

    gt = argparse.ArgumentParser(add_help=False)
    gt.add_argument("--gt-threshold", type=float, default=0.5,
                    help="ground truth binarization threshold (default: 0.5)")

    parser = argparse.ArgumentParser(
        prog="starseg",
        description="Starlet multi-level segmentation, level election and quantification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", parents=[common], help="starlet decomposition")
    p.add_argument("input")
    p.add_argument("--dump-planes", action="store_true",
                   help="write every plane as a 16-bit PNG with a min/max sidecar")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("segment", parents=[common], help="multi-level segmentation")
    p.add_argument("input")
    p.add_argument("--level", type=int, help="write only R_<level>")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", parents=[common, gt], help="score every level against a GT")
    p.add_argument("input")
    p.add_argument("--gt", required=True, help="ground truth mask")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("select-level", parents=[common, gt],
                       help="elect the optimal level on a training set")
    p.add_argument("--train-dir", required=True,
                   help="directory of <stem>.png images with <stem>_gt.* masks")
    p.add_argument("--method", choices=("majority", "mean"), default="majority",
                   help="vote on per-image best levels or maximise mean MCC (default: majority)")
    p.set_defaults(func=cmd_select_level)

    p = sub.add_parser("quantify", parents=[common, scale], help="concentration from masks")
    p.add_argument("--masks", nargs="+", required=True, help="mask files and/or directories")
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("pipeline", parents=[common, gt, scale],
                       help="elect on --train-dir, segment and quantify --apply-dir")
    p.add_argument("--train-dir", required=True,
                   help="directory of <stem>.png images with <stem>_gt.* masks")
    p.add_argument("--apply-dir", required=True,
                   help="images to segment at the elected level")
    p.add_argument("--method", choices=("majority", "mean"), default="majority",
                   help="vote on per-image best levels or maximise mean MCC (default: majority)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("make-phantoms", parents=[common],
                       help="write synthetic blob phantoms with ground truths")
    p.add_argument("--count", type=_positive_int, default=6, help="number of phantoms")
    p.add_argument("--seed", type=int, default=0, help="seed of the first phantom")
    p.set_defaults(func=cmd_make_phantoms)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = ["starseg", *argv]
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except CliError as exc:
        print(f"starseg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"starseg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
