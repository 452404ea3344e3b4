import csv
import io
import itertools
import json

import numpy as np
import pytest

from starseg.imagecore import BinaryMask, ImageGrid
from starseg.metrics import ScoreReport, confusion, mcc
from starseg.mlsos import (
    CSV_FIELDS,
    LevelScoreRow,
    LevelScoreTable,
    apply_mlsos,
    best_level,
    elect_level,
    election_to_json,
    score_training_image,
    table_to_csv,
)
from starseg.mlss import segment_all, segment_level
from starseg.phantom import PhantomParams, make_phantom
from starseg.starlet import decompose

pytestmark = pytest.mark.filterwarnings("ignore:kernel span:RuntimeWarning")

# MCC (%) per level R3..R10 for six annotated gold-nanoparticle micrographs.
MICROGRAPH_MCC = {
    "6min_100k": [5.342, 22.382, 32.335, 36.172, 34.039, 27.096, 17.031, 10.646],
    "9min_200k": [2.302, 25.040, 30.712, 39.613, 49.271, 47.863, 34.236, 18.007],
    "15min_200k": [7.642, 31.534, 49.005, 65.083, 72.195, 63.440, 48.205, 28.944],
    "30min_100k": [15.662, 39.251, 46.976, 55.753, 63.359, 67.580, 65.125, 59.147],
    "30min_200k": [4.314, 32.183, 53.876, 65.137, 72.593, 70.222, 65.261, 52.300],
    "60min_30k": [0.0, 8.841, 26.021, 42.144, 51.235, 56.591, 45.687, 33.489],
}


def row_from_mcc(image_id, mcc_by_level):
    reports = {lv: ScoreReport(v, 0.0, 0.0, 0.0) for lv, v in mcc_by_level.items()}
    return LevelScoreRow(image_id, {}, reports, best_level(mcc_by_level))


def micrograph_rows():
    return [row_from_mcc(k, dict(zip(range(3, 11), v))) for k, v in MICROGRAPH_MCC.items()]


@pytest.fixture(scope="module")
def phantom():
    return make_phantom(11, PhantomParams(size=(128, 128), n_blobs=20))


def test_best_level_tie_goes_low():
    assert best_level({3: 0.2, 4: 0.5, 5: 0.5}) == 4
    assert best_level({3: 0.0, 4: 0.0}) == 3


def test_self_consistent_gt(phantom):
    image, _ = phantom
    seg = segment_all(image, 10)
    for k in (5, 7):
        gt = seg[k]
        row = score_training_image(image, gt, 10)
        assert row.reports[k].mcc == 1.0
        assert row.argmax_level == k or row.reports[row.argmax_level].mcc == 1.0
        assert seg[row.argmax_level] == gt


def test_constant_image_all_flagged():
    image = ImageGrid(np.full((32, 32), 0.5))
    gt = BinaryMask(np.eye(32, dtype=bool))
    row = score_training_image(image, gt, 6)
    for level, c in row.counts.items():
        assert c.tp == 0
        assert row.reports[level].mcc == 0.0
        assert "mcc" in row.reports[level].undefined
    assert row.argmax_level == 3


def test_resweep_oracle(phantom):
    image, truth = phantom
    row = score_training_image(image, truth, 10)
    d = decompose(image.data, 10)
    sweep = {i: mcc(confusion(segment_level(image, d, i), truth)) for i in range(3, 11)}
    assert row.mcc == sweep
    top = max(sweep.values())
    assert row.argmax_level == min(i for i, v in sweep.items() if v == top)


def test_shape_mismatch(phantom):
    image, _ = phantom
    with pytest.raises(ValueError, match="shape"):
        score_training_image(image, BinaryMask(np.zeros((5, 5), bool)), 5)


def test_micrograph_votes_elect_r7():
    rows = micrograph_rows()
    assert [r.argmax_level for r in rows] == [6, 7, 7, 8, 7, 8]
    election = elect_level(rows, "majority")
    assert election.optimal_level == 7
    assert election.vote_counts == {3: 0, 4: 0, 5: 0, 6: 1, 7: 3, 8: 2, 9: 0, 10: 0}
    assert elect_level(rows, "mean").optimal_level == 7


def test_single_image_both_methods():
    row = row_from_mcc("a", {3: 0.1, 4: 0.4, 5: 0.3})
    for method in ("majority", "mean"):
        assert elect_level([row], method).optimal_level == 4


def test_majority_tie_broken_by_mean():
    rows = [
        row_from_mcc("a", {5: 0.60, 6: 0.55}),
        row_from_mcc("b", {5: 0.30, 6: 0.70}),
    ]
    assert [r.argmax_level for r in rows] == [5, 6]
    election = elect_level(rows, "majority")
    assert election.vote_counts == {5: 1, 6: 1}
    assert election.per_level_mean_mcc[6] > election.per_level_mean_mcc[5]
    assert election.optimal_level == 6


def test_full_tie_goes_to_lower_level():
    rows = [row_from_mcc("a", {5: 0.6, 6: 0.4}), row_from_mcc("b", {5: 0.4, 6: 0.6})]
    assert elect_level(rows, "majority").optimal_level == 5
    assert elect_level(rows, "mean").optimal_level == 5


def test_mean_and_majority_can_differ():
    rows = [
        row_from_mcc("a", {3: 0.50, 4: 0.49}),
        row_from_mcc("b", {3: 0.50, 4: 0.49}),
        row_from_mcc("c", {3: 0.00, 4: 0.90}),
    ]
    assert elect_level(rows, "majority").optimal_level == 3
    assert elect_level(rows, "mean").optimal_level == 4


def test_election_consistency_invariants():
    rows = micrograph_rows()
    for method in ("majority", "mean"):
        e = elect_level(rows, method)
        if method == "mean":
            assert all(v <= e.per_level_mean_mcc[e.optimal_level] for v in e.per_level_mean_mcc.values())
        else:
            assert all(v <= e.vote_counts[e.optimal_level] for v in e.vote_counts.values())


def test_unanimous_argmax():
    rows = [row_from_mcc(str(k), {3: 0.1, 4: 0.2 + k / 100, 5: 0.15}) for k in range(4)]
    assert elect_level(rows, "majority").optimal_level == 4
    assert elect_level(rows, "mean").optimal_level == 4


def test_permutation_invariance():
    rows = micrograph_rows()
    reference = elect_level(rows)
    for perm in itertools.permutations(rows):
        e = elect_level(list(perm))
        assert e == reference


def test_empty_table_and_bad_method():
    with pytest.raises(ValueError, match="empty"):
        elect_level(LevelScoreTable())
    with pytest.raises(ValueError, match="method"):
        elect_level(micrograph_rows(), "median")


def test_mismatched_levels_rejected():
    rows = [row_from_mcc("a", {3: 0.1, 4: 0.2}), row_from_mcc("b", {3: 0.1})]
    with pytest.raises(ValueError, match="levels"):
        elect_level(rows)


def test_apply_matches_segment_level(phantom):
    image, _ = phantom
    d = decompose(image, 10)
    [mask] = apply_mlsos([image], 7)
    assert mask == segment_level(image, d, 7)
    assert apply_mlsos([], 7) == []


def test_apply_preserves_order():
    images = [make_phantom(s, PhantomParams(size=(64, 64), n_blobs=5))[0] for s in range(3)]
    masks = apply_mlsos(images, 6, levels=8)
    for image, mask in zip(images, masks):
        assert mask == segment_level(image, decompose(image, 6), 6)


def test_apply_level_checked(phantom):
    with pytest.raises(ValueError):
        apply_mlsos([phantom[0]], 2)
    with pytest.raises(ValueError):
        apply_mlsos([phantom[0]], 9, levels=8)


def test_csv_and_json(phantom):
    image, truth = phantom
    row = score_training_image(image, truth, 6, image_id="p")
    text = table_to_csv([row])
    reader = csv.DictReader(io.StringIO(text))
    assert tuple(reader.fieldnames) == CSV_FIELDS
    records = list(reader)
    assert [int(r["level"]) for r in records] == [3, 4, 5, 6]
    for r in records:
        level = int(r["level"])
        assert float(r["mcc"]) == row.reports[level].mcc
        c = row.counts[level]
        assert (int(r["tp"]), int(r["fp"]), int(r["fn"]), int(r["tn"])) == (c.tp, c.fp, c.fn, c.tn)
    payload = json.loads(election_to_json(elect_level([row]), [row]))
    assert list(payload["election"]) == ["method", "optimal_level", "votes", "mean_mcc_per_level"]
    assert payload["election"]["optimal_level"] == row.argmax_level
    assert payload["images"][0]["argmax_level"] == row.argmax_level
