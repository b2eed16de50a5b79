import numpy as np
import pytest

from mpsuq.metrics import (
    boundary,
    dice,
    edt_squared,
    evaluate_directories,
    evaluate_pair,
    hd95,
    iou,
    pixel_accuracy,
)
from mpsuq.npyio import save_array
from mpsuq.validation import ValidationError


def brute_force_edt(mask):
    h, w = mask.shape
    fg = np.argwhere(mask)
    yy, xx = np.mgrid[0:h, 0:w]
    pts = np.stack([yy.ravel(), xx.ravel()], axis=1)
    d2 = ((pts[:, None, :] - fg[None, :, :]) ** 2).sum(-1).min(axis=1)
    return d2.reshape(h, w).astype(float)


def brute_force_hd95(pred, gt, c, q=95):
    bp = boundary(pred, c)
    bg = boundary(gt, c)
    if len(bp) == 0 or len(bg) == 0:
        return None
    d2 = ((bp[:, None, :] - bg[None, :, :]) ** 2).sum(-1).astype(float)
    pooled = np.concatenate([np.sqrt(d2.min(axis=1)), np.sqrt(d2.min(axis=0))])
    return float(np.percentile(pooled, q))


def overlapping_squares():
    """Two 4x4 squares sharing a 2x4 strip: Dice 0.5, IoU 1/3."""
    pred = np.zeros((10, 10), dtype=np.uint8)
    gt = np.zeros((10, 10), dtype=np.uint8)
    pred[2:6, 2:6] = 1
    gt[4:8, 2:6] = 1
    return pred, gt


def test_dice_identical_masks():
    mask = np.zeros((6, 6), dtype=np.uint8)
    mask[1:4, 2:5] = 1
    assert dice(mask, mask, 1) == 1.0


def test_dice_disjoint_sets():
    pred = np.zeros((6, 6), dtype=np.uint8)
    gt = np.zeros((6, 6), dtype=np.uint8)
    pred[0, 0] = 1
    gt[5, 5] = 1
    assert dice(pred, gt, 1) == 0.0


def test_dice_overlapping_squares():
    pred, gt = overlapping_squares()
    assert dice(pred, gt, 1) == 0.5
    assert iou(pred, gt, 1) == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_both_empty_convention():
    empty = np.zeros((4, 4), dtype=np.uint8)
    assert dice(empty, empty, 1) == 1.0
    assert iou(empty, empty, 1) == 1.0
    present = empty.copy()
    present[0, 0] = 1
    assert dice(present, empty, 1) == 0.0
    assert iou(empty, present, 1) == 0.0


def test_dice_symmetry_and_iou_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.integers(0, 3, (12, 12))
        b = rng.integers(0, 3, (12, 12))
        for c in (0, 1, 2):
            d_ab = dice(a, b, c)
            assert d_ab == dice(b, a, c)
            assert abs(iou(a, b, c) - d_ab / (2.0 - d_ab)) < 1e-12
            assert iou(a, b, c) <= d_ab + 1e-15


def test_shape_mismatch_rejected():
    with pytest.raises(ValidationError):
        dice(np.zeros((2, 2)), np.zeros((3, 3)), 1)
    with pytest.raises(ValidationError):
        hd95(np.zeros((2, 2)), np.zeros((3, 3)), 1)


def test_pixel_accuracy_perfect():
    rng = np.random.default_rng(1)
    mask = rng.integers(0, 3, (8, 8))
    overall, recalls = pixel_accuracy(mask, mask, num_classes=3)
    assert overall == 1.0
    assert np.nanmin(recalls) == 1.0


def test_pixel_accuracy_constant_prediction():
    gt = np.zeros((4, 4), dtype=np.uint8)
    gt[2:, :] = 1
    pred = np.zeros((4, 4), dtype=np.uint8)
    overall, recalls = pixel_accuracy(pred, gt, num_classes=2)
    assert overall == 0.5
    assert recalls[0] == 1.0 and recalls[1] == 0.0
    assert np.nanmean(recalls) == 0.5


def test_pixel_accuracy_permutation_invariant():
    rng = np.random.default_rng(2)
    pred = rng.integers(0, 3, (6, 6))
    gt = rng.integers(0, 3, (6, 6))
    perm = rng.permutation(36)
    a = pixel_accuracy(pred, gt, num_classes=3)
    b = pixel_accuracy(pred.reshape(-1)[perm].reshape(6, 6), gt.reshape(-1)[perm].reshape(6, 6), num_classes=3)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1], equal_nan=True)


def test_pixel_accuracy_absent_class_undefined():
    gt = np.zeros((4, 4), dtype=np.uint8)
    pred = np.ones((4, 4), dtype=np.uint8)
    _, recalls = pixel_accuracy(pred, gt, num_classes=3)
    assert recalls[0] == 0.0
    assert np.isnan(recalls[1]) and np.isnan(recalls[2])


def test_edt_all_foreground():
    assert np.array_equal(edt_squared(np.ones((5, 7), dtype=bool)), np.zeros((5, 7)))


def test_edt_single_center_pixel():
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 2] = True
    d = edt_squared(mask)
    assert d[2, 2] == 0.0
    for corner in ((0, 0), (0, 4), (4, 0), (4, 4)):
        assert d[corner] == 8.0


def test_edt_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(25):
        mask = rng.random((32, 32)) < rng.uniform(0.02, 0.5)
        if not mask.any():
            mask[rng.integers(32), rng.integers(32)] = True
        assert np.array_equal(edt_squared(mask), brute_force_edt(mask))


def test_edt_values_are_exact_integers():
    rng = np.random.default_rng(4)
    mask = rng.random((20, 20)) < 0.1
    mask[0, 0] = True
    d = edt_squared(mask)
    assert np.array_equal(d, np.rint(d))


def test_edt_empty_foreground_rejected():
    with pytest.raises(ValidationError):
        edt_squared(np.zeros((4, 4), dtype=bool))


def test_boundary_full_image_is_border_ring():
    mask = np.ones((5, 6), dtype=np.uint8)
    coords = {tuple(p) for p in boundary(mask, 1)}
    ring = {
        (y, x)
        for y in range(5)
        for x in range(6)
        if y in (0, 4) or x in (0, 5)
    }
    assert coords == ring


def test_boundary_single_pixel():
    mask = np.zeros((5, 5), dtype=np.uint8)
    mask[2, 3] = 1
    assert [tuple(p) for p in boundary(mask, 1)] == [(2, 3)]


def test_boundary_square_perimeter():
    mask = np.zeros((10, 10), dtype=np.uint8)
    mask[3:7, 3:7] = 1
    coords = {tuple(p) for p in boundary(mask, 1)}
    expected = {
        (y, x)
        for y in range(3, 7)
        for x in range(3, 7)
        if y in (3, 6) or x in (3, 6)
    }
    assert coords == expected
    assert len(coords) == 12


def test_hd95_identical_masks_zero():
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[2:5, 2:5] = 1
    assert hd95(mask, mask, 1) == 0.0


def test_hd95_single_pixels():
    pred = np.zeros((6, 6), dtype=np.uint8)
    gt = np.zeros((6, 6), dtype=np.uint8)
    pred[0, 0] = 1
    gt[3, 4] = 1
    assert hd95(pred, gt, 1) == 5.0


def test_hd95_undefined_when_class_absent():
    pred = np.zeros((6, 6), dtype=np.uint8)
    gt = np.zeros((6, 6), dtype=np.uint8)
    gt[1, 1] = 1
    assert hd95(pred, gt, 1) is None


def test_hd95_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(15):
        pred = (rng.random((24, 24)) < 0.3).astype(np.uint8)
        gt = (rng.random((24, 24)) < 0.3).astype(np.uint8)
        got = hd95(pred, gt, 1)
        want = brute_force_hd95(pred, gt, 1)
        assert (got is None) == (want is None)
        if got is not None:
            assert abs(got - want) < 1e-9


def test_hd95_symmetry():
    rng = np.random.default_rng(6)
    a = (rng.random((16, 16)) < 0.3).astype(np.uint8)
    b = (rng.random((16, 16)) < 0.3).astype(np.uint8)
    assert hd95(a, b, 1) == hd95(b, a, 1)


def test_hd95_directed_max_mode():
    pred, gt = overlapping_squares()
    pooled = hd95(pred, gt, 1, mode="pooled")
    directed = hd95(pred, gt, 1, mode="directed_max")
    assert pooled is not None and directed is not None
    assert directed >= pooled - 1e-12


def test_translation_invariance():
    pred, gt = overlapping_squares()
    rolled_pred = np.roll(pred, (1, 2), axis=(0, 1))
    rolled_gt = np.roll(gt, (1, 2), axis=(0, 1))
    assert dice(pred, gt, 1) == dice(rolled_pred, rolled_gt, 1)
    assert hd95(pred, gt, 1) == hd95(rolled_pred, rolled_gt, 1)


def _write_masks(directory, masks):
    directory.mkdir(parents=True, exist_ok=True)
    for i, mask in enumerate(masks):
        save_array(directory / f"{i:04d}.npy", mask, dtype=np.uint8)


def test_evaluate_identical_directories(tmp_path):
    rng = np.random.default_rng(7)
    masks = [rng.integers(0, 3, (16, 16)).astype(np.uint8) for _ in range(4)]
    _write_masks(tmp_path / "gt", masks)
    report = evaluate_directories(tmp_path / "gt", tmp_path / "gt")
    summary = report["summary"]
    assert summary["mdice"] == 1.0
    assert summary["miou"] == 1.0
    assert summary["mpa"] == 1.0
    assert summary["mhd95"] == 0.0
    assert summary["hd95_excluded_count"] == 0


def test_evaluate_fixture_values(tmp_path):
    pred, gt = overlapping_squares()
    _write_masks(tmp_path / "pred", [pred])
    _write_masks(tmp_path / "gt", [gt])
    report = evaluate_directories(tmp_path / "pred", tmp_path / "gt", classes=(1,))
    rec = report["per_image"][0]
    assert rec["dice"]["1"] == 0.5
    assert rec["iou"]["1"] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert rec["mhd95"] == hd95(pred, gt, 1)
    assert report["summary"]["num_images"] == 1


def test_evaluate_class_subset_changes_mdice(tmp_path):
    pred, gt = overlapping_squares()
    _write_masks(tmp_path / "pred", [pred])
    _write_masks(tmp_path / "gt", [gt])
    fg_only = evaluate_directories(tmp_path / "pred", tmp_path / "gt", classes=(1, 2))
    with_bg = evaluate_directories(tmp_path / "pred", tmp_path / "gt", classes=(0, 1, 2))
    assert fg_only["summary"]["mdice"] != with_bg["summary"]["mdice"]


def test_evaluate_counts_undefined_hd95(tmp_path):
    gt = np.zeros((8, 8), dtype=np.uint8)
    gt[2:4, 2:4] = 1  # class 2 never appears
    _write_masks(tmp_path / "pred", [gt])
    _write_masks(tmp_path / "gt", [gt])
    report = evaluate_directories(tmp_path / "pred", tmp_path / "gt", classes=(1, 2))
    assert report["summary"]["hd95_excluded_count"] == 1
    assert report["summary"]["mhd95"] is None
    assert report["per_image"][0]["dice"]["2"] == 1.0  # both empty


def test_evaluate_missing_prediction(tmp_path):
    gt = np.zeros((4, 4), dtype=np.uint8)
    _write_masks(tmp_path / "gt", [gt])
    (tmp_path / "pred").mkdir()
    with pytest.raises(FileNotFoundError):
        evaluate_directories(tmp_path / "pred", tmp_path / "gt")


def test_evaluate_pair_recall_includes_all_classes():
    pred, gt = overlapping_squares()
    record = evaluate_pair(pred, gt, classes=[1], num_classes=3)
    assert set(record["recall"]) == {"0", "1", "2"}
    assert record["recall"]["2"] is None
