"""Segmentation metrics: Dice, IoU, pixel accuracy, HD95.

The 95th-percentile Hausdorff distance is computed from class
boundaries via an exact squared Euclidean distance transform (the
two-pass separable lower-envelope algorithm), so every pixel distance is
an exact integer under the square root. Percentiles use linear
interpolation between order statistics, position (n - 1) * q / 100.

Conventions, shared with the usual medical-imaging evaluation stacks:
both masks empty for a class scores Dice = IoU = 1; exactly one empty
scores 0; HD95 is undefined (None) when either boundary is empty; HD95
pools both directed distance multisets before taking the percentile
(``directed_max`` takes the max of per-direction percentiles instead).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .npyio import load_array
from .parallel import parallel_map
from .validation import ValidationError, check_same_shape

HD95_MODES = ("pooled", "directed_max")


def dice(pred, gt, c) -> float:
    """2 |P and G| / (|P| + |G|) for class c; 1.0 when both are empty."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt)
    p = pred == c
    g = gt == c
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def iou(pred, gt, c) -> float:
    """|P and G| / |P or G| for class c; 1.0 when both are empty."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt)
    p = pred == c
    g = gt == c
    union = int((p | g).sum())
    if union == 0:
        return 1.0
    return int((p & g).sum()) / union


def pixel_accuracy(pred, gt, num_classes: int | None = None):
    """Overall accuracy and the per-class recall vector.

    Recall of a class absent from the ground truth is NaN (undefined);
    the macro mean over defined recalls is the usual mean pixel accuracy.
    Returns (overall, recalls).
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt)
    if num_classes is None:
        num_classes = int(max(pred.max(), gt.max())) + 1
    overall = float((pred == gt).mean())
    recalls = np.full(num_classes, np.nan)
    for c in range(num_classes):
        in_class = gt == c
        total = int(in_class.sum())
        if total:
            recalls[c] = int((pred[in_class] == c).sum()) / total
    return overall, recalls


def _edt_1d(f: np.ndarray) -> np.ndarray:
    """Exact 1-D squared distance transform of a sampled function."""
    n = f.shape[0]
    d = np.empty(n)
    v = np.zeros(n, dtype=np.intp)  # parabola sites
    z = np.empty(n + 1)  # envelope breakpoints
    k = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def edt_squared(mask) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest True pixel.

    Column pass then row pass of the 1-D transform. Distances are exact
    integers (stored as float64); foreground pixels map to 0.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValidationError(f"expected an H x W mask, got shape {mask.shape}")
    if not mask.any():
        raise ValidationError("distance transform needs at least one foreground pixel")
    h, w = mask.shape
    # finite sentinel > any achievable squared distance keeps the envelope
    # arithmetic finite for all-background columns
    far = (h - 1) ** 2 + (w - 1) ** 2 + 1
    f = np.where(mask, 0.0, float(far))
    d = np.empty_like(f)
    for x in range(w):
        d[:, x] = _edt_1d(f[:, x])
    out = np.empty_like(d)
    for y in range(h):
        out[y, :] = _edt_1d(d[y, :])
    return out


def boundary(mask, c) -> np.ndarray:
    """Coordinates (row, col) of class-c pixels on the class boundary.

    A pixel belongs to the boundary when it touches the image border or
    has a 4-neighbor of a different class. Rows are sorted
    lexicographically.
    """
    bmask = _boundary_mask(np.asarray(mask), c)
    return np.argwhere(bmask)


def _boundary_mask(mask: np.ndarray, c) -> np.ndarray:
    if mask.ndim != 2:
        raise ValidationError(f"expected an H x W mask, got shape {mask.shape}")
    member = mask == c
    if not member.any():
        return member
    # pad with a non-member value so border membership counts as exposure
    padded = np.pad(member, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return member & ~interior


def hd95(pred, gt, c, mode: str = "pooled") -> float | None:
    """95th-percentile symmetric boundary distance for class c, in pixels.

    Nearest-boundary distances are collected in both directions
    (prediction to truth and truth to prediction). ``pooled`` takes the
    percentile of the union multiset; ``directed_max`` the max of the two
    directed percentiles. None when either boundary is empty.
    """
    if mode not in HD95_MODES:
        raise ValidationError(f"mode must be one of {HD95_MODES}, got {mode!r}")
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt)
    pb = _boundary_mask(pred, c)
    gb = _boundary_mask(gt, c)
    if not pb.any() or not gb.any():
        return None
    d_pred_to_gt = np.sqrt(edt_squared(gb)[pb])
    d_gt_to_pred = np.sqrt(edt_squared(pb)[gb])
    if mode == "pooled":
        return float(np.percentile(np.concatenate([d_pred_to_gt, d_gt_to_pred]), 95))
    return float(max(np.percentile(d_pred_to_gt, 95), np.percentile(d_gt_to_pred, 95)))


def evaluate_pair(pred, gt, classes, num_classes: int, hd95_mode: str = "pooled") -> dict:
    """All metrics for one prediction/truth pair, JSON-ready.

    Per-class Dice/IoU/HD95 over ``classes``; recall over all classes.
    The image-level ``mhd95`` is the mean over ``classes`` and is None
    (excluded from dataset aggregation) if any class is undefined.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt)
    dice_c = {c: dice(pred, gt, c) for c in classes}
    iou_c = {c: iou(pred, gt, c) for c in classes}
    hd_c = {c: hd95(pred, gt, c, mode=hd95_mode) for c in classes}
    overall, recalls = pixel_accuracy(pred, gt, num_classes=num_classes)
    defined_recalls = recalls[~np.isnan(recalls)]
    hd_values = [v for v in hd_c.values() if v is not None]
    return {
        "dice": {str(c): dice_c[c] for c in classes},
        "iou": {str(c): iou_c[c] for c in classes},
        "hd95": {str(c): hd_c[c] for c in classes},
        "recall": {
            str(c): (None if np.isnan(recalls[c]) else float(recalls[c]))
            for c in range(num_classes)
        },
        "accuracy": overall,
        "mdice": float(np.mean(list(dice_c.values()))),
        "miou": float(np.mean(list(iou_c.values()))),
        "mhd95": float(np.mean(hd_values)) if len(hd_values) == len(classes) else None,
        "mpa": float(defined_recalls.mean()),
    }


def _pred_mask_path(pred_dir: Path, stem: str) -> Path:
    flat = pred_dir / f"{stem}.npy"
    if flat.exists():
        return flat
    nested = pred_dir / stem / "mask.npy"
    if nested.exists():
        return nested
    raise FileNotFoundError(f"no prediction for {stem!r} under {pred_dir}")


def evaluate_directories(
    pred_dir,
    gt_dir,
    classes=(1, 2),
    hd95_mode: str = "pooled",
    threads: int = 1,
) -> dict:
    """Evaluate a directory of predictions against ground-truth masks.

    Ground truth is ``<gt_dir>/<stem>.npy``; predictions may be flat
    (``<pred_dir>/<stem>.npy``) or per-image inference directories
    (``<pred_dir>/<stem>/mask.npy``). Dataset means average the per-image
    values; images whose HD95 is undefined are excluded from ``mhd95``
    and counted in ``hd95_excluded_count``.
    """
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    stems = sorted(p.stem for p in gt_dir.glob("*.npy"))
    if not stems:
        raise FileNotFoundError(f"no ground-truth masks under {gt_dir}")
    classes = sorted(int(c) for c in classes)

    pairs = []
    for stem in stems:
        gt = load_array(gt_dir / f"{stem}.npy")
        pred = load_array(_pred_mask_path(pred_dir, stem))
        if pred.shape != gt.shape:
            raise ValidationError(f"{stem}: prediction shape {pred.shape} != truth {gt.shape}")
        pairs.append((stem, pred, gt))

    num_classes = max(
        max(int(p.max()), int(g.max())) + 1 for _, p, g in pairs
    )
    num_classes = max(num_classes, max(classes) + 1)

    def one(item):
        stem, pred, gt = item
        record = evaluate_pair(pred, gt, classes, num_classes, hd95_mode=hd95_mode)
        return {"name": stem, **record}

    per_image = parallel_map(one, pairs, threads=threads)

    def mean_over(key):
        return float(np.mean([rec[key] for rec in per_image]))

    defined_hd = [rec["mhd95"] for rec in per_image if rec["mhd95"] is not None]
    per_class_summary = {}
    for c in classes:
        key = str(c)
        hd_vals = [rec["hd95"][key] for rec in per_image if rec["hd95"][key] is not None]
        rc_vals = [rec["recall"][key] for rec in per_image if rec["recall"][key] is not None]
        per_class_summary[key] = {
            "dice": float(np.mean([rec["dice"][key] for rec in per_image])),
            "iou": float(np.mean([rec["iou"][key] for rec in per_image])),
            "hd95": float(np.mean(hd_vals)) if hd_vals else None,
            "recall": float(np.mean(rc_vals)) if rc_vals else None,
        }

    return {
        "format_version": 1,
        "classes": classes,
        "num_classes": num_classes,
        "hd95_mode": hd95_mode,
        "per_image": per_image,
        "summary": {
            "mdice": mean_over("mdice"),
            "miou": mean_over("miou"),
            "mhd95": float(np.mean(defined_hd)) if defined_hd else None,
            "mpa": mean_over("mpa"),
            "accuracy": mean_over("accuracy"),
            "hd95_excluded_count": len(per_image) - len(defined_hd),
            "num_images": len(per_image),
            "per_class": per_class_summary,
        },
    }


def write_metrics_json(report: dict, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return path
