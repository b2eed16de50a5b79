"""Validation of the grid-shaped data the toolkit passes around.

Three kinds of map share one pixel grid:

* probability maps: H x W x C, per-pixel class distributions
* label masks:      H x W integer class indices
* uncertainty maps: H x W non-negative scalars (std or entropy based)

``validate_*`` functions are total: they never raise on array input and
return a :class:`ValidationReport` naming the lowest row-major pixel index
that violates an invariant. ``check_*`` helpers wrap them for call sites
that want an exception, mirroring the usual estimator input-checking
idiom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_SUM_TOL = 1e-6  # f32 softmax outputs do not sum exactly to 1
BOUND_TOL = 1e-9

STD_MAX = 0.5  # population std of values in [0, 1] cannot exceed 1/2


class ValidationError(ValueError):
    """An input violates a documented invariant."""


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validating one map.

    ``pixel`` is the flat row-major index of the first offending pixel
    (None for whole-array problems such as a wrong ndim), ``kind`` is a
    short machine-readable violation tag.
    """

    ok: bool
    kind: str | None = None
    pixel: int | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def message(self) -> str:
        if self.ok:
            return "ok"
        where = "" if self.pixel is None else f" at pixel {self.pixel}"
        return f"{self.kind}{where}: {self.detail}"


def _ok() -> ValidationReport:
    return ValidationReport(True)


def _first(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def validate_probability_map(probs, tol: float = PROB_SUM_TOL) -> ValidationReport:
    """Check an H x W x C array of per-pixel class probabilities.

    Every value must lie in [0, 1] (NaN fails) and every pixel's class
    sum must be within ``tol`` of 1. Reports the first violating pixel in
    row-major order; a pixel violating both rules reports the range
    violation.
    """
    probs = np.asarray(probs)
    if probs.ndim != 3:
        return ValidationReport(False, "shape", None, f"expected H x W x C, got shape {probs.shape}")
    h, w, c = probs.shape
    if h < 1 or w < 1 or c < 2:
        return ValidationReport(False, "shape", None, f"need H, W >= 1 and C >= 2, got {probs.shape}")

    flat = probs.reshape(h * w, c)
    in_range = np.all((flat >= 0.0) & (flat <= 1.0), axis=1)  # NaN compares False
    sums = flat.sum(axis=1)
    sum_ok = np.abs(sums - 1.0) <= tol

    bad = ~(in_range & sum_ok)
    if not bad.any():
        return _ok()
    pixel = _first(bad)
    if not in_range[pixel]:
        values = flat[pixel]
        return ValidationReport(False, "range", pixel, f"class values {values.tolist()} outside [0, 1]")
    return ValidationReport(False, "sum", pixel, f"class sum {sums[pixel]!r} not within {tol} of 1")


def validate_label_mask(mask, num_classes: int) -> ValidationReport:
    """Check an H x W mask of integer class indices in [0, num_classes)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        return ValidationReport(False, "shape", None, f"expected H x W, got shape {mask.shape}")
    if mask.dtype.kind not in "iu":
        return ValidationReport(False, "dtype", None, f"expected integer labels, got dtype {mask.dtype}")
    flat = mask.reshape(-1)
    bad = (flat < 0) | (flat >= num_classes)
    if bad.any():
        pixel = _first(bad)
        return ValidationReport(
            False, "range", pixel, f"label {int(flat[pixel])} outside [0, {num_classes - 1}]"
        )
    return _ok()


def validate_uncertainty_map(
    values, measure: str, normalized: bool, num_classes: int | None = None
) -> ValidationReport:
    """Check an H x W uncertainty map against its measure-specific bounds.

    Raw entropy is bounded by ln C (``num_classes`` required), raw std by
    0.5, normalized maps by 1; all values must be non-negative.
    """
    if measure not in ("std", "entropy"):
        return ValidationReport(False, "measure", None, f"unknown measure {measure!r}")
    values = np.asarray(values)
    if values.ndim != 2:
        return ValidationReport(False, "shape", None, f"expected H x W, got shape {values.shape}")

    if normalized:
        upper = 1.0
    elif measure == "entropy":
        if num_classes is None:
            return ValidationReport(False, "measure", None, "raw entropy bound needs num_classes")
        upper = float(np.log(num_classes))
    else:
        upper = STD_MAX

    flat = values.reshape(-1)
    bad = ~((flat >= 0.0) & (flat <= upper + BOUND_TOL))  # NaN compares False
    if bad.any():
        pixel = _first(bad)
        return ValidationReport(
            False, "range", pixel, f"value {flat[pixel]!r} outside [0, {upper}] (+{BOUND_TOL})"
        )
    return _ok()


def check_probability_map(probs, tol: float = PROB_SUM_TOL) -> np.ndarray:
    """Validate and return the map as a float64 array, raising on violation."""
    report = validate_probability_map(probs, tol=tol)
    if not report:
        raise ValidationError(f"invalid probability map: {report.message()}")
    return np.asarray(probs, dtype=np.float64)


def check_label_mask(mask, num_classes: int) -> np.ndarray:
    report = validate_label_mask(mask, num_classes)
    if not report:
        raise ValidationError(f"invalid label mask: {report.message()}")
    return np.asarray(mask)


def check_same_shape(*arrays) -> None:
    shapes = {np.asarray(a).shape for a in arrays}
    if len(shapes) > 1:
        raise ValidationError(f"shape mismatch: {sorted(shapes)}")
