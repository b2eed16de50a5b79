"""Uncertainty calibration against empirical error.

Pixels are binned by normalized uncertainty into B equal-width bins over
[0, 1] (bin = floor(u * B), clamped so u = 1 lands in the last bin).
Each bin keeps sufficient statistics (sum of uncertainties, sum of
errors, count), so tables built per image merge associatively into the
dataset-level table. The calibration error is the count-weighted mean
absolute gap between a bin's mean uncertainty and its error rate; empty
bins carry zero weight.

Per-bin uncertainty sums use exact (fsum) accumulation within each
``add`` call, making the table independent of pixel ordering.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .validation import BOUND_TOL, ValidationError, check_same_shape

CSV_HEADER = ["bin_low", "bin_high", "mean_uncertainty", "error_rate", "count"]


def error_map(pred, gt) -> np.ndarray:
    """1 where the predicted label differs from the truth, else 0 (uint8)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt)
    return (pred != gt).astype(np.uint8)


@dataclass
class ReliabilityTable:
    """Per-bin sufficient statistics for one uncertainty measure."""

    bins: int
    measure: str
    sum_u: np.ndarray = field(default=None)
    sum_e: np.ndarray = field(default=None)
    count: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.bins < 2:
            raise ValidationError(f"need at least 2 bins, got {self.bins}")
        if self.measure not in ("std", "entropy"):
            raise ValidationError(f"unknown measure {self.measure!r}")
        if self.sum_u is None:
            self.sum_u = np.zeros(self.bins)
        if self.sum_e is None:
            self.sum_e = np.zeros(self.bins)
        if self.count is None:
            self.count = np.zeros(self.bins, dtype=np.int64)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.bins + 1)

    @property
    def total(self) -> int:
        return int(self.count.sum())

    def mean_uncertainty(self) -> np.ndarray:
        """Per-bin mean predicted uncertainty; NaN for empty bins."""
        with np.errstate(invalid="ignore"):
            return np.where(self.count > 0, self.sum_u / self.count, np.nan)

    def error_rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.count > 0, self.sum_e / self.count, np.nan)

    def add(self, uncertainty, errors) -> "ReliabilityTable":
        """Accumulate one image (or any pixel batch). Returns self.

        ``uncertainty`` must be normalized to [0, 1]; ``errors`` binary.
        """
        u = np.asarray(uncertainty, dtype=np.float64).reshape(-1)
        e = np.asarray(errors).reshape(-1)
        if u.shape != e.shape:
            raise ValidationError(f"shape mismatch: {u.shape} vs {e.shape}")
        if u.size == 0:
            return self
        if np.any(~((u >= 0.0) & (u <= 1.0 + BOUND_TOL))):  # catches NaN too
            bad = int(np.flatnonzero(~((u >= 0.0) & (u <= 1.0 + BOUND_TOL)))[0])
            raise ValidationError(
                f"uncertainty not normalized to [0, 1] at pixel {bad}: {u[bad]!r}"
            )
        idx = np.minimum((u * self.bins).astype(np.int64), self.bins - 1)
        for b in np.unique(idx):
            sel = idx == b
            self.sum_u[b] += math.fsum(u[sel])
            self.sum_e[b] += float(e[sel].sum())
            self.count[b] += int(sel.sum())
        return self

    def merge(self, other: "ReliabilityTable") -> "ReliabilityTable":
        """Combine with another table over the same binning (new table)."""
        if other.bins != self.bins or other.measure != self.measure:
            raise ValidationError("cannot merge tables with different bins or measures")
        return ReliabilityTable(
            bins=self.bins,
            measure=self.measure,
            sum_u=self.sum_u + other.sum_u,
            sum_e=self.sum_e + other.sum_e,
            count=self.count + other.count,
        )


def bin_statistics(uncertainty_maps, error_maps, bins: int = 10, measure: str = "entropy") -> ReliabilityTable:
    """Build a dataset-level table from per-image maps, in input order.

    Accepts a single map pair or parallel sequences of maps.
    """
    if isinstance(uncertainty_maps, np.ndarray) and uncertainty_maps.ndim == 2:
        uncertainty_maps = [uncertainty_maps]
        error_maps = [error_maps]
    table = ReliabilityTable(bins=bins, measure=measure)
    u_list = list(uncertainty_maps)
    e_list = list(error_maps)
    if len(u_list) != len(e_list):
        raise ValidationError("need one error map per uncertainty map")
    for u, e in zip(u_list, e_list):
        table.add(u, e)
    return table


def uce(table) -> float:
    """Count-weighted mean absolute gap between uncertainty and error.

    Accepts anything exposing ``count``, ``mean_uncertainty()`` and
    ``error_rate()`` (a live table or a parsed CSV); empty bins carry
    zero weight. Bins are accumulated in index order.
    """
    counts = np.asarray(table.count)
    total = int(counts.sum())
    if total == 0:
        raise ValidationError("cannot compute calibration error from an empty table")
    mean_u = table.mean_uncertainty()
    rate = table.error_rate()
    value = 0.0
    for b in range(counts.shape[0]):
        if counts[b] == 0:
            continue
        value += (counts[b] / total) * abs(mean_u[b] - rate[b])
    return float(value)


def write_reliability_csv(table: ReliabilityTable, fh) -> int:
    """Write one row per bin (including empty bins, with blank stats).

    Values carry 17 significant digits so the table round-trips exactly.
    """
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    edges = table.edges
    mean_u = table.mean_uncertainty()
    rate = table.error_rate()
    for b in range(table.bins):
        if table.count[b] > 0:
            stats = [format(mean_u[b], ".17g"), format(rate[b], ".17g")]
        else:
            stats = ["", ""]
        writer.writerow(
            [format(edges[b], ".17g"), format(edges[b + 1], ".17g"), *stats, int(table.count[b])]
        )
    return table.bins


@dataclass
class ParsedReliability:
    """Reliability CSV contents; feeds :func:`uce` like a live table."""

    edges: np.ndarray
    count: np.ndarray
    _mean_u: np.ndarray
    _rate: np.ndarray

    @property
    def bins(self) -> int:
        return self.count.shape[0]

    def mean_uncertainty(self) -> np.ndarray:
        return self._mean_u

    def error_rate(self) -> np.ndarray:
        return self._rate


def read_reliability_csv(fh) -> ParsedReliability:
    """Parse a reliability CSV. The 17-significant-digit formatting makes
    the parsed per-bin statistics bit-identical to the written ones."""
    reader = csv.reader(fh)
    header = next(reader)
    if header != CSV_HEADER:
        raise ValidationError(f"unexpected reliability CSV header: {header}")
    rows = list(reader)
    if not rows:
        raise ValidationError("reliability CSV has no bins")
    edges = np.asarray([float(r[0]) for r in rows] + [float(rows[-1][1])])
    count = np.asarray([int(r[4]) for r in rows], dtype=np.int64)
    mean_u = np.asarray([float(r[2]) if r[2] else np.nan for r in rows])
    rate = np.asarray([float(r[3]) if r[3] else np.nan for r in rows])
    return ParsedReliability(edges=edges, count=count, _mean_u=mean_u, _rate=rate)
