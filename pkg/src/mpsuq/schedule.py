"""Cyclic learning-rate schedule and checkpoint-sampling plan.

Each cycle of ``cycle_len`` epochs starts at ``lr_max`` and decays
polynomially (power ``decay_power``) to ``lr_min`` over the first
``decay_frac`` fraction of the cycle, then stays flat at ``lr_min`` for
the remainder. Checkpoints for the posterior ensemble are sampled from a
window at the tail of each cycle, stepping backward from the cycle end so
the most-converged (lowest-rate) weights are always a member.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .validation import ValidationError


@dataclass(frozen=True)
class CyclicLrParams:
    """Parameters of the per-cycle polynomial decay schedule."""

    lr_max: float = 0.1
    lr_min: float = 0.01
    decay_frac: float = 0.8
    decay_power: float = 0.9
    cycle_len: int = 60
    num_cycles: int = 3

    def __post_init__(self):
        if not (self.lr_max >= self.lr_min > 0.0):
            raise ValidationError(f"need lr_max >= lr_min > 0, got {self.lr_max}, {self.lr_min}")
        if not (0.0 < self.decay_frac <= 1.0):
            raise ValidationError(f"decay_frac must be in (0, 1], got {self.decay_frac}")
        if not self.decay_power > 0.0:
            raise ValidationError(f"decay_power must be > 0, got {self.decay_power}")
        if self.cycle_len < 1 or self.num_cycles < 1:
            raise ValidationError("cycle_len and num_cycles must be >= 1")

    @property
    def total_epochs(self) -> int:
        return self.cycle_len * self.num_cycles

    def cycle_of(self, epoch: int) -> int:
        """1-based cycle index containing a 1-based global epoch."""
        self._check_epoch(epoch)
        return (epoch - 1) // self.cycle_len + 1

    def epoch_in_cycle(self, epoch: int) -> int:
        """1-based position of a global epoch within its cycle."""
        self._check_epoch(epoch)
        return (epoch - 1) % self.cycle_len + 1

    def _check_epoch(self, epoch: int) -> None:
        if not 1 <= epoch <= self.total_epochs:
            raise ValidationError(f"epoch {epoch} outside [1, {self.total_epochs}]")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based global epoch.

        With t the 1-based position within the cycle: decays as
        ``lr_min + (lr_max - lr_min) * (1 - t / (decay_frac * cycle_len)) ** decay_power``
        while ``t <= decay_frac * cycle_len`` (comparison in real
        arithmetic, no rounding), and is ``lr_min`` afterwards. The value
        depends on the epoch only through its position in the cycle.
        """
        t = self.epoch_in_cycle(epoch)
        decay_epochs = self.decay_frac * self.cycle_len
        if t <= decay_epochs:
            return self.lr_min + (self.lr_max - self.lr_min) * (1.0 - t / decay_epochs) ** self.decay_power
        return self.lr_min

    def sampling_plan(self, window: int = 20, stride: int = 4) -> "SamplingPlan":
        """Epochs to checkpoint: the cycle tail, stepping back by ``stride``.

        Within each cycle, selects positions t in (cycle_len - window,
        cycle_len] with (cycle_len - t) divisible by stride; the cycle-end
        epoch is always selected.
        """
        if not 1 <= window <= self.cycle_len:
            raise ValidationError(f"window must be in [1, {self.cycle_len}], got {window}")
        if not 1 <= stride <= window:
            raise ValidationError(f"stride must be in [1, {window}], got {stride}")
        epochs = []
        for cycle in range(self.num_cycles):
            base = cycle * self.cycle_len
            tail = [
                base + t
                for t in range(self.cycle_len - window + 1, self.cycle_len + 1)
                if (self.cycle_len - t) % stride == 0
            ]
            epochs.extend(tail)
        return SamplingPlan(window=window, stride=stride, epochs=tuple(epochs))

    def rows(self):
        """Yield (epoch, cycle, epoch-in-cycle, lr) for every epoch."""
        for epoch in range(1, self.total_epochs + 1):
            yield epoch, self.cycle_of(epoch), self.epoch_in_cycle(epoch), self.lr_at(epoch)


@dataclass(frozen=True)
class SamplingPlan:
    """Global epoch indices whose weights become ensemble members."""

    window: int
    stride: int
    epochs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if list(self.epochs) != sorted(set(self.epochs)):
            raise ValidationError("plan epochs must be strictly increasing")

    def __len__(self) -> int:
        return len(self.epochs)

    @property
    def per_cycle(self) -> int:
        return math.ceil(self.window / self.stride)


def write_schedule_csv(params: CyclicLrParams, fh) -> int:
    """Write one ``epoch,cycle,t_c,lr`` row per epoch to a text stream.

    Learning rates are printed with 17 significant digits so the f64
    value round-trips exactly. Returns the number of data rows.
    """
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["epoch", "cycle", "t_c", "lr"])
    count = 0
    for epoch, cycle, t, lr in params.rows():
        writer.writerow([epoch, cycle, t, format(lr, ".17g")])
        count += 1
    return count
