"""Ensemble inference: mean prediction and pixel-wise uncertainty.

Probability maps from N checkpoint models are averaged into a single
map; the predicted mask is its per-pixel argmax (ties to the smallest
class index). Two uncertainty measures accompany the prediction:

* std: population standard deviation per class across members,
  ``sqrt(mean((P_i - mean)^2))``, reduced over classes (mean by default)
* entropy: Shannon entropy of the averaged distribution in nats,
  with the 0 ln 0 = 0 convention

Member values are sorted per pixel and class before reduction, so every
output is exactly invariant under reordering of the members. Normalized
variants divide by ln C (entropy) and 0.5 (std) to land in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import STD_MAX, ValidationError, check_probability_map

STD_REDUCERS = ("mean", "max", "predicted")


@dataclass(frozen=True)
class EnsembleOutput:
    """Everything inference produces for one image."""

    mean: np.ndarray  # (H, W, C) averaged probabilities
    mask: np.ndarray  # (H, W) uint8 argmax labels
    std_raw: np.ndarray  # (H, W)
    std_norm: np.ndarray
    entropy_raw: np.ndarray  # (H, W) nats
    entropy_norm: np.ndarray
    member_count: int

    def uncertainty(self, measure: str, normalized: bool = True) -> np.ndarray:
        key = f"{measure}_{'norm' if normalized else 'raw'}"
        if measure not in ("std", "entropy"):
            raise ValidationError(f"unknown measure {measure!r}")
        return getattr(self, key)


def _member_stack(members) -> np.ndarray:
    stack = np.asarray(members, dtype=np.float64)
    if stack.ndim == 3:
        stack = stack[None]
    if stack.ndim != 4:
        raise ValidationError(f"expected N maps of shape H x W x C, got shape {stack.shape}")
    if stack.shape[0] < 1:
        raise ValidationError("need at least one ensemble member")
    return stack


def ensemble_mean(members) -> np.ndarray:
    """Pointwise arithmetic mean of the member probability maps."""
    stack = _member_stack(members)
    return np.sort(stack, axis=0).mean(axis=0)


def predict_mask(mean_probs) -> np.ndarray:
    """Per-pixel class of maximum probability, ties to the smallest index."""
    mean_probs = np.asarray(mean_probs)
    if mean_probs.ndim != 3:
        raise ValidationError(f"expected H x W x C, got shape {mean_probs.shape}")
    return mean_probs.argmax(axis=-1).astype(np.uint8)


def std_map(members, reduce: str = "mean", mean_probs=None) -> np.ndarray:
    """Across-member dispersion per pixel (raw, in probability units).

    The per-class population std is reduced to one scalar per pixel:
    ``mean`` averages over classes, ``max`` takes the largest class,
    ``predicted`` keeps the std of the predicted (argmax-of-mean) class.
    """
    if reduce not in STD_REDUCERS:
        raise ValidationError(f"reduce must be one of {STD_REDUCERS}, got {reduce!r}")
    stack = _member_stack(members)
    ordered = np.sort(stack, axis=0)
    mean = ordered.mean(axis=0) if mean_probs is None else np.asarray(mean_probs)
    dev = ordered - mean[None]
    per_class = np.sqrt(np.mean(dev * dev, axis=0))
    # agreement across members is exactly zero dispersion; the rounded
    # mean of N equal values may differ from them by an ulp otherwise
    per_class = np.where(ordered[0] == ordered[-1], 0.0, per_class)
    if reduce == "mean":
        return per_class.mean(axis=-1)
    if reduce == "max":
        return per_class.max(axis=-1)
    labels = predict_mask(mean)
    return np.take_along_axis(per_class, labels[..., None].astype(np.intp), axis=-1)[..., 0]


def entropy_map(mean_probs) -> np.ndarray:
    """Shannon entropy of the averaged distribution, in nats."""
    p = np.asarray(mean_probs, dtype=np.float64)
    if p.ndim != 3:
        raise ValidationError(f"expected H x W x C, got shape {p.shape}")
    safe = np.where(p > 0.0, p, 1.0)  # 0 ln 0 := 0
    return -(p * np.log(safe)).sum(axis=-1)


def normalize_uncertainty(values, measure: str, num_classes: int) -> np.ndarray:
    """Scale a raw map onto [0, 1]: entropy by ln C, std by 0.5."""
    values = np.asarray(values, dtype=np.float64)
    if measure == "entropy":
        return values / np.log(num_classes)
    if measure == "std":
        return values / STD_MAX
    raise ValidationError(f"unknown measure {measure!r}")


def ensemble_outputs(members, std_reduce: str = "mean", validate: bool = False) -> EnsembleOutput:
    """Assemble the full inference product from member probability maps."""
    stack = _member_stack(members)
    if validate:
        for i in range(stack.shape[0]):
            check_probability_map(stack[i])
    num_classes = stack.shape[-1]
    mean = ensemble_mean(stack)
    entropy = entropy_map(mean)
    std = std_map(stack, reduce=std_reduce, mean_probs=mean)
    return EnsembleOutput(
        mean=mean,
        mask=predict_mask(mean),
        std_raw=std,
        std_norm=normalize_uncertainty(std, "std", num_classes),
        entropy_raw=entropy,
        entropy_norm=normalize_uncertainty(entropy, "entropy", num_classes),
        member_count=int(stack.shape[0]),
    )
