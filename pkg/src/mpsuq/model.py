"""Per-pixel linear softmax segmentation model.

The model is a multinomial logistic regression applied independently at
every pixel of a feature map: logits are ``W @ f`` for a C x d weight
matrix, probabilities the softmax over classes. Training minimizes a
weighted sum of cross-entropy and soft Dice loss; the gradient is
analytic, including the quotient term of the Dice relaxation, and is
checked against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import ValidationError

DICE_SMOOTH = 1e-6


class NumericError(ArithmeticError):
    """A numeric quantity (loss, gradient) became non-finite."""


@dataclass(frozen=True)
class LossParts:
    total: float
    cross_entropy: float
    dice: float


def forward(weights, features) -> np.ndarray:
    """Softmax probabilities for every pixel.

    ``weights`` is C x d, ``features`` is H x W x d (or any leading shape
    ending in d). Rows of the result sum to 1 up to rounding; adding a
    constant to every logit leaves the output unchanged (shift-invariant
    stable softmax).
    """
    weights = np.asarray(weights, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if weights.ndim != 2 or features.shape[-1] != weights.shape[1]:
        raise ValidationError(
            f"feature depth {features.shape[-1]} does not match weights {weights.shape}"
        )
    logits = features @ weights.T
    return _softmax(logits)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _one_hot(mask: np.ndarray, num_classes: int) -> np.ndarray:
    flat = np.asarray(mask).reshape(-1)
    out = np.zeros((flat.size, num_classes))
    out[np.arange(flat.size), flat] = 1.0
    return out


def cross_entropy(probs, mask) -> float:
    """Mean over pixels of -ln p(true class)."""
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.asarray(mask)
    if probs.shape[:-1] != mask.shape:
        raise ValidationError(f"shape mismatch: probs {probs.shape} vs mask {mask.shape}")
    flat = probs.reshape(-1, probs.shape[-1])
    p_true = flat[np.arange(flat.shape[0]), mask.reshape(-1)]
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.log(p_true)))


def soft_dice_loss(probs, mask, smooth: float = DICE_SMOOTH) -> float:
    """1 minus the smoothed soft Dice coefficient averaged over all classes.

    Per class c: ``(2 sum(p_c g_c) + smooth) / (sum(p_c) + sum(g_c) + smooth)``
    with g the one-hot ground truth. The smoothing keeps absent classes
    from producing 0/0. Always in [0, 1].
    """
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.asarray(mask)
    if probs.shape[:-1] != mask.shape:
        raise ValidationError(f"shape mismatch: probs {probs.shape} vs mask {mask.shape}")
    c = probs.shape[-1]
    flat = probs.reshape(-1, c)
    onehot = _one_hot(mask, c)
    overlap = (flat * onehot).sum(axis=0)
    volume = flat.sum(axis=0) + onehot.sum(axis=0)
    dice = (2.0 * overlap + smooth) / (volume + smooth)
    return float(1.0 - dice.mean())


def combined_loss(
    probs, mask, lambda_ce: float = 1.0, lambda_dice: float = 1.0, smooth: float = DICE_SMOOTH
) -> LossParts:
    """Weighted sum of cross-entropy and soft Dice loss with its parts."""
    if lambda_ce < 0 or lambda_dice < 0:
        raise ValidationError("loss weights must be >= 0")
    ce = cross_entropy(probs, mask)
    dice = soft_dice_loss(probs, mask, smooth=smooth)
    return LossParts(total=lambda_ce * ce + lambda_dice * dice, cross_entropy=ce, dice=dice)


def loss_gradient(
    weights,
    features,
    mask,
    lambda_ce: float = 1.0,
    lambda_dice: float = 1.0,
    smooth: float = DICE_SMOOTH,
) -> np.ndarray:
    """d(combined loss)/dW for one image, shape C x d.

    Cross-entropy contributes ``(p - g) / P`` per pixel in logit space;
    the Dice term is chained through the softmax Jacobian from
    ``dL/dp_c = -(2 g_c - D_c) / (C (B_c + smooth))`` where D_c is the
    per-class smoothed Dice and B_c the summed volumes.
    """
    weights = np.asarray(weights, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    mask = np.asarray(mask)
    if features.shape[:-1] != mask.shape:
        raise ValidationError(f"shape mismatch: features {features.shape} vs mask {mask.shape}")

    c, d = weights.shape
    flat_f = features.reshape(-1, d)
    probs = forward(weights, flat_f)
    onehot = _one_hot(mask, c)
    dz = _logit_gradient(probs, onehot, lambda_ce, lambda_dice, smooth)
    return dz.T @ flat_f


def _logit_gradient(probs, onehot, lambda_ce, lambda_dice, smooth) -> np.ndarray:
    """dLoss/dlogits, pixels flattened: (P, C)."""
    n_pixels, c = probs.shape
    dz = np.zeros_like(probs)
    if lambda_ce:
        dz += lambda_ce * (probs - onehot) / n_pixels
    if lambda_dice:
        overlap = (probs * onehot).sum(axis=0)
        volume = probs.sum(axis=0) + onehot.sum(axis=0)
        dice = (2.0 * overlap + smooth) / (volume + smooth)
        dldp = -(2.0 * onehot - dice[None, :]) / (c * (volume + smooth)[None, :])
        inner = (dldp * probs).sum(axis=1, keepdims=True)
        dz += lambda_dice * probs * (dldp - inner)
    return dz


def batch_loss_gradient(
    weights,
    feature_stack,
    masks,
    lambda_ce: float = 1.0,
    lambda_dice: float = 1.0,
    smooth: float = DICE_SMOOTH,
):
    """Full-batch objective and gradient over a stack of images.

    The batch objective is the sum of the per-image combined losses
    (Dice is a per-image quantity, so images are reduced after the
    per-image terms), and the gradient matches it. Summing keeps the
    step size proportional to the evidence in the batch, which the
    desk-scale epoch budget needs to converge. Per-image contributions
    are reduced in ascending image order so the result does not depend
    on how the work is scheduled. Returns (LossParts, gradient C x d).
    """
    weights = np.asarray(weights, dtype=np.float64)
    feats = np.asarray(feature_stack, dtype=np.float64)
    masks = np.asarray(masks)
    n, h, w, d = feats.shape
    c = weights.shape[0]
    flat_f = feats.reshape(n, h * w, d)
    logits = np.einsum("npd,cd->npc", flat_f, weights)
    probs = _softmax(logits)
    onehot = np.stack([_one_hot(masks[i], c) for i in range(n)])

    p_true = np.take_along_axis(
        probs, masks.reshape(n, h * w, 1).astype(np.intp), axis=2
    )[..., 0]
    with np.errstate(divide="ignore"):
        ce = -np.log(p_true).mean(axis=1)

    overlap = (probs * onehot).sum(axis=1)
    volume = probs.sum(axis=1) + onehot.sum(axis=1)
    dice_coef = (2.0 * overlap + smooth) / (volume + smooth)
    dice = 1.0 - dice_coef.mean(axis=1)

    dz = np.zeros_like(probs)
    if lambda_ce:
        dz += lambda_ce * (probs - onehot) / (h * w)
    if lambda_dice:
        dldp = -(2.0 * onehot - dice_coef[:, None, :]) / (c * (volume + smooth)[:, None, :])
        inner = (dldp * probs).sum(axis=2, keepdims=True)
        dz += lambda_dice * probs * (dldp - inner)
    per_image_grad = np.einsum("npc,npd->ncd", dz, flat_f)
    grad = per_image_grad.sum(axis=0)

    parts = LossParts(
        total=float(np.sum(lambda_ce * ce + lambda_dice * dice)),
        cross_entropy=float(ce.sum()),
        dice=float(dice.sum()),
    )
    return parts, grad
