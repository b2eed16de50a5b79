"""Per-pixel features for the linear segmentation model.

Five channels per pixel: a constant bias, the raw intensity, the 3x3
local mean, the 3x3 local (population) standard deviation, and the
central-difference gradient magnitude. Borders are handled by edge
replication, matching how the 3x3 window and the central differences are
defined on the image interior.
"""

from __future__ import annotations

import numpy as np

FEATURE_DIM = 5


def extract_features(image) -> np.ndarray:
    """Map an H x W intensity image to an H x W x 5 float64 feature map."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected an H x W image, got shape {image.shape}")

    padded = np.pad(image, 1, mode="edge")
    h, w = image.shape

    s1 = np.zeros((h, w))
    s2 = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            window = padded[dy : dy + h, dx : dx + w]
            s1 += window
            s2 += window * window
    mean = s1 / 9.0
    var = np.maximum(s2 / 9.0 - mean * mean, 0.0)
    std = np.sqrt(var)

    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    grad = np.hypot(gx, gy)

    features = np.empty((h, w, FEATURE_DIM))
    features[..., 0] = 1.0
    features[..., 1] = image
    features[..., 2] = mean
    features[..., 3] = std
    features[..., 4] = grad
    return features


def extract_feature_stack(images) -> np.ndarray:
    """Features for a stack of images: (n, H, W) -> (n, H, W, 5)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError(f"expected (n, H, W), got shape {images.shape}")
    return np.stack([extract_features(img) for img in images])
