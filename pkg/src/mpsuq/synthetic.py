"""Synthetic 3-class segmentation data.

Stand-in for a real histology corpus: each image is a dark background
with brighter elliptical blobs of two foreground classes, plus Gaussian
texture and sensor noise. Class identity is carried by intensity level
(background 0.10, class 1 0.35, class 2 0.70 by default), so a per-pixel
classifier over local intensity statistics can segment it well while
boundary pixels stay genuinely ambiguous.

Determinism: every image draws from its own generator, seeded as
``SeedSequence(seed, spawn_key=(split_index, image_index))`` with PCG64,
so datasets are reproducible for a given seed and independent of
generation order. Intensities are quantized to float32 (the storage
dtype) at generation time so in-memory and on-disk pipelines agree.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .npyio import load_array, save_array
from .validation import ValidationError

SPLITS = ("train", "val", "test")

NUM_CLASSES = 3


@dataclass(frozen=True)
class SyntheticConfig:
    image_size: int = 64
    n_train: int = 40
    n_val: int = 10
    n_test: int = 10
    # inclusive blob-count range per foreground class
    blobs_class1: tuple = (2, 3)
    blobs_class2: tuple = (1, 3)
    # blob semi-axis range as a fraction of image size
    radius_frac: tuple = (0.10, 0.22)
    class_means: tuple = (0.10, 0.35, 0.70)
    class_stds: tuple = (0.05, 0.08, 0.08)
    noise_std: float = 0.05
    seed: int = 42

    def __post_init__(self):
        if self.image_size < 8:
            raise ValidationError("image_size must be >= 8")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValidationError("split counts must be >= 1")
        if not (self.class_means[0] < self.class_means[1] < self.class_means[2]):
            raise ValidationError("class intensity means must be strictly increasing")

    def counts(self) -> dict:
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}


@dataclass
class SplitArrays:
    images: np.ndarray  # (n, H, W) float32 in [0, 1]
    masks: np.ndarray  # (n, H, W) uint8 labels in {0, 1, 2}


@dataclass
class SyntheticDataset:
    config: SyntheticConfig
    splits: dict = field(default_factory=dict)  # split name -> SplitArrays


def _paint_ellipse(mask, rng, label, size, r_lo, r_hi):
    cy = rng.uniform(r_lo, size - r_lo)
    cx = rng.uniform(r_lo, size - r_lo)
    a = rng.uniform(r_lo, r_hi)
    b = rng.uniform(r_lo, r_hi)
    theta = rng.uniform(0.0, np.pi)
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - cy
    dx = xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    mask[inside] = label


def _generate_image(config: SyntheticConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    size = config.image_size
    r_lo = config.radius_frac[0] * size
    r_hi = config.radius_frac[1] * size
    ranges = {1: config.blobs_class1, 2: config.blobs_class2}

    for _ in range(100):
        mask = np.zeros((size, size), dtype=np.uint8)
        for label in (1, 2):
            lo, hi = ranges[label]
            for _ in range(int(rng.integers(lo, hi + 1))):
                _paint_ellipse(mask, rng, label, size, r_lo, r_hi)
        if len(np.unique(mask)) == NUM_CLASSES:
            break
    else:
        raise ValidationError("could not place all classes; widen blob ranges")

    means = np.asarray(config.class_means)[mask]
    stds = np.asarray(config.class_stds)[mask]
    intensity = means + rng.standard_normal(mask.shape) * stds
    intensity = intensity + rng.standard_normal(mask.shape) * config.noise_std
    intensity = np.clip(intensity, 0.0, 1.0).astype(np.float32)
    return intensity, mask


def generate_dataset(config: SyntheticConfig) -> SyntheticDataset:
    """Generate all splits. Deterministic for a given config seed."""
    dataset = SyntheticDataset(config=config)
    counts = config.counts()
    for split_idx, split in enumerate(SPLITS):
        images, masks = [], []
        for img_idx in range(counts[split]):
            seq = np.random.SeedSequence(config.seed, spawn_key=(split_idx, img_idx))
            rng = np.random.Generator(np.random.PCG64(seq))
            intensity, mask = _generate_image(config, rng)
            images.append(intensity)
            masks.append(mask)
        dataset.splits[split] = SplitArrays(
            images=np.stack(images), masks=np.stack(masks)
        )
    return dataset


def save_dataset(dataset: SyntheticDataset, out_dir) -> Path:
    """Write ``<split>/images/NNNN.npy`` (f32), ``<split>/masks/NNNN.npy``
    (u8) and a ``dataset.json`` carrying the config and a content digest."""
    out_dir = Path(out_dir)
    for split, arrays in dataset.splits.items():
        (out_dir / split / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / split / "masks").mkdir(parents=True, exist_ok=True)
        for i in range(arrays.images.shape[0]):
            save_array(out_dir / split / "images" / f"{i:04d}.npy", arrays.images[i], dtype=np.float32)
            save_array(out_dir / split / "masks" / f"{i:04d}.npy", arrays.masks[i], dtype=np.uint8)

    meta = {
        "format_version": 1,
        "kind": "mpsuq-dataset",
        "num_classes": NUM_CLASSES,
        "config": asdict(dataset.config),
        "splits": {s: int(a.images.shape[0]) for s, a in dataset.splits.items()},
        "digest": dataset_digest(out_dir),
    }
    with open(out_dir / "dataset.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return out_dir


def dataset_digest(root) -> str:
    """sha256 over every .npy file in the tree, keyed by relative path."""
    root = Path(root)
    lines = []
    for path in sorted(root.rglob("*.npy")):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        lines.append(f"{path.relative_to(root).as_posix()} {digest}")
    joined = "\n".join(lines).encode()
    return "sha256:" + hashlib.sha256(joined).hexdigest()


def read_dataset_meta(root) -> dict:
    root = Path(root)
    with open(root / "dataset.json") as fh:
        return json.load(fh)


def load_split(root, split: str) -> tuple[np.ndarray, np.ndarray, list]:
    """Load one split from disk.

    Returns (images (n, H, W) float64, masks (n, H, W) uint8, stems).
    Images come back as float64 for downstream arithmetic; mask/image
    file sets must match by stem.
    """
    root = Path(root)
    if split not in SPLITS:
        raise ValidationError(f"unknown split {split!r}, expected one of {SPLITS}")
    image_dir = root / split / "images"
    mask_dir = root / split / "masks"
    stems = sorted(p.stem for p in image_dir.glob("*.npy"))
    if not stems:
        raise FileNotFoundError(f"no images under {image_dir}")
    mask_stems = sorted(p.stem for p in mask_dir.glob("*.npy"))
    if stems != mask_stems:
        raise ValidationError(f"image/mask stems differ under {root / split}")
    images = np.stack([load_array(image_dir / f"{s}.npy").astype(np.float64) for s in stems])
    masks = np.stack([load_array(mask_dir / f"{s}.npy") for s in stems])
    return images, masks, stems
