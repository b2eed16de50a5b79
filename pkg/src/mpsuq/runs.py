"""Training runs on disk: checkpoints, manifest, ensemble inference.

A run directory holds ``checkpoints/epoch_NNNN.npy`` weight files (C x d
float64) and a ``manifest.json`` tying them to the schedule, sampling
plan, dataset digest and loss configuration that produced them. The
manifest is the handle every downstream stage consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import EnsembleOutput, ensemble_outputs
from .estimator import SnapshotEnsembleSegmenter
from .features import extract_features
from .model import forward
from .npyio import load_array, save_array
from .parallel import parallel_map
from .schedule import CyclicLrParams, SamplingPlan
from .synthetic import dataset_digest, load_split, read_dataset_meta
from .validation import ValidationError

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class CheckpointRecord:
    epoch: int
    cycle: int
    lr: float
    loss: float
    path: str  # relative to the run directory


@dataclass(frozen=True)
class RunManifest:
    schedule: CyclicLrParams
    plan: SamplingPlan
    dataset_digest: str
    seed: int
    lambda_ce: float
    lambda_dice: float
    num_classes: int
    feature_dim: int
    checkpoints: tuple

    def to_json(self) -> dict:
        return {
            "format_version": MANIFEST_VERSION,
            "schedule": {
                "lr_max": self.schedule.lr_max,
                "lr_min": self.schedule.lr_min,
                "decay_frac": self.schedule.decay_frac,
                "decay_power": self.schedule.decay_power,
                "cycle_len": self.schedule.cycle_len,
                "num_cycles": self.schedule.num_cycles,
            },
            "plan": {
                "window": self.plan.window,
                "stride": self.plan.stride,
                "epochs": list(self.plan.epochs),
            },
            "dataset_digest": self.dataset_digest,
            "seed": self.seed,
            "loss_weights": {"lambda_ce": self.lambda_ce, "lambda_dice": self.lambda_dice},
            "num_classes": self.num_classes,
            "feature_dim": self.feature_dim,
            "checkpoints": [
                {
                    "epoch": rec.epoch,
                    "cycle": rec.cycle,
                    "lr": rec.lr,
                    "loss": rec.loss,
                    "path": rec.path,
                }
                for rec in self.checkpoints
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunManifest":
        if data.get("format_version") != MANIFEST_VERSION:
            raise ValidationError(f"unsupported manifest version {data.get('format_version')!r}")
        schedule = CyclicLrParams(**data["schedule"])
        plan = SamplingPlan(
            window=data["plan"]["window"],
            stride=data["plan"]["stride"],
            epochs=tuple(data["plan"]["epochs"]),
        )
        records = tuple(
            CheckpointRecord(
                epoch=rec["epoch"],
                cycle=rec["cycle"],
                lr=rec["lr"],
                loss=rec["loss"],
                path=rec["path"],
            )
            for rec in data["checkpoints"]
        )
        if len(records) != len(plan.epochs) or tuple(r.epoch for r in records) != plan.epochs:
            raise ValidationError("manifest checkpoints do not match the sampling plan")
        return cls(
            schedule=schedule,
            plan=plan,
            dataset_digest=data["dataset_digest"],
            seed=data["seed"],
            lambda_ce=data["loss_weights"]["lambda_ce"],
            lambda_dice=data["loss_weights"]["lambda_dice"],
            num_classes=data["num_classes"],
            feature_dim=data["feature_dim"],
            checkpoints=records,
        )


def train_run(
    data_dir,
    out_dir,
    schedule: CyclicLrParams,
    sample_window: int = 20,
    sample_stride: int = 4,
    lambda_ce: float = 1.0,
    lambda_dice: float = 1.0,
    seed: int = 42,
) -> RunManifest:
    """Train on the dataset's train split and persist the sampled snapshots.

    Training itself is deterministic (zero init, full batch); the seed is
    recorded so the manifest fully describes how to reproduce the run.
    """
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    images, masks, _ = load_split(data_dir, "train")
    meta = read_dataset_meta(data_dir)

    est = SnapshotEnsembleSegmenter(
        lr_max=schedule.lr_max,
        lr_min=schedule.lr_min,
        decay_frac=schedule.decay_frac,
        decay_power=schedule.decay_power,
        cycle_len=schedule.cycle_len,
        num_cycles=schedule.num_cycles,
        sample_window=sample_window,
        sample_stride=sample_stride,
        lambda_ce=lambda_ce,
        lambda_dice=lambda_dice,
        num_classes=meta.get("num_classes"),
    )
    est.fit(images, masks)

    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for snap in est.snapshots_:
        rel = f"checkpoints/epoch_{snap.epoch:04d}.npy"
        save_array(out_dir / rel, snap.weights, dtype=np.float64)
        records.append(
            CheckpointRecord(epoch=snap.epoch, cycle=snap.cycle, lr=snap.lr, loss=snap.loss, path=rel)
        )

    manifest = RunManifest(
        schedule=est.schedule_,
        plan=est.plan_,
        dataset_digest=meta["digest"],
        seed=seed,
        lambda_ce=lambda_ce,
        lambda_dice=lambda_dice,
        num_classes=est.n_classes_,
        feature_dim=est.feature_dim_,
        checkpoints=tuple(records),
    )
    with open(out_dir / MANIFEST_NAME, "w") as fh:
        json.dump(manifest.to_json(), fh, indent=2)
        fh.write("\n")
    return manifest


def load_manifest(run_dir) -> RunManifest:
    run_dir = Path(run_dir)
    with open(run_dir / MANIFEST_NAME) as fh:
        return RunManifest.from_json(json.load(fh))


def load_member_weights(run_dir, manifest: RunManifest) -> list:
    run_dir = Path(run_dir)
    weights = []
    for rec in manifest.checkpoints:
        w = load_array(run_dir / rec.path).astype(np.float64)
        if w.shape != (manifest.num_classes, manifest.feature_dim):
            raise ValidationError(
                f"checkpoint {rec.path}: shape {w.shape} does not match manifest"
            )
        weights.append(w)
    return weights


def verify_dataset_digest(data_dir, manifest: RunManifest) -> None:
    actual = dataset_digest(data_dir)
    if actual != manifest.dataset_digest:
        raise ValidationError(
            f"dataset digest mismatch: manifest has {manifest.dataset_digest}, "
            f"directory has {actual}"
        )


def run_inference(run_dir, images, std_reduce: str = "mean", threads: int = 1) -> list[EnsembleOutput]:
    """Ensemble inference for a stack of images using a run's checkpoints."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    members = load_member_weights(run_dir, manifest)

    def infer_one(image) -> EnsembleOutput:
        feats = extract_features(np.asarray(image, dtype=np.float64))
        stack = np.stack([forward(w, feats) for w in members])
        return ensemble_outputs(stack, std_reduce=std_reduce)

    return parallel_map(infer_one, list(np.asarray(images, dtype=np.float64)), threads=threads)
