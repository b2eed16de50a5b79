"""Checkpoint-ensemble segmentation with pixel-wise uncertainty.

Train one per-pixel softmax segmenter under a cyclic learning-rate
schedule, keep weight snapshots from the tail of every cycle, predict
with the snapshot ensemble, and quantify uncertainty via the entropy of
the averaged distribution or the across-member standard deviation. The
package also provides segmentation metrics (Dice, IoU, pixel accuracy,
HD95 on an exact distance transform) and uncertainty calibration
(reliability tables, calibration error), plus a CLI covering the whole
pipeline over documented file formats.
"""

__version__ = "0.1.0"

from .calibration import (
    ReliabilityTable,
    bin_statistics,
    error_map,
    read_reliability_csv,
    uce,
    write_reliability_csv,
)
from .ensemble import (
    EnsembleOutput,
    ensemble_mean,
    ensemble_outputs,
    entropy_map,
    normalize_uncertainty,
    predict_mask,
    std_map,
)
from .estimator import Snapshot, SnapshotEnsembleSegmenter
from .features import FEATURE_DIM, extract_features
from .metrics import (
    boundary,
    dice,
    edt_squared,
    evaluate_directories,
    evaluate_pair,
    hd95,
    iou,
    pixel_accuracy,
)
from .model import (
    LossParts,
    NumericError,
    combined_loss,
    cross_entropy,
    forward,
    loss_gradient,
    soft_dice_loss,
)
from .npyio import NpyFormatError, load_array, save_array, write_pgm
from .runs import CheckpointRecord, RunManifest, load_manifest, run_inference, train_run
from .schedule import CyclicLrParams, SamplingPlan, write_schedule_csv
from .synthetic import SyntheticConfig, generate_dataset, load_split, save_dataset
from .validation import (
    ValidationError,
    ValidationReport,
    check_label_mask,
    check_probability_map,
    validate_label_mask,
    validate_probability_map,
    validate_uncertainty_map,
)

__all__ = [
    "__version__",
    "ReliabilityTable",
    "bin_statistics",
    "error_map",
    "read_reliability_csv",
    "uce",
    "write_reliability_csv",
    "EnsembleOutput",
    "ensemble_mean",
    "ensemble_outputs",
    "entropy_map",
    "normalize_uncertainty",
    "predict_mask",
    "std_map",
    "Snapshot",
    "SnapshotEnsembleSegmenter",
    "FEATURE_DIM",
    "extract_features",
    "boundary",
    "dice",
    "edt_squared",
    "evaluate_directories",
    "evaluate_pair",
    "hd95",
    "iou",
    "pixel_accuracy",
    "LossParts",
    "NumericError",
    "combined_loss",
    "cross_entropy",
    "forward",
    "loss_gradient",
    "soft_dice_loss",
    "NpyFormatError",
    "load_array",
    "save_array",
    "write_pgm",
    "CheckpointRecord",
    "RunManifest",
    "load_manifest",
    "run_inference",
    "train_run",
    "CyclicLrParams",
    "SamplingPlan",
    "write_schedule_csv",
    "SyntheticConfig",
    "generate_dataset",
    "load_split",
    "save_dataset",
    "ValidationError",
    "ValidationReport",
    "check_label_mask",
    "check_probability_map",
    "validate_label_mask",
    "validate_probability_map",
    "validate_uncertainty_map",
]
