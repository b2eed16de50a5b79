"""Command-line pipeline driver.

Subcommands cover the whole desk-scale workflow:

  synth      generate a synthetic dataset
  schedule   inspect the cyclic learning-rate schedule as CSV
  train      fit the model, sampling checkpoints into a run directory
  infer      ensemble inference (from a run, or from exported members)
  eval       segmentation metrics against ground-truth masks
  calibrate  reliability table and calibration error

Exit codes: 0 success, 2 usage, 3 validation failure, 4 I/O failure,
5 numeric failure. Every subcommand that owns an output directory drops
a ``run.json`` provenance record (full flag set and tool version) there.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import bin_statistics, error_map, uce, write_reliability_csv
from .ensemble import STD_REDUCERS, ensemble_outputs
from .metrics import HD95_MODES, evaluate_directories, write_metrics_json
from .model import NumericError
from .npyio import NpyFormatError, load_array, save_array, write_pgm
from .parallel import resolve_threads
from .runs import load_manifest, run_inference, train_run, verify_dataset_digest
from .schedule import CyclicLrParams, write_schedule_csv
from .synthetic import SyntheticConfig, generate_dataset, load_split, save_dataset
from .validation import ValidationError, check_probability_map

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_NUMERIC = 5


def _schedule_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cycles", type=int, default=3, help="number of learning-rate cycles")
    parser.add_argument("--cycle-len", type=int, default=60, help="epochs per cycle")
    parser.add_argument("--lr-max", type=float, default=0.1, help="peak learning rate")
    parser.add_argument("--lr-min", type=float, default=0.01, help="floor learning rate")
    parser.add_argument("--gamma", type=float, default=0.8, help="decaying fraction of each cycle")
    parser.add_argument("--power", type=float, default=0.9, help="polynomial decay power")


def _params_from(args) -> CyclicLrParams:
    return CyclicLrParams(
        lr_max=args.lr_max,
        lr_min=args.lr_min,
        decay_frac=args.gamma,
        decay_power=args.power,
        cycle_len=args.cycle_len,
        num_cycles=args.cycles,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpsuq",
        description="checkpoint-ensemble segmentation with uncertainty maps",
    )
    parser.add_argument("--version", action="version", version=f"mpsuq {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--n-train", type=int, default=40)
    p.add_argument("--n-val", type=int, default=10)
    p.add_argument("--n-test", type=int, default=10)
    p.add_argument("--noise-std", type=float, default=0.05)

    p = sub.add_parser("schedule", help="emit the learning-rate schedule as CSV")
    _schedule_args(p)
    p.add_argument("--csv", default="-", help="output path, - for stdout")

    p = sub.add_parser("train", help="train and sample checkpoints")
    p.add_argument("--data", required=True, help="dataset directory from synth")
    p.add_argument("--out", required=True, help="run output directory")
    _schedule_args(p)
    p.add_argument("--sample-window", type=int, default=20, help="cycle-tail epochs eligible for sampling")
    p.add_argument("--sample-stride", type=int, default=4, help="epochs between samples")
    p.add_argument("--lambda-ce", type=float, default=1.0)
    p.add_argument("--lambda-dice", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("infer", help="ensemble inference with uncertainty maps")
    p.add_argument("--run", help="run directory from train")
    p.add_argument("--data", help="dataset directory (with --run)")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--members", help="ensemble.json of exported member probability maps")
    p.add_argument("--out", required=True)
    p.add_argument("--std-reduce", default="mean", choices=list(STD_REDUCERS))
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("eval", help="segmentation metrics")
    p.add_argument("--pred", required=True, help="predictions: mask files or infer output")
    p.add_argument("--gt", required=True, help="ground-truth mask directory")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default="1,2", help="comma-separated class subset for overlap metrics")
    p.add_argument("--hd95-mode", default="pooled", choices=list(HD95_MODES))
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("calibrate", help="reliability table and calibration error")
    p.add_argument("--pred", required=True, help="infer output directory")
    p.add_argument("--gt", required=True, help="ground-truth mask directory")
    p.add_argument("--out", required=True)
    p.add_argument("--measure", default="std", choices=["std", "entropy"])
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--threads", type=int, default=None)
    return parser


def _write_run_record(out_dir: Path, args) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "subcommand"}
    record = {
        "tool": "mpsuq",
        "version": __version__,
        "subcommand": args.subcommand,
        "config": config,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run.json", "w") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def _cmd_synth(args) -> int:
    config = SyntheticConfig(
        image_size=args.image_size,
        n_train=args.n_train,
        n_val=args.n_val,
        n_test=args.n_test,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    out = Path(args.out)
    _write_run_record(out, args)
    save_dataset(generate_dataset(config), out)
    print(f"wrote dataset to {out}")
    return 0


def _cmd_schedule(args) -> int:
    params = _params_from(args)
    if args.csv == "-":
        ctx = nullcontext(sys.stdout)
    else:
        ctx = open(args.csv, "w")
    with ctx as fh:
        rows = write_schedule_csv(params, fh)
    if args.csv != "-":
        print(f"wrote {rows} rows to {args.csv}")
    return 0


def _cmd_train(args) -> int:
    out = Path(args.out)
    _write_run_record(out, args)
    manifest = train_run(
        args.data,
        out,
        _params_from(args),
        sample_window=args.sample_window,
        sample_stride=args.sample_stride,
        lambda_ce=args.lambda_ce,
        lambda_dice=args.lambda_dice,
        seed=args.seed,
    )
    print(f"trained {manifest.schedule.total_epochs} epochs, "
          f"saved {len(manifest.checkpoints)} checkpoints to {out}")
    return 0


def _write_outputs(out_dir: Path, stem: str, output) -> None:
    img_dir = out_dir / stem
    img_dir.mkdir(parents=True, exist_ok=True)
    save_array(img_dir / "mean.npy", output.mean, dtype=np.float32)
    save_array(img_dir / "mask.npy", output.mask, dtype=np.uint8)
    save_array(img_dir / "std.npy", output.std_raw, dtype=np.float32)
    save_array(img_dir / "entropy.npy", output.entropy_raw, dtype=np.float32)
    for measure in ("std", "entropy"):
        norm = output.uncertainty(measure, normalized=True)
        gray = np.clip(np.rint(norm * 255.0), 0, 255).astype(np.uint8)
        write_pgm(img_dir / f"{measure}.pgm", gray)


def _cmd_infer(args) -> int:
    out = Path(args.out)
    threads = resolve_threads(args.threads)
    if (args.members is None) == (args.run is None):
        raise ValidationError("give exactly one of --run (with --data) or --members")
    _write_run_record(out, args)

    if args.members is not None:
        spec_path = Path(args.members)
        with open(spec_path) as fh:
            spec = json.load(fh)
        if spec.get("format_version") != 1:
            raise ValidationError(f"unsupported ensemble.json version {spec.get('format_version')!r}")
        base = spec_path.parent
        members = []
        for entry in spec["members"]:
            arr = load_array(base / entry["path"]).astype(np.float64)
            check_probability_map(arr)
            members.append(arr)
        if not members:
            raise ValidationError("ensemble.json lists no members")
        if int(spec["num_classes"]) != members[0].shape[-1]:
            raise ValidationError(
                f"num_classes {spec['num_classes']} does not match member shape {members[0].shape}"
            )
        gt_paths = spec.get("gt", [])
        stem = Path(gt_paths[0]).stem if gt_paths else "0000"
        output = ensemble_outputs(np.stack(members), std_reduce=args.std_reduce)
        _write_outputs(out, stem, output)
        print(f"ensembled {len(members)} members into {out / stem}")
        return 0

    if args.data is None:
        raise ValidationError("--run requires --data")
    manifest = load_manifest(args.run)
    verify_dataset_digest(args.data, manifest)
    images, _, stems = load_split(args.data, args.split)
    outputs = run_inference(args.run, images, std_reduce=args.std_reduce, threads=threads)
    for stem, output in zip(stems, outputs):
        _write_outputs(out, stem, output)
    print(f"wrote ensemble outputs for {len(stems)} images to {out}")
    return 0


def _cmd_eval(args) -> int:
    out = Path(args.out)
    _write_run_record(out, args)
    classes = [int(tok) for tok in args.classes.split(",") if tok.strip() != ""]
    if not classes:
        raise ValidationError("--classes must name at least one class")
    report = evaluate_directories(
        args.pred,
        args.gt,
        classes=classes,
        hd95_mode=args.hd95_mode,
        threads=resolve_threads(args.threads),
    )
    write_metrics_json(report, out / "metrics.json")
    s = report["summary"]
    mhd = "undefined" if s["mhd95"] is None else f"{s['mhd95']:.3f}"
    print(f"mdice={s['mdice']:.4f} miou={s['miou']:.4f} mhd95={mhd} mpa={s['mpa']:.4f}")
    return 0


def _cmd_calibrate(args) -> int:
    out = Path(args.out)
    pred = Path(args.pred)
    gt_dir = Path(args.gt)
    _write_run_record(out, args)

    stems = sorted(p.stem for p in gt_dir.glob("*.npy"))
    if not stems:
        raise FileNotFoundError(f"no ground-truth masks under {gt_dir}")
    uncertainties, errors = [], []
    for stem in stems:
        img_dir = pred / stem
        gt = load_array(gt_dir / f"{stem}.npy")
        mask = load_array(img_dir / "mask.npy")
        raw = load_array(img_dir / f"{args.measure}.npy").astype(np.float64)
        num_classes = load_array(img_dir / "mean.npy").shape[-1]
        if args.measure == "entropy":
            norm = raw / np.log(num_classes)
        else:
            norm = raw / 0.5
        uncertainties.append(np.clip(norm, 0.0, 1.0))
        errors.append(error_map(mask, gt))

    table = bin_statistics(uncertainties, errors, bins=args.bins, measure=args.measure)
    value = uce(table)
    with open(out / f"reliability_{args.measure}.csv", "w") as fh:
        write_reliability_csv(table, fh)
    with open(out / "uce.json", "w") as fh:
        json.dump(
            {
                "measure": args.measure,
                "bins": args.bins,
                "uce": value,
                "total_pixels": table.total,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"uce[{args.measure}]={value:.6f} over {table.total} pixels")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "schedule": _cmd_schedule,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "calibrate": _cmd_calibrate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.subcommand](args)
    except (ValidationError, ValueError) as exc:
        print(f"mpsuq: error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NpyFormatError as exc:
        print(f"mpsuq: error: format: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, json.JSONDecodeError) as exc:
        print(f"mpsuq: error: io: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, FloatingPointError) as exc:
        print(f"mpsuq: error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
