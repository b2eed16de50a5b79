import json
import time
from pathlib import Path

import pytest

from mpsuq.cli import main


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory) -> dict:
    """One full default pipeline run shared across the session.

    synth -> train -> infer -> eval -> calibrate (both measures), all
    through the CLI entry point with default parameters.
    """
    root = tmp_path_factory.mktemp("pipeline")
    started = time.monotonic()
    data = root / "data"
    run = root / "run"
    infer = root / "infer"
    ev = root / "eval"
    calib = {m: root / f"calib_{m}" for m in ("std", "entropy")}

    assert main(["synth", "--out", str(data), "--seed", "42"]) == 0
    assert main(["train", "--data", str(data), "--out", str(run)]) == 0
    assert main([
        "infer", "--run", str(run), "--data", str(data), "--split", "test",
        "--out", str(infer),
    ]) == 0
    assert main([
        "eval", "--pred", str(infer), "--gt", str(data / "test" / "masks"),
        "--out", str(ev),
    ]) == 0
    for measure, out in calib.items():
        assert main([
            "calibrate", "--pred", str(infer), "--gt", str(data / "test" / "masks"),
            "--out", str(out), "--measure", measure,
        ]) == 0

    return {
        "root": root,
        "data": data,
        "run": run,
        "infer": infer,
        "eval": ev,
        "calib": calib,
        "manifest": json.loads((run / "manifest.json").read_text()),
        "metrics": json.loads((ev / "metrics.json").read_text()),
        "elapsed": time.monotonic() - started,
    }


def rerun_pipeline(root: Path, data: Path, threads: int) -> dict:
    """Repeat train/infer/eval/calibrate on an existing dataset."""
    run = root / "run"
    infer = root / "infer"
    ev = root / "eval"
    calib = root / "calib"
    common = ["--threads", str(threads)]
    assert main(["train", "--data", str(data), "--out", str(run), *common]) == 0
    assert main([
        "infer", "--run", str(run), "--data", str(data), "--split", "test",
        "--out", str(infer), *common,
    ]) == 0
    assert main([
        "eval", "--pred", str(infer), "--gt", str(data / "test" / "masks"),
        "--out", str(ev), *common,
    ]) == 0
    assert main([
        "calibrate", "--pred", str(infer), "--gt", str(data / "test" / "masks"),
        "--out", str(calib), "--measure", "std", *common,
    ]) == 0
    return {"metrics": ev / "metrics.json", "uce": calib / "uce.json"}
