"""Shared plumbing for the acceptance suite.

Desk-scale artifacts (datasets, trained checkpoints, classifier weights) take
minutes to hours to build, so they are built once under ``.cache/acceptance``
at the repository root, keyed by a hash of everything that determines them,
and reused across pytest runs. Deleting the cache forces a rebuild. The
module doubles as a command line tool so the heavy artifacts can be prepared
ahead of running pytest:

    python3 tests/accept_helpers.py --build all
"""

from __future__ import annotations

import argparse
import json
import shutil
import time
from pathlib import Path

import torch

from jointvq.cli import main as cli_main
from jointvq.evalsuite import (
    consistency_score,
    crops_from_rows,
    load_classifier,
    save_classifier,
    train_classifier,
)
from jointvq.dataset import load_images, read_manifest
from jointvq.pipeline import PairPipeline, load_pairs
from jointvq.runlog import hash_config
from jointvq.training import load_stage1_checkpoint

CACHE_ROOT = Path(__file__).resolve().parent.parent / ".cache" / "acceptance"

# Desk-scale knobs, shared between the builders and the assertions.
CLASSIFIER_DATA = {"per_kind": 2000, "seed": 404}
STAGE1_DATA = {"per_kind": 12000, "seed": 101}
STAGE1_TRAIN = {"epochs": 20, "epoch_eval": 500, "early_stop": 0.90, "seed": 0}
DEGREE_DATA = {"per_kind": 100, "seed": 505}
BUDGET_DATA = {"per_kind": 4000, "seed": 202}
BUDGET_EVAL_DATA = {"per_kind": 400, "seed": 303}
BUDGET_TRAIN = {"epochs": 8, "seed": 0}
BUDGET_KINDS = [
    "joint",
    "shared-codebook-it",
    "shared-codebook-ti",
    "separate-vq-it",
    "separate-vq-ti",
    "img-vq-text-embed-it",
    "img-vq-text-embed-ti",
]
PRIOR_TRAIN = {"epochs": 8, "seed": 0}
PRIOR_SAMPLES = {"num": 1000, "seed": 123, "temperature": 1.0}


def run_cli(argv: list[str]) -> None:
    code = cli_main(argv)
    if code != 0:
        raise RuntimeError(f"command failed ({code}): {' '.join(argv)}")


def cached(name: str, config: dict, builder) -> Path:
    """Build-once directory keyed by ``config``; returns the finished path."""
    out = CACHE_ROOT / f"{name}-{hash_config(config)[:12]}"
    marker = out / "done.json"
    if marker.exists():
        return out
    if out.exists():
        shutil.rmtree(out)
    started = time.time()
    builder(out)
    meta = {"name": name, "config": config, "build_seconds": round(time.time() - started, 1)}
    marker.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def build_seconds(artifact_dir: Path) -> float:
    return json.loads((artifact_dir / "done.json").read_text())["build_seconds"]


# ------------------------------------------------------------------ datasets


def dataset_dir(name: str, per_kind: int, seed: int) -> Path:
    config = {"what": "dataset", "per_kind": per_kind, "seed": seed}

    def build(out: Path):
        run_cli(["gen-data", "--out", str(out), "--per-kind", str(per_kind), "--seed", str(seed)])

    return cached(name, config, build)


def degree_dir() -> Path:
    base = stage1_data_dir()
    config = {"what": "degree", "base": str(base.name), **DEGREE_DATA}

    def build(out: Path):
        run_cli(
            [
                "gen-degree", "--data", str(base), "--out", str(out),
                "--per-kind", str(DEGREE_DATA["per_kind"]), "--seed", str(DEGREE_DATA["seed"]),
            ]
        )

    return cached("degree", config, build)


def classifier_data_dir() -> Path:
    return dataset_dir("clf-data", **CLASSIFIER_DATA)


def stage1_data_dir() -> Path:
    return dataset_dir("stage1-data", **STAGE1_DATA)


def budget_data_dir() -> Path:
    return dataset_dir("budget-data", **BUDGET_DATA)


def budget_eval_data_dir() -> Path:
    return dataset_dir("budget-eval", **BUDGET_EVAL_DATA)


# ----------------------------------------------------------------- training


def stage1_run_dir() -> Path:
    """The flagship desk-scale training used by several criteria."""
    data = stage1_data_dir()
    config = {"what": "stage1", "data": data.name, "kind": "joint", **STAGE1_TRAIN}

    def build(out: Path):
        run_cli(
            [
                "train-stage1", "--data", str(data), "--out", str(out),
                "--model-kind", "joint",
                "--epochs", str(STAGE1_TRAIN["epochs"]),
                "--epoch-eval", str(STAGE1_TRAIN["epoch_eval"]),
                "--early-stop-slot-acc", str(STAGE1_TRAIN["early_stop"]),
                "--seed", str(STAGE1_TRAIN["seed"]),
            ]
        )

    return cached("stage1-run", config, build)


def budget_run_dir(kind: str) -> Path:
    """Equal-budget training for the codec comparison; same data and epochs."""
    data = budget_data_dir()
    config = {"what": "budget-run", "data": data.name, "kind": kind, **BUDGET_TRAIN}

    def build(out: Path):
        run_cli(
            [
                "train-stage1", "--data", str(data), "--out", str(out),
                "--model-kind", kind,
                "--epochs", str(BUDGET_TRAIN["epochs"]),
                "--seed", str(BUDGET_TRAIN["seed"]),
            ]
        )

    return cached(f"budget-{kind}", config, build)


def classifiers_dir() -> Path:
    data = classifier_data_dir()
    config = {"what": "classifiers", "data": data.name, "seed": 0}

    def build(out: Path):
        out.mkdir(parents=True, exist_ok=True)
        rows = read_manifest(data)
        images = load_images(data, rows)
        crops, colors, digits = crops_from_rows(images, rows)
        for task, labels in [("color", colors), ("digit", digits)]:
            record = train_classifier(task, crops, labels, seed=0)
            save_classifier(out / f"{task}.pt", record)

    return cached("classifiers", config, build)


def classifier_records() -> tuple:
    path = classifiers_dir()
    return load_classifier(path / "color.pt"), load_classifier(path / "digit.pt")


def prior_run_dir() -> Path:
    stage1 = stage1_run_dir()
    data = stage1_data_dir()
    config = {"what": "prior", "stage1": stage1.name, "data": data.name, **PRIOR_TRAIN}

    def build(out: Path):
        run_cli(
            [
                "train-stage2", "--stage1", str(stage1 / "stage1.pt"), "--data", str(data),
                "--out", str(out),
                "--epochs", str(PRIOR_TRAIN["epochs"]), "--seed", str(PRIOR_TRAIN["seed"]),
            ]
        )

    return cached("prior-run", config, build)


def samples_dir() -> Path:
    stage1 = stage1_run_dir()
    prior = prior_run_dir()
    config = {"what": "samples", "stage1": stage1.name, "prior": prior.name, **PRIOR_SAMPLES}

    def build(out: Path):
        run_cli(
            [
                "sample", "--stage1", str(stage1 / "stage1.pt"), "--prior", str(prior / "prior.pt"),
                "-n", str(PRIOR_SAMPLES["num"]), "--seed", str(PRIOR_SAMPLES["seed"]),
                "--temperature", str(PRIOR_SAMPLES["temperature"]), "--out", str(out),
            ]
        )

    return cached("samples", config, build)


# --------------------------------------------------------------- evaluations


def roundtrip_consistency(kind: str) -> dict:
    """Mean consistency of a trained codec's round-tripped held-out pairs."""
    run = budget_run_dir(kind)
    eval_data = budget_eval_data_dir()
    clf = classifiers_dir()
    config = {
        "what": "roundtrip-consistency",
        "run": run.name,
        "eval": eval_data.name,
        "classifiers": clf.name,
    }

    def build(out: Path):
        out.mkdir(parents=True, exist_ok=True)
        codec, vocab, _meta = load_stage1_checkpoint(run / "stage1.pt")
        images, captions, _rows = load_pairs(eval_data)
        pipeline = PairPipeline(codec, vocab, batch_size=128)
        recon_images, recon_captions = pipeline.roundtrip(images, captions)
        color_rec, digit_rec = classifier_records()
        result = consistency_score(recon_images, recon_captions, color_rec.model, digit_rec.model)
        (out / "scores.json").write_text(
            json.dumps({"kind": kind, **result.to_dict()}, indent=2, sort_keys=True) + "\n"
        )

    path = cached(f"consistency-{kind}", config, build)
    return json.loads((path / "scores.json").read_text())


def alignment_report() -> dict:
    stage1 = stage1_run_dir()
    degree = degree_dir()
    config = {"what": "alignment", "stage1": stage1.name, "degree": degree.name}

    def build(out: Path):
        out.mkdir(parents=True, exist_ok=True)
        run_cli(
            [
                "eval-alignment", "--stage1", str(stage1 / "stage1.pt"),
                "--degree-data", str(degree), "--out", str(out / "report.json"),
            ]
        )

    path = cached("alignment", config, build)
    return json.loads((path / "report.json").read_text())


def load_sample_pairs(sample_dir: Path):
    """Read a sample run back as ``(images uint8 [N,H,W,3], captions)``."""
    import numpy as np
    from PIL import Image

    captions = (sample_dir / "captions.txt").read_text().splitlines()
    images = np.stack(
        [
            np.asarray(Image.open(sample_dir / "images" / f"{i:04d}.png").convert("RGB"))
            for i in range(len(captions))
        ]
    )
    return images, captions


def epoch_evals(run_dir: Path) -> list[dict]:
    rows = []
    for line in (run_dir / "metrics.jsonl").read_text().splitlines():
        row = json.loads(line)
        if "epoch_eval" in row:
            rows.append(row)
    return rows


# -------------------------------------------------------------------- driver

BUILDERS = {
    "classifiers": classifiers_dir,
    "stage1": stage1_run_dir,
    "degree": degree_dir,
    "alignment": alignment_report,
    "budget": lambda: [budget_run_dir(k) for k in BUDGET_KINDS],
    "consistency": lambda: [roundtrip_consistency(k) for k in BUDGET_KINDS],
    "prior": prior_run_dir,
    "samples": samples_dir,
}


def build_main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Prepare cached acceptance artifacts.")
    parser.add_argument(
        "--build", nargs="+", choices=sorted(BUILDERS) + ["all"], required=True
    )
    args = parser.parse_args(argv)
    targets = sorted(BUILDERS) if "all" in args.build else args.build
    torch.set_num_threads(max(1, torch.get_num_threads()))
    for name in targets:
        started = time.time()
        print(f"[accept] building {name} ...", flush=True)
        BUILDERS[name]()
        print(f"[accept] {name} ready in {time.time() - started:.0f}s", flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(build_main())
