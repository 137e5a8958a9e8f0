"""Single entry point: dataset generation, training, sampling, evaluation.

Usage errors exit 2 (argparse). Validation and runtime failures exit 1 with
a one-line JSON error object on stderr so scripted callers can parse it.
Artifact-producing commands write a resolved config, a run manifest, and
append to a ``runs.jsonl`` registry beside the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .captions import PairKind
from .config import (
    ConfigError,
    Stage1Spec,
    Stage2Spec,
    load_config,
    write_resolved,
)
from .dataset import (
    KIND_ORDER,
    DatasetConfig,
    build_dataset,
    build_degree_dataset,
    load_images,
    read_degree_manifest,
    read_manifest,
)
from .evalsuite import (
    alignment_accuracy,
    consistency_score,
    crops_from_rows,
    identity_reconstruct,
    load_classifier,
    roundtrip_fidelity,
    save_classifier,
    train_classifier,
)
from .pipeline import PairPipeline, load_pairs
from .prior import PriorConfig, SequencePrior
from .runlog import RunManifest, RunRegistry, sha256_file
from .stage1 import Stage1Config
from .textcodec import Vocabulary, tokenize_all
from .training import (
    PairBatches,
    SequenceBatches,
    TrainingDivergedError,
    load_prior_checkpoint,
    load_stage1_checkpoint,
    precompute_indices,
    save_prior_checkpoint,
    save_stage1_checkpoint,
    train_prior,
    train_stage1,
)


class CliError(RuntimeError):
    """Validation failure with a clean message; maps to exit code 1."""


def _fail(message: str) -> "CliError":
    return CliError(message)


def _emit_error(command: str, exc: Exception) -> None:
    payload = {"error": {"command": command, "type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload), file=sys.stderr)


def _apply_workers(workers: int) -> None:
    if workers > 0:
        torch.set_num_threads(workers)


def _check_device(device: str) -> str:
    if device != "cpu" and not torch.cuda.is_available():
        raise _fail(f"device {device!r} requested but CUDA is not available")
    return device


def _prepare_out_dir(out: Path) -> None:
    if (out / "run.json").exists():
        raise _fail(f"{out} already holds a completed run; pick a fresh directory")
    out.mkdir(parents=True, exist_ok=True)


def _registry_for(out: Path) -> RunRegistry:
    return RunRegistry(out.resolve().parent / "runs.jsonl")


def _finish_run(manifest: RunManifest, out: Path, outputs: list[Path]) -> None:
    manifest.finish([str(p) for p in outputs])
    _registry_for(out).append(manifest)
    manifest.write(out)


def _parse_kind_counts(text: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise _fail(f"bad kind-counts entry {part!r}; expected kind=count")
        name, _, value = part.partition("=")
        name = name.strip()
        try:
            PairKind(name)
        except ValueError:
            valid = ", ".join(k.value for k in KIND_ORDER)
            raise _fail(f"unknown pair kind {name!r}; valid kinds: {valid}") from None
        try:
            counts[name] = int(value)
        except ValueError:
            raise _fail(f"count for {name!r} is not an integer: {value!r}") from None
    if not counts:
        raise _fail("kind-counts parsed to nothing")
    return counts


# ---------------------------------------------------------------- gen-data


def cmd_gen_data(args) -> int:
    if args.kind_counts is not None:
        counts = _parse_kind_counts(args.kind_counts)
    elif args.per_kind is not None:
        counts = {k.value: args.per_kind for k in KIND_ORDER}
    else:
        counts = DatasetConfig().kind_counts
    config = DatasetConfig(
        kind_counts=counts,
        seed=args.seed,
        glyph_source=args.glyph_source,
        glyph_per_class=args.glyph_per_class,
        mnist_images=args.mnist_images,
        mnist_labels=args.mnist_labels,
    )
    out = Path(args.out)
    _prepare_out_dir(out)
    manifest = RunManifest.start("gen-data", config.to_dict(), {})
    build_dataset(config, out)
    _finish_run(manifest, out, [out / "manifest.jsonl", out / "genconfig.json"])
    print(f"wrote {sum(counts.values())} pairs to {out}")
    return 0


def cmd_gen_degree(args) -> int:
    data = Path(args.data)
    if not (data / "manifest.jsonl").exists():
        raise _fail(f"{data} is not a generated dataset (no manifest.jsonl)")
    out = Path(args.out)
    _prepare_out_dir(out)
    config = {"seed": args.seed, "per_kind": args.per_kind, "data": str(data.resolve())}
    manifest = RunManifest.start(
        "gen-degree", config, {"manifest": data / "manifest.jsonl"}
    )
    build_degree_dataset(data, out, seed=args.seed, per_kind=args.per_kind)
    _finish_run(manifest, out, [out / "degree_manifest.jsonl"])
    rows = read_degree_manifest(out)
    print(f"wrote {len(rows)} degree-corrupted captions to {out}")
    return 0


# ------------------------------------------------------------- train-stage1


def _load_stage1_spec(args) -> Stage1Spec:
    if args.config is not None:
        spec = load_config(args.config, "stage1")
    else:
        spec = Stage1Spec()
    if args.model_kind is not None:
        spec.model_kind = args.model_kind
    if args.epochs is not None:
        spec.train.epochs = args.epochs
    if args.batch_size is not None:
        spec.train.batch_size = args.batch_size
    spec.train.seed = args.seed
    return spec


def cmd_train_stage1(args) -> int:
    from .baselines import ModelKind, build_model

    _apply_workers(args.workers)
    _check_device(args.device)
    data = Path(args.data)
    if not (data / "manifest.jsonl").exists():
        raise _fail(f"{data} is not a generated dataset (no manifest.jsonl)")
    spec = _load_stage1_spec(args)
    try:
        kind = ModelKind(spec.model_kind)
    except ValueError:
        valid = ", ".join(k.value for k in ModelKind)
        raise _fail(f"unknown model kind {spec.model_kind!r}; valid kinds: {valid}") from None

    images, captions, rows = load_pairs(data)
    vocab = Vocabulary.build(captions)
    if spec.model is None:
        spec.model = Stage1Config(vocab_size=vocab.size)
    else:
        spec.model.vocab_size = vocab.size
    out = Path(args.out)
    _prepare_out_dir(out)
    write_resolved(out / "config.json", spec)
    manifest = RunManifest.start(
        "train-stage1", spec.to_dict(), {"manifest": data / "manifest.jsonl"}
    )

    torch.manual_seed(spec.train.seed)
    model = build_model(kind, spec.model)
    tokens = torch.from_numpy(tokenize_all(vocab, captions, spec.model.text_length))
    batches = PairBatches(images, tokens, spec.train.batch_size, spec.train.seed)

    eval_n = min(args.epoch_eval, images.shape[0]) if args.epoch_eval else 0
    target = args.early_stop_slot_acc
    metrics_path = out / "metrics.jsonl"

    def after_epoch(epoch: int, m) -> bool:
        if not eval_n:
            return False
        fid = roundtrip_fidelity(m, vocab, images[:eval_n], captions[:eval_n], rows[:eval_n])
        with metrics_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"epoch_eval": epoch, **fid}, sort_keys=True) + "\n")
        print(
            f"epoch {epoch}: image_mse={fid['image_mse']:.5f} "
            f"slot_accuracy={fid['slot_accuracy']:.4f}",
            flush=True,
        )
        return target is not None and fid["slot_accuracy"] >= target

    steps = train_stage1(
        model, batches, spec.train, metrics_path, epoch_callback=after_epoch
    )
    ckpt = out / "stage1.pt"
    save_stage1_checkpoint(ckpt, model, vocab, steps, extra={"data": str(data.resolve())})
    _finish_run(manifest, out, [ckpt, metrics_path, out / "config.json"])
    print(f"trained {kind.value} for {steps} steps; checkpoint at {ckpt}")
    return 0


# ------------------------------------------------------------- train-stage2


def cmd_train_stage2(args) -> int:
    _apply_workers(args.workers)
    _check_device(args.device)
    stage1_path = Path(args.stage1)
    if not stage1_path.exists():
        raise _fail(f"stage-1 checkpoint {stage1_path} not found")
    data = Path(args.data)
    if not (data / "manifest.jsonl").exists():
        raise _fail(f"{data} is not a generated dataset (no manifest.jsonl)")

    if args.config is not None:
        spec = load_config(args.config, "stage2")
    else:
        spec = Stage2Spec()
    if args.epochs is not None:
        spec.train.epochs = args.epochs
    if args.batch_size is not None:
        spec.train.batch_size = args.batch_size
    spec.train.seed = args.seed

    codec, vocab, meta = load_stage1_checkpoint(stage1_path)
    images, captions, _rows = load_pairs(data)
    data_vocab = Vocabulary.build(captions)
    if data_vocab.content_hash() != vocab.content_hash():
        raise _fail(
            "vocabulary mismatch between stage-1 checkpoint and --data; "
            "stage 2 must train on data tokenized identically to stage 1"
        )

    out = Path(args.out)
    _prepare_out_dir(out)
    write_resolved(out / "config.json", spec)
    manifest = RunManifest.start(
        "train-stage2",
        spec.to_dict(),
        {"stage1": stage1_path, "manifest": data / "manifest.jsonl"},
    )

    tokens = torch.from_numpy(tokenize_all(vocab, captions, codec.config.text_length))
    sequences = precompute_indices(codec, images, tokens)

    torch.manual_seed(spec.train.seed)
    prior = SequencePrior(
        PriorConfig(
            content_vocab=codec.content_vocab,
            seq_len=codec.seq_len,
            layers=spec.prior.layers,
            heads=spec.prior.heads,
            dim=spec.prior.dim,
            dropout=spec.prior.dropout,
        )
    )
    batches = SequenceBatches(sequences, spec.train.batch_size, spec.train.seed)
    metrics_path = out / "metrics.jsonl"
    steps = train_prior(prior, batches, spec.train, metrics_path)
    ckpt = out / "prior.pt"
    save_prior_checkpoint(
        ckpt,
        prior,
        steps,
        extra={
            "stage1_checkpoint": str(stage1_path.resolve()),
            "stage1_hash": sha256_file(stage1_path),
            "model_kind": codec.kind,
            "vocab_hash": vocab.content_hash(),
        },
    )
    _finish_run(manifest, out, [ckpt, metrics_path, out / "config.json"])
    print(f"trained prior for {steps} steps; checkpoint at {ckpt}")
    return 0


# ------------------------------------------------------------------ sample


def _image_grid(images: np.ndarray, cols: int = 4, pad: int = 2) -> np.ndarray:
    n, h, w, c = images.shape
    rows = (n + cols - 1) // cols
    canvas = np.zeros((rows * (h + pad) + pad, cols * (w + pad) + pad, c), dtype=np.uint8)
    for i in range(n):
        r, col = divmod(i, cols)
        y = pad + r * (h + pad)
        x = pad + col * (w + pad)
        canvas[y : y + h, x : x + w] = images[i]
    return canvas


def cmd_sample(args) -> int:
    from PIL import Image

    _apply_workers(args.workers)
    _check_device(args.device)
    if args.num <= 0:
        raise _fail("-n must be positive")
    codec, vocab, _meta = load_stage1_checkpoint(args.stage1)
    prior, prior_meta = load_prior_checkpoint(args.prior)
    extra = prior_meta.get("extra", {})
    if extra.get("vocab_hash") not in (None, vocab.content_hash()):
        raise _fail(
            "prior checkpoint was trained against a different stage-1 vocabulary "
            f"(prior {extra.get('vocab_hash')}, stage-1 {vocab.content_hash()})"
        )
    if prior.config.seq_len != codec.seq_len or prior.config.content_vocab != codec.content_vocab:
        raise _fail(
            "prior and stage-1 disagree on sequence geometry: "
            f"prior ({prior.config.seq_len}, {prior.config.content_vocab}) vs "
            f"codec ({codec.seq_len}, {codec.content_vocab})"
        )

    out = Path(args.out)
    _prepare_out_dir(out)
    manifest = RunManifest.start(
        "sample",
        {
            "num": args.num,
            "temperature": args.temperature,
            "top_k": args.top_k,
            "seed": args.seed,
        },
        {"stage1": Path(args.stage1), "prior": Path(args.prior)},
    )

    ranges = codec.position_ranges()
    chunks = []
    generator_seed = args.seed
    remaining = args.num
    chunk_index = 0
    while remaining > 0:
        take = min(remaining, args.chunk_size)
        chunks.append(
            prior.sample(
                take,
                temperature=args.temperature,
                top_k=args.top_k,
                seed=None if generator_seed is None else generator_seed + chunk_index,
                position_ranges=ranges,
            )
        )
        remaining -= take
        chunk_index += 1
    sequences = torch.cat(chunks, dim=0)

    pipeline = PairPipeline(codec, vocab)
    images, captions = pipeline.decode(sequences)

    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    for i in range(images.shape[0]):
        Image.fromarray(images[i]).save(img_dir / f"{i:04d}.png")
    captions_path = out / "captions.txt"
    captions_path.write_text("".join(c + "\n" for c in captions))
    grid_path = out / "grid.png"
    Image.fromarray(_image_grid(images[: min(16, images.shape[0])])).save(grid_path)
    provenance = {
        "stage1": str(Path(args.stage1).resolve()),
        "stage1_hash": sha256_file(args.stage1),
        "prior": str(Path(args.prior).resolve()),
        "prior_hash": sha256_file(args.prior),
        "model_kind": codec.kind,
        "num": args.num,
        "temperature": args.temperature,
        "top_k": args.top_k,
        "seed": args.seed,
        "vocab_hash": vocab.content_hash(),
        "version": __version__,
    }
    (out / "provenance.json").write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    _finish_run(manifest, out, [captions_path, grid_path, out / "provenance.json"])
    print(f"sampled {args.num} pairs into {out}")
    return 0


# ----------------------------------------------------------------- evaluate


def _load_eval_pairs(pairs_dir: Path) -> tuple[np.ndarray, list[str], Path]:
    """Accept either a generated dataset or a sample output directory."""
    if (pairs_dir / "manifest.jsonl").exists():
        images, captions, _ = load_pairs(pairs_dir)
        return images, captions, pairs_dir / "manifest.jsonl"
    captions_path = pairs_dir / "captions.txt"
    if captions_path.exists():
        from PIL import Image

        captions = captions_path.read_text().splitlines()
        images = []
        for i in range(len(captions)):
            p = pairs_dir / "images" / f"{i:04d}.png"
            if not p.exists():
                raise _fail(f"missing image {p} for caption line {i}")
            images.append(np.asarray(Image.open(p).convert("RGB")))
        return np.stack(images), captions, captions_path
    raise _fail(f"{pairs_dir} holds neither manifest.jsonl nor captions.txt")


def _get_classifiers(args):
    clf_dir = Path(args.classifiers)
    color_path = clf_dir / "color.pt"
    digit_path = clf_dir / "digit.pt"
    if color_path.exists() and digit_path.exists():
        return load_classifier(color_path), load_classifier(digit_path)
    if args.train_data is None:
        raise _fail(
            f"{clf_dir} has no trained classifiers; pass --train-data to train them"
        )
    train_dir = Path(args.train_data)
    if not (train_dir / "manifest.jsonl").exists():
        raise _fail(f"--train-data {train_dir} is not a generated dataset")
    rows = read_manifest(train_dir)
    images = load_images(train_dir, rows)
    crops, colors, digits = crops_from_rows(images, rows)
    color_rec = train_classifier("color", crops, colors, seed=args.seed)
    digit_rec = train_classifier("digit", crops, digits, seed=args.seed)
    save_classifier(color_path, color_rec)
    save_classifier(digit_path, digit_rec)
    return color_rec, digit_rec


def cmd_eval_consistency(args) -> int:
    _apply_workers(args.workers)
    pairs_dir = Path(args.pairs)
    if not pairs_dir.exists():
        raise _fail(f"pairs directory {pairs_dir} not found")
    images, captions, source = _load_eval_pairs(pairs_dir)
    color_rec, digit_rec = _get_classifiers(args)
    result = consistency_score(images, captions, color_rec.model, digit_rec.model)
    report = {
        "schema_version": 1,
        "report": "consistency",
        "pairs": str(pairs_dir.resolve()),
        "consistency": result.to_dict(),
        "classifiers": {"color": color_rec.meta(), "digit": digit_rec.meta()},
        "warnings": [
            f"{rec.task} classifier held-out accuracy {rec.held_out_accuracy:.4f} "
            "is below target"
            for rec in (color_rec, digit_rec)
            if rec.below_target
        ],
        "config_hashes": {"pairs_source": sha256_file(source)},
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(
        f"consistency over {result.num_pairs} pairs: mean={result.mean_score:.4f} "
        f"parse_rate={result.parse_rate:.4f}"
    )
    return 0


def cmd_eval_alignment(args) -> int:
    _apply_workers(args.workers)
    degree_dir = Path(args.degree_data)
    if not (degree_dir / "degree_manifest.jsonl").exists():
        raise _fail(f"{degree_dir} is not a degree dataset (no degree_manifest.jsonl)")
    codec, vocab, _meta = load_stage1_checkpoint(args.stage1)
    rows = read_degree_manifest(degree_dir)
    images = load_images(degree_dir, rows)
    pipeline = PairPipeline(codec, vocab)
    result = alignment_accuracy(pipeline.roundtrip_captions, images, rows)
    control = alignment_accuracy(identity_reconstruct, images, rows)
    report = {
        "schema_version": 1,
        "report": "alignment",
        "stage1": str(Path(args.stage1).resolve()),
        "model_kind": codec.kind,
        "alignment": result.to_dict(),
        "identity_control": control.to_dict(),
        "config_hashes": {
            "stage1": sha256_file(args.stage1),
            "degree_manifest": sha256_file(degree_dir / "degree_manifest.jsonl"),
        },
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    cells = ", ".join(f"{k}={v:.3f}" for k, v in sorted(result.per_cell.items()))
    print(f"alignment over {result.num_samples} samples: {cells}")
    return 0


# ------------------------------------------------------------------ report


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def cmd_report(args) -> int:
    reports = []
    missing = []
    for d in args.runs:
        path = Path(d)
        candidates = sorted(path.glob("report.json")) or sorted(path.glob("*/report.json"))
        if not candidates:
            missing.append(str(path))
            continue
        for c in candidates:
            data = json.loads(c.read_text())
            data["_source"] = str(c)
            reports.append(data)
    if not reports:
        raise _fail(f"no report.json found under: {', '.join(missing) or '(no dirs given)'}")

    consistency = [r for r in reports if r.get("report") == "consistency"]
    alignment = [r for r in reports if r.get("report") == "alignment"]
    blocks = []
    if consistency:
        kinds = sorted({k for r in consistency for k in r["consistency"]["per_kind"]})
        header = ["kind"] + [Path(r["_source"]).parent.name for r in consistency]
        rows = []
        for kind in kinds:
            rows.append(
                [kind]
                + [f"{r['consistency']['per_kind'].get(kind, float('nan')):.4f}" for r in consistency]
            )
        rows.append(["mean"] + [f"{r['consistency']['mean_score']:.4f}" for r in consistency])
        blocks.append("semantic consistency\n" + _format_table(header, rows))
    if alignment:
        cells = sorted({k for r in alignment for k in r["alignment"]["per_cell"]})
        header = ["kind/degree"] + [Path(r["_source"]).parent.name for r in alignment]
        rows = [
            [cell]
            + [f"{r['alignment']['per_cell'].get(cell, float('nan')):.4f}" for r in alignment]
            for cell in cells
        ]
        blocks.append("degree alignment\n" + _format_table(header, rows))
    if missing:
        blocks.append("missing reports: " + ", ".join(missing))
    text = "\n\n".join(blocks) + "\n"
    print(text, end="")
    combined = {
        "schema_version": 1,
        "reports": reports,
        "missing": missing,
    }
    if args.out is not None:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(combined, indent=2, sort_keys=True) + "\n")
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointvq",
        description="Joint image-text VQ codec: data, training, sampling, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, device=True):
        p.add_argument("--seed", type=int, default=0, help="master random seed")
        if device:
            p.add_argument("--device", default="cpu", help="compute device (cpu)")
            p.add_argument(
                "--workers", type=int, default=0, help="torch thread count (0 = default)"
            )

    p = sub.add_parser("gen-data", help="generate an image-caption dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--kind-counts", help="per-kind counts, e.g. single=100,quad4=50")
    p.add_argument("--per-kind", type=int, help="same count for every kind")
    p.add_argument("--glyph-source", choices=["synthetic", "mnist_idx"], default="synthetic")
    p.add_argument("--glyph-per-class", type=int, default=64)
    p.add_argument("--mnist-images", help="IDX images file (for --glyph-source mnist_idx)")
    p.add_argument("--mnist-labels", help="IDX labels file")
    add_common(p, device=False)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-degree", help="derive degree-corrupted captions")
    p.add_argument("--data", required=True, help="base dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--per-kind", type=int, help="base pairs per kind (default: all)")
    add_common(p, device=False)
    p.set_defaults(func=cmd_gen_degree)

    p = sub.add_parser("train-stage1", help="train a pair codec")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config (stage-1 schema)")
    p.add_argument("--model-kind", help="codec kind (default from config, else joint)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument(
        "--epoch-eval",
        type=int,
        default=0,
        help="round-trip fidelity sample count per epoch (0 = off)",
    )
    p.add_argument(
        "--early-stop-slot-acc",
        type=float,
        help="stop when epoch-eval slot accuracy reaches this value",
    )
    add_common(p)
    p.set_defaults(func=cmd_train_stage1)

    p = sub.add_parser("train-stage2", help="train the autoregressive prior")
    p.add_argument("--stage1", required=True, help="stage-1 checkpoint path")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config (stage-2 schema)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    add_common(p)
    p.set_defaults(func=cmd_train_stage2)

    p = sub.add_parser("sample", help="draw image-text pairs from the prior")
    p.add_argument("--stage1", required=True)
    p.add_argument("--prior", required=True)
    p.add_argument("-n", "--num", type=int, default=16)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-k", type=int)
    p.add_argument("--chunk-size", type=int, default=128)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval-consistency", help="score claimed vs shown content")
    p.add_argument("--pairs", required=True, help="dataset or sample directory")
    p.add_argument("--classifiers", required=True, help="classifier directory")
    p.add_argument("--train-data", help="dataset to train classifiers on if absent")
    p.add_argument("--out", required=True, help="report JSON path")
    add_common(p)
    p.set_defaults(func=cmd_eval_consistency)

    p = sub.add_parser("eval-alignment", help="degree-dataset text alignment")
    p.add_argument("--stage1", required=True)
    p.add_argument("--degree-data", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    add_common(p)
    p.set_defaults(func=cmd_eval_alignment)

    p = sub.add_parser("report", help="aggregate evaluation reports into tables")
    p.add_argument("--runs", nargs="+", required=True, help="run directories")
    p.add_argument("--out", help="combined JSON output path")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _emit_error(args.command, exc)
        return 1
    except (ConfigError, TrainingDivergedError, FileNotFoundError, ValueError, OSError) as exc:
        _emit_error(args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
