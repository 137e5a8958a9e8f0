"""Training loops and checkpoint round trips for both stages.

Both stages share the optimizer recipe: AdamW with betas (0.9, 0.99) and a
cosine schedule from a peak rate down to zero, where the peak scales
linearly with batch size against a reference batch of 256.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import torch
from torch import nn

from .prior import PriorConfig, SequencePrior
from .stage1 import PairCodec, Stage1Config
from .textcodec import Vocabulary

CHECKPOINT_SCHEMA = 1


class TrainingDivergedError(RuntimeError):
    """Raised when a loss stops being finite; carries the offending step."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 20
    base_lr: float = 5e-4
    reference_batch: int = 256
    betas: tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 0.0
    log_every: int = 50
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")

    @property
    def peak_lr(self) -> float:
        return self.base_lr * self.batch_size / self.reference_batch

    def to_dict(self) -> dict:
        return asdict(self)


def make_optimizer(model: nn.Module, config: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.parameters(),
        lr=config.peak_lr,
        betas=config.betas,
        weight_decay=config.weight_decay,
    )


def cosine_schedule(optimizer: torch.optim.Optimizer, total_steps: int):
    """Cosine decay from the configured peak to zero over ``total_steps``."""
    total = max(1, total_steps)

    def factor(step: int) -> float:
        t = min(step, total) / total
        return 0.5 * (1.0 + math.cos(math.pi * t))

    return torch.optim.lr_scheduler.LambdaLR(optimizer, factor)


def images_to_tensor(images_u8: np.ndarray) -> torch.Tensor:
    """uint8 (N, H, W, 3) to float (N, 3, H, W) scaled into [-1, 1]."""
    x = torch.from_numpy(np.ascontiguousarray(images_u8)).to(torch.float32)
    return x.div_(127.5).sub_(1.0).permute(0, 3, 1, 2).contiguous()


def tensor_to_images(x: torch.Tensor) -> np.ndarray:
    """Inverse of :func:`images_to_tensor`, with clamping for display."""
    arr = x.detach().permute(0, 2, 3, 1).add(1.0).mul(127.5).round()
    return arr.clamp(0, 255).to(torch.uint8).numpy()


class PairBatches:
    """Seeded shuffling batch iterator over uint8 images and token ids.

    Images stay uint8 until a batch is cut, which keeps a 60k pair corpus
    under a gigabyte instead of several.
    """

    def __init__(self, images_u8: np.ndarray, tokens: torch.Tensor, batch_size: int, seed: int):
        if images_u8.shape[0] != tokens.shape[0]:
            raise ValueError("images and tokens disagree on sample count")
        self.images_u8 = images_u8
        self.tokens = tokens
        self.batch_size = batch_size
        self.generator = torch.Generator().manual_seed(seed)

    def __len__(self) -> int:
        return (self.images_u8.shape[0] + self.batch_size - 1) // self.batch_size

    @property
    def num_samples(self) -> int:
        return self.images_u8.shape[0]

    def epoch(self) -> Iterator[tuple[torch.Tensor, torch.Tensor]]:
        order = torch.randperm(self.num_samples, generator=self.generator).numpy()
        for start in range(0, self.num_samples, self.batch_size):
            idx = order[start : start + self.batch_size]
            yield images_to_tensor(self.images_u8[idx]), self.tokens[torch.from_numpy(idx)]


class MetricsLog:
    """Append-only JSONL metrics stream; rows share a stable key order."""

    def __init__(self, path: Path | str | None):
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, row: dict):
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def train_stage1(
    model: PairCodec,
    batches: PairBatches,
    config: TrainConfig,
    metrics_path: Path | str | None = None,
    epoch_callback: Callable[[int, PairCodec], bool] | None = None,
) -> int:
    """Run the stage-1 loop; returns the number of optimizer steps taken.

    The model is calibrated once on the leading samples in dataset order
    before any optimizer step, which keeps the run deterministic without
    touching the shuffling stream. ``epoch_callback`` runs after each epoch
    and may return True to stop early. The cosine schedule is laid out for
    the full configured run, so early stopping leaves the tail unused.
    """
    lead = images_to_tensor(batches.images_u8[: config.batch_size])
    model.calibrate(lead, batches.tokens[: config.batch_size])
    optimizer = make_optimizer(model, config)
    scheduler = cosine_schedule(optimizer, config.epochs * len(batches))
    log = MetricsLog(metrics_path)
    step = 0
    model.train()
    for epoch in range(config.epochs):
        for images, tokens in batches.epoch():
            optimizer.zero_grad(set_to_none=True)
            total, terms, indices = model.compute_loss(images, tokens)
            value = float(total.detach())
            if not math.isfinite(value):
                raise TrainingDivergedError(step, value)
            total.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            if step % config.log_every == 0 or step == 1:
                usage = indices.unique().numel() / model.content_vocab
                log.write(
                    {
                        "step": step,
                        "epoch": epoch,
                        "total": value,
                        "recon_img": terms["recon_img"].item(),
                        "recon_txt": terms["recon_txt"].item(),
                        "codebook": terms["codebook"].item(),
                        "commit": terms["commit"].item(),
                        "lr": optimizer.param_groups[0]["lr"],
                        "codebook_usage": usage,
                    }
                )
        if epoch_callback is not None and epoch_callback(epoch, model):
            break
    model.eval()
    return step


class SequenceBatches:
    """Seeded shuffling iterator over precomputed index sequences."""

    def __init__(self, sequences: torch.Tensor, batch_size: int, seed: int):
        self.sequences = sequences
        self.batch_size = batch_size
        self.generator = torch.Generator().manual_seed(seed)

    def __len__(self) -> int:
        return (self.sequences.shape[0] + self.batch_size - 1) // self.batch_size

    def epoch(self) -> Iterator[torch.Tensor]:
        order = torch.randperm(self.sequences.shape[0], generator=self.generator)
        for start in range(0, self.sequences.shape[0], self.batch_size):
            yield self.sequences[order[start : start + self.batch_size]]


def train_prior(
    model: SequencePrior,
    batches: SequenceBatches,
    config: TrainConfig,
    metrics_path: Path | str | None = None,
    epoch_callback: Callable[[int, SequencePrior], bool] | None = None,
    max_steps: int | None = None,
) -> int:
    """Teacher-forced NLL training for the prior; returns steps taken."""
    optimizer = make_optimizer(model, config)
    total_steps = config.epochs * len(batches) if max_steps is None else max_steps
    scheduler = cosine_schedule(optimizer, total_steps)
    log = MetricsLog(metrics_path)
    step = 0
    model.train()
    for epoch in range(config.epochs):
        for seq in batches.epoch():
            optimizer.zero_grad(set_to_none=True)
            loss = model.nll(seq)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDivergedError(step, value)
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            if step % config.log_every == 0 or step == 1:
                log.write(
                    {
                        "step": step,
                        "epoch": epoch,
                        "nll": value,
                        "lr": optimizer.param_groups[0]["lr"],
                    }
                )
            if max_steps is not None and step >= max_steps:
                model.eval()
                return step
        if epoch_callback is not None and epoch_callback(epoch, model):
            break
    model.eval()
    return step


@torch.no_grad()
def precompute_indices(
    model: PairCodec, batches_images: np.ndarray, tokens: torch.Tensor, batch_size: int = 256
) -> torch.Tensor:
    """Encode a whole corpus to index sequences for stage-2 training."""
    model.eval()
    out = []
    for start in range(0, batches_images.shape[0], batch_size):
        imgs = images_to_tensor(batches_images[start : start + batch_size])
        out.append(model.encode_to_indices(imgs, tokens[start : start + batch_size]))
    return torch.cat(out, dim=0)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def save_stage1_checkpoint(
    path: Path | str, model: PairCodec, vocab: Vocabulary, step: int, extra: dict | None = None
):
    """Weights via torch.save plus a JSON sidecar that rebuilds the model."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state": model.state_dict()}, path)
    meta = {
        "schema_version": CHECKPOINT_SCHEMA,
        "role": "stage1",
        "kind": model.kind,
        "config": model.config.to_dict(),
        "vocab": list(vocab.words),
        "vocab_hash": vocab.content_hash(),
        "step": step,
    }
    if extra:
        meta["extra"] = extra
    _sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_stage1_checkpoint(path: Path | str) -> tuple[PairCodec, Vocabulary, dict]:
    from .baselines import build_model

    path = Path(path)
    meta = json.loads(_sidecar_path(path).read_text())
    if meta.get("role") != "stage1":
        raise ValueError(f"{path} is not a stage-1 checkpoint")
    if meta.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {meta.get('schema_version')}")
    config = Stage1Config(**meta["config"])
    model = build_model(meta["kind"], config)
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model.load_state_dict(payload["state"], strict=True)
    model.eval()
    return model, Vocabulary(list(meta["vocab"])), meta


def save_prior_checkpoint(
    path: Path | str, model: SequencePrior, step: int, extra: dict | None = None
):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state": model.state_dict()}, path)
    meta = {
        "schema_version": CHECKPOINT_SCHEMA,
        "role": "prior",
        "config": model.config.to_dict(),
        "step": step,
    }
    if extra:
        meta["extra"] = extra
    _sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_prior_checkpoint(path: Path | str) -> tuple[SequencePrior, dict]:
    path = Path(path)
    meta = json.loads(_sidecar_path(path).read_text())
    if meta.get("role") != "prior":
        raise ValueError(f"{path} is not a prior checkpoint")
    if meta.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {meta.get('schema_version')}")
    model = SequencePrior(PriorConfig(**meta["config"]))
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model.load_state_dict(payload["state"], strict=True)
    model.eval()
    return model, meta
