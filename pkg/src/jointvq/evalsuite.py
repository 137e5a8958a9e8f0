"""Semantic evaluation: region classifiers, consistency, and alignment.

Consistency asks whether a generated image actually shows what its caption
claims, slot by slot, using small frozen classifiers on 32x32 crops.
Alignment asks how faithfully a codec's text reconstruction follows the
input caption when that caption disagrees with the image to a known degree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .captions import Color, PairKind, Position, Slot, infer_kind, parse_caption
from .dataset import QUADRANT, _QUADRANT_ORIGIN, slots_from_json
from .textcodec import Vocabulary, detokenize, nearest_word_decode, tokenize_all
from .training import TrainConfig, cosine_schedule, images_to_tensor, make_optimizer

COLOR_CLASSES = len(Color)
DIGIT_CLASSES = 10
CENTER_OFFSET = 16

_COLOR_INDEX = {color: i for i, color in enumerate(Color)}


def crop_region(image: np.ndarray, position: Position) -> np.ndarray:
    """The 32x32 window a slot at ``position`` occupies in a 64x64 image."""
    if position is Position.CENTER:
        r = c = CENTER_OFFSET
    else:
        r, c = _QUADRANT_ORIGIN[position]
    return image[r : r + QUADRANT, c : c + QUADRANT]


def crops_from_rows(
    images: np.ndarray, rows: Sequence[dict]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slot-labeled crops from a generated dataset, for classifier training."""
    crops, colors, digits = [], [], []
    for image, row in zip(images, rows):
        for slot in slots_from_json(row["slots"]):
            crops.append(crop_region(image, slot.position))
            colors.append(_COLOR_INDEX[slot.color])
            digits.append(slot.digit)
    return (
        np.stack(crops),
        np.asarray(colors, dtype=np.int64),
        np.asarray(digits, dtype=np.int64),
    )


class RegionClassifier(nn.Module):
    """Small convnet over 32x32 crops; task is color (4-way) or digit (10-way)."""

    def __init__(self, task: str, num_classes: int):
        super().__init__()
        if task not in ("color", "digit"):
            raise ValueError(f"unknown task {task!r}")
        self.task = task
        self.num_classes = num_classes
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(16, 32, 3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
        )
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(64 * 4 * 4, 128),
            nn.ReLU(),
            nn.Linear(128, num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


@dataclass
class ClassifierRecord:
    model: RegionClassifier
    task: str
    held_out_accuracy: float
    num_train: int
    num_val: int
    below_target: bool

    def meta(self) -> dict:
        return {
            "task": self.task,
            "num_classes": self.model.num_classes,
            "held_out_accuracy": self.held_out_accuracy,
            "num_train": self.num_train,
            "num_val": self.num_val,
            "below_target": self.below_target,
        }


ACCURACY_TARGETS = {"color": 0.999, "digit": 0.99}


def train_classifier(
    task: str,
    crops: np.ndarray,
    labels: np.ndarray,
    seed: int = 0,
    epochs: int = 4,
    batch_size: int = 256,
    val_fraction: float = 0.05,
) -> ClassifierRecord:
    """Train one region classifier and measure held-out accuracy.

    Falling short of the accuracy target is recorded, not raised, so that
    downstream reports can carry the warning.
    """
    num_classes = COLOR_CLASSES if task == "color" else DIGIT_CLASSES
    torch.manual_seed(seed)
    model = RegionClassifier(task, num_classes)

    n = crops.shape[0]
    order = torch.randperm(n, generator=torch.Generator().manual_seed(seed)).numpy()
    n_val = max(1, int(round(n * val_fraction)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    labels_t = torch.from_numpy(labels)

    config = TrainConfig(batch_size=batch_size, epochs=epochs, base_lr=1e-3, seed=seed)
    optimizer = make_optimizer(model, config)
    steps_per_epoch = (len(train_idx) + batch_size - 1) // batch_size
    scheduler = cosine_schedule(optimizer, epochs * steps_per_epoch)
    shuffle = torch.Generator().manual_seed(seed + 1)

    model.train()
    for _ in range(epochs):
        perm = torch.randperm(len(train_idx), generator=shuffle).numpy()
        for start in range(0, len(train_idx), batch_size):
            idx = train_idx[perm[start : start + batch_size]]
            x = images_to_tensor(crops[idx])
            y = labels_t[torch.from_numpy(idx)]
            optimizer.zero_grad(set_to_none=True)
            loss = F.cross_entropy(model(x), y)
            loss.backward()
            optimizer.step()
            scheduler.step()
    model.eval()

    preds = classify(model, crops[val_idx])
    accuracy = float((preds == labels[val_idx]).mean())
    return ClassifierRecord(
        model=model,
        task=task,
        held_out_accuracy=accuracy,
        num_train=len(train_idx),
        num_val=n_val,
        below_target=accuracy < ACCURACY_TARGETS[task],
    )


@torch.no_grad()
def classify(model: RegionClassifier, crops: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Predicted class ids for a stack of uint8 crops."""
    model.eval()
    out = []
    for start in range(0, crops.shape[0], batch_size):
        logits = model(images_to_tensor(crops[start : start + batch_size]))
        out.append(logits.argmax(dim=1).numpy())
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def save_classifier(path: Path | str, record: ClassifierRecord):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state": record.model.state_dict()}, path)
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(record.meta(), indent=2, sort_keys=True) + "\n")


def load_classifier(path: Path | str) -> ClassifierRecord:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    model = RegionClassifier(meta["task"], meta["num_classes"])
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model.load_state_dict(payload["state"], strict=True)
    model.eval()
    return ClassifierRecord(
        model=model,
        task=meta["task"],
        held_out_accuracy=meta["held_out_accuracy"],
        num_train=meta["num_train"],
        num_val=meta["num_val"],
        below_target=meta["below_target"],
    )


@dataclass
class ConsistencyResult:
    num_pairs: int
    parse_rate: float
    clean_parse_rate: float
    mean_score: float
    per_kind: dict[str, float]
    per_kind_counts: dict[str, int]
    scores: list[float] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "num_pairs": self.num_pairs,
            "parse_rate": self.parse_rate,
            "clean_parse_rate": self.clean_parse_rate,
            "mean_score": self.mean_score,
            "per_kind": self.per_kind,
            "per_kind_counts": self.per_kind_counts,
        }


def consistency_score(
    images: np.ndarray,
    captions: Sequence[str],
    color_model: RegionClassifier,
    digit_model: RegionClassifier,
) -> ConsistencyResult:
    """Per-slot agreement between caption claims and classifier readings.

    A pair scores passed/parsed over its parsed slots, or 0 when nothing
    parses. Kinds are inferred from the parsed positions; pairs whose
    positions fit no kind land in an "other" bucket.
    """
    if images.shape[0] != len(captions):
        raise ValueError("images and captions disagree on sample count")
    parsed = [parse_caption(c) for c in captions]
    crops, owners = [], []
    for i, p in enumerate(parsed):
        for slot in p.slots:
            crops.append(crop_region(images[i], slot.position))
            owners.append((i, slot))
    if crops:
        stack = np.stack(crops)
        color_pred = classify(color_model, stack)
        digit_pred = classify(digit_model, stack)
    else:
        color_pred = digit_pred = np.zeros(0, dtype=np.int64)

    passed = np.zeros(len(captions))
    counts = np.zeros(len(captions))
    for j, (i, slot) in enumerate(owners):
        counts[i] += 1
        ok = color_pred[j] == _COLOR_INDEX[slot.color] and digit_pred[j] == slot.digit
        passed[i] += float(ok)
    scores = np.where(counts > 0, passed / np.maximum(counts, 1), 0.0)

    kind_sums: dict[str, float] = {}
    kind_counts: dict[str, int] = {}
    for i, p in enumerate(parsed):
        kind = infer_kind(p.slots) if p.slots else None
        name = kind.value if kind is not None else ("unparsed" if not p.slots else "other")
        kind_sums[name] = kind_sums.get(name, 0.0) + scores[i]
        kind_counts[name] = kind_counts.get(name, 0) + 1
    per_kind = {k: kind_sums[k] / kind_counts[k] for k in sorted(kind_sums)}

    with_slots = sum(1 for p in parsed if p.slots)
    clean = sum(1 for p in parsed if p.slots and p.is_clean)
    return ConsistencyResult(
        num_pairs=len(captions),
        parse_rate=with_slots / len(captions) if captions else 0.0,
        clean_parse_rate=clean / len(captions) if captions else 0.0,
        mean_score=float(scores.mean()) if len(captions) else 0.0,
        per_kind=per_kind,
        per_kind_counts={k: kind_counts[k] for k in sorted(kind_counts)},
        scores=[float(s) for s in scores],
    )


@dataclass
class AlignmentResult:
    num_samples: int
    per_cell: dict[str, float]
    per_cell_counts: dict[str, int]

    @staticmethod
    def cell_key(kind: PairKind, degree: int) -> str:
        return f"{kind.value}/degree{degree}"

    def score(self, kind: PairKind, degree: int) -> float:
        return self.per_cell[self.cell_key(kind, degree)]

    def to_dict(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "per_cell": self.per_cell,
            "per_cell_counts": self.per_cell_counts,
        }


def _slot_map(slots: Sequence[Slot]) -> dict[Position, Slot]:
    return {s.position: s for s in slots}


def alignment_accuracy(
    reconstruct: Callable[[np.ndarray, list[str]], list[str]],
    images: np.ndarray,
    rows: Sequence[dict],
) -> AlignmentResult:
    """Slot match rate between reconstructed text and the input caption.

    ``reconstruct`` maps (images, captions) to decoded captions; the rows
    come from a degree dataset and carry kind, degree, and the corrupted
    slots. An unparseable reconstruction contributes zero matches.
    """
    captions = [row["caption"] for row in rows]
    decoded = reconstruct(images, list(captions))
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for row, out in zip(rows, decoded):
        kind = PairKind(row["kind"])
        input_slots = slots_from_json(row["slots"])
        recon_map = _slot_map(parse_caption(out).slots)
        matched = 0
        for slot in input_slots:
            got = recon_map.get(slot.position)
            if got is not None and got.color is slot.color and got.digit == slot.digit:
                matched += 1
        key = AlignmentResult.cell_key(kind, int(row["degree"]))
        sums[key] = sums.get(key, 0.0) + matched / kind.slot_count
        counts[key] = counts.get(key, 0) + 1
    per_cell = {k: sums[k] / counts[k] for k in sorted(sums)}
    return AlignmentResult(
        num_samples=len(rows),
        per_cell=per_cell,
        per_cell_counts={k: counts[k] for k in sorted(counts)},
    )


def identity_reconstruct(images: np.ndarray, captions: list[str]) -> list[str]:
    """Control model for alignment: echoes the input caption unchanged."""
    return list(captions)


@torch.no_grad()
def roundtrip_fidelity(
    model,
    vocab: Vocabulary,
    images: np.ndarray,
    captions: Sequence[str],
    rows: Sequence[dict],
    batch_size: int = 256,
) -> dict:
    """Encode/decode fidelity on training pairs.

    Reports image MSE in normalized space, per-slot (position, color, digit)
    recovery of the decoded caption against manifest ground truth, and the
    exact-caption match rate.
    """
    model.eval()
    sq_err = 0.0
    n_px = 0
    decoded: list[str] = []
    tokens = torch.from_numpy(tokenize_all(vocab, list(captions), model.config.text_length))
    if model.text_output == "embedding":
        table = model.word_embedding.weight.detach().numpy()
    for start in range(0, images.shape[0], batch_size):
        stop = start + batch_size
        x = images_to_tensor(images[start:stop])
        seq = model.encode_to_indices(x, tokens[start:stop])
        img_rec, text = model.decode_from_indices(seq)
        sq_err += float(((img_rec - x) ** 2).sum())
        n_px += x.numel()
        if model.text_output == "ids":
            decoded.extend(detokenize(vocab, row.numpy()) for row in text)
        else:
            decoded.extend(nearest_word_decode(vocab, table, row.numpy()) for row in text)

    matched = 0
    total = 0
    exact = 0
    for row, out, caption in zip(rows, decoded, captions):
        true_slots = slots_from_json(row["slots"])
        recon_map = _slot_map(parse_caption(out).slots)
        total += len(true_slots)
        for slot in true_slots:
            got = recon_map.get(slot.position)
            if got is not None and got.color is slot.color and got.digit == slot.digit:
                matched += 1
        exact += int(out == caption)
    return {
        "image_mse": sq_err / max(n_px, 1),
        "slot_accuracy": matched / max(total, 1),
        "caption_exact": exact / max(len(decoded), 1),
    }
