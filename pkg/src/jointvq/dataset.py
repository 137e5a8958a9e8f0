"""Captioned-digit scene synthesis and dataset building.

Images are 64x64 RGB: each filled slot places one recolored 28x28 digit glyph
centered in its 32x32 quadrant (or in the full canvas for center/single
pairs); everything else stays black. Generation is deterministic in the
master seed and shardable because every sample derives its own seed stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .captions import (
    CORNERS,
    Color,
    PairKind,
    Position,
    Slot,
    caption_from_slots,
)
from .glyphs import GlyphSource, load_glyphs, synthetic_glyphs

IMAGE_SIZE = 64
QUADRANT = 32

KIND_ORDER = [PairKind.SINGLE, PairKind.QUAD1, PairKind.QUAD2, PairKind.QUAD3, PairKind.QUAD4]

# Top-left pixel of the 32x32 region for each corner position.
_QUADRANT_ORIGIN = {
    Position.TOP_LEFT: (0, 0),
    Position.TOP_RIGHT: (0, 32),
    Position.BOTTOM_LEFT: (32, 0),
    Position.BOTTOM_RIGHT: (32, 32),
}


@dataclass
class PairSample:
    image: np.ndarray  # (64, 64, 3) uint8
    caption: str
    slots: list[Slot]
    kind: PairKind
    sample_id: int


@dataclass
class DegreeSample:
    base: PairSample
    degree: int
    corrupted_caption: str
    corrupted_slots: list[Slot]


@dataclass
class DatasetConfig:
    kind_counts: dict[str, int] = field(
        default_factory=lambda: {k.value: 12_000 for k in KIND_ORDER}
    )
    seed: int = 0
    glyph_source: str = "synthetic"  # "synthetic" | "mnist_idx"
    glyph_per_class: int = 64
    mnist_images: str | None = None
    mnist_labels: str | None = None

    @classmethod
    def full_scale(cls, seed: int = 0, **kw) -> "DatasetConfig":
        return cls(kind_counts={k.value: 120_000 for k in KIND_ORDER}, seed=seed, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def _paste_glyph(canvas: np.ndarray, glyph: np.ndarray, color: Color, origin: tuple[int, int], box: int):
    gh, gw = glyph.shape
    r0 = origin[0] + (box - gh) // 2
    c0 = origin[1] + (box - gw) // 2
    tinted = (glyph.astype(np.uint16)[:, :, None] * np.array(color.rgb, dtype=np.uint16)) // 255
    canvas[r0 : r0 + gh, c0 : c0 + gw] = tinted.astype(np.uint8)


def _render_with_rng(glyphs: GlyphSource, kind: PairKind, rng: np.random.Generator, sample_id: int = 0) -> PairSample:
    if kind.uses_center:
        positions = [Position.CENTER]
    else:
        idx = rng.choice(4, size=kind.slot_count, replace=False)
        positions = [CORNERS[i] for i in idx]

    colors = list(Color)
    slots = []
    canvas = np.zeros((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.uint8)
    for pos in positions:
        color = colors[rng.integers(len(colors))]
        digit = int(rng.integers(10))
        slots.append(Slot(pos, color, digit))
        glyph = glyphs.sample(digit, rng)
        if pos is Position.CENTER:
            _paste_glyph(canvas, glyph, color, (0, 0), IMAGE_SIZE)
        else:
            _paste_glyph(canvas, glyph, color, _QUADRANT_ORIGIN[pos], QUADRANT)

    return PairSample(
        image=canvas,
        caption=caption_from_slots(slots),
        slots=slots,
        kind=kind,
        sample_id=sample_id,
    )


def render_pair(glyphs: GlyphSource, kind: PairKind, rng_seed: int) -> PairSample:
    """Render one pair deterministically from a seed."""
    return _render_with_rng(glyphs, kind, np.random.default_rng(rng_seed))


def corrupt_to_degree(sample: PairSample, degree: int, rng_seed) -> DegreeSample:
    """Corrupt all but ``degree`` slots of the caption; the image is untouched.

    A corrupted slot gets a different color AND a different digit; positions
    never change. ``degree == len(slots)`` returns the caption unchanged.
    """
    n = len(sample.slots)
    if not 0 <= degree <= n:
        raise ValueError(f"degree {degree} out of range [0, {n}]")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    to_corrupt = set(rng.choice(n, size=n - degree, replace=False).tolist())

    colors = list(Color)
    corrupted = []
    for i, slot in enumerate(sample.slots):
        if i in to_corrupt:
            other_colors = [c for c in colors if c is not slot.color]
            other_digits = [d for d in range(10) if d != slot.digit]
            corrupted.append(
                Slot(
                    slot.position,
                    other_colors[rng.integers(3)],
                    other_digits[rng.integers(9)],
                )
            )
        else:
            corrupted.append(slot)

    return DegreeSample(
        base=sample,
        degree=degree,
        corrupted_caption=caption_from_slots(corrupted),
        corrupted_slots=corrupted,
    )


def _slots_json(slots: list[Slot]) -> list[dict]:
    return [
        {"position": s.position.value, "color": s.color.value, "digit": s.digit}
        for s in slots
    ]


def slots_from_json(raw: list[dict]) -> list[Slot]:
    return [Slot(Position(r["position"]), Color(r["color"]), int(r["digit"])) for r in raw]


def _dump_row(row: dict) -> str:
    return json.dumps(row, sort_keys=True, separators=(",", ":"))


def open_glyph_source(config: DatasetConfig) -> GlyphSource:
    if config.glyph_source == "synthetic":
        return synthetic_glyphs(per_class=config.glyph_per_class, seed=config.seed)
    if config.glyph_source == "mnist_idx":
        if not (config.mnist_images and config.mnist_labels):
            raise ValueError("mnist_idx glyph source needs mnist_images and mnist_labels paths")
        return load_glyphs(config.mnist_images, config.mnist_labels)
    raise ValueError(f"unknown glyph source {config.glyph_source!r}")


def sample_seed(master_seed: int, kind_index: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, kind_index, i]))


def build_dataset(config: DatasetConfig, out_dir) -> Path:
    """Write images/, manifest.jsonl and genconfig.json for ``config``."""
    for kind_name, count in config.kind_counts.items():
        PairKind(kind_name)
        if count <= 0:
            raise ValueError(f"count for {kind_name} must be positive, got {count}")

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    glyphs = open_glyph_source(config)

    rows = []
    sample_id = 0
    for kind_index, kind in enumerate(KIND_ORDER):
        count = config.kind_counts.get(kind.value, 0)
        for i in range(count):
            rng = sample_seed(config.seed, kind_index, i)
            pair = _render_with_rng(glyphs, kind, rng, sample_id=sample_id)
            rel = f"images/{sample_id:06d}.png"
            Image.fromarray(pair.image).save(out / rel)
            rows.append(
                {
                    "sample_id": sample_id,
                    "kind": kind.value,
                    "caption": pair.caption,
                    "slots": _slots_json(pair.slots),
                    "image": rel,
                }
            )
            sample_id += 1

    with open(out / "manifest.jsonl", "w") as f:
        for row in rows:
            f.write(_dump_row(row) + "\n")
    with open(out / "genconfig.json", "w") as f:
        json.dump({"schema_version": 1, "config": asdict(config)}, f, indent=2, sort_keys=True)
        f.write("\n")
    return out


def build_degree_dataset(data_dir, out_dir, seed: int = 0, per_kind: int | None = None) -> Path:
    """Derive the degree-corrupted caption set from an existing dataset.

    For each selected base pair, emits one row per degree 0..N. Image paths
    point back into the base dataset (images are never modified).
    """
    data_dir = Path(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_rows = read_manifest(data_dir)

    picked: list[dict] = []
    for kind in KIND_ORDER:
        kind_rows = [r for r in base_rows if r["kind"] == kind.value]
        if per_kind is not None:
            kind_rows = kind_rows[:per_kind]
        picked.extend(kind_rows)

    degree_rows = []
    for row in picked:
        slots = slots_from_json(row["slots"])
        sample = PairSample(
            image=None, caption=row["caption"], slots=slots,
            kind=PairKind(row["kind"]), sample_id=row["sample_id"],
        )
        n = len(slots)
        for degree in range(n + 1):
            rng = np.random.default_rng(np.random.SeedSequence([seed, row["sample_id"], degree]))
            ds = corrupt_to_degree(sample, degree, rng)
            degree_rows.append(
                {
                    "sample_id": row["sample_id"],
                    "kind": row["kind"],
                    "degree": degree,
                    "caption": ds.corrupted_caption,
                    "slots": _slots_json(ds.corrupted_slots),
                    "base_caption": row["caption"],
                    "base_slots": row["slots"],
                    "image": str((data_dir / row["image"]).resolve()),
                }
            )

    with open(out / "degree_manifest.jsonl", "w") as f:
        for row in degree_rows:
            f.write(_dump_row(row) + "\n")
    with open(out / "genconfig.json", "w") as f:
        json.dump(
            {"schema_version": 1, "base_dataset": str(data_dir.resolve()), "seed": seed, "per_kind": per_kind},
            f, indent=2, sort_keys=True,
        )
        f.write("\n")
    return out


def read_manifest(data_dir) -> list[dict]:
    with open(Path(data_dir) / "manifest.jsonl") as f:
        return [json.loads(line) for line in f if line.strip()]


def read_degree_manifest(degree_dir) -> list[dict]:
    with open(Path(degree_dir) / "degree_manifest.jsonl") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_image(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def load_images(data_dir, rows: list[dict]) -> np.ndarray:
    """Stack manifest rows' PNGs into one (N, 64, 64, 3) uint8 array."""
    data_dir = Path(data_dir)
    out = np.empty((len(rows), IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.uint8)
    for i, row in enumerate(rows):
        p = Path(row["image"])
        out[i] = load_image(p if p.is_absolute() else data_dir / p)
    return out
