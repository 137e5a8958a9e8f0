"""Digit glyph sources: MNIST IDX files or a procedural fallback.

The fallback renders seven-segment style digits so the full pipeline (and CI)
runs without any external download; provenance is recorded either way.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
GLYPH_SIZE = 28


class IdxFormatError(ValueError):
    """IDX file has a bad magic number, header, or truncated payload."""


class GlyphCoverageError(ValueError):
    """Glyph source does not cover all ten digit classes."""


@dataclass
class GlyphSource:
    glyphs: dict[int, np.ndarray]  # digit -> (n, 28, 28) uint8
    provenance: str  # "mnist_idx" | "synthetic_fallback"

    def __post_init__(self):
        missing = [d for d in range(10) if d not in self.glyphs or len(self.glyphs[d]) == 0]
        if missing:
            raise GlyphCoverageError(f"no glyphs for digit classes {missing}")

    @property
    def total(self) -> int:
        return sum(len(g) for g in self.glyphs.values())

    def sample(self, digit: int, rng: np.random.Generator) -> np.ndarray:
        pool = self.glyphs[digit]
        return pool[rng.integers(len(pool))]


def _open(path) -> bytes:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".gz":
        data = gzip.decompress(data)
    return data


def load_glyphs(idx_image_path, idx_label_path) -> GlyphSource:
    """Load digit glyphs from an IDX image/label file pair (optionally .gz)."""
    img_bytes = _open(idx_image_path)
    lbl_bytes = _open(idx_label_path)

    if len(img_bytes) < 16:
        raise IdxFormatError(f"image file too short for IDX header: {idx_image_path}")
    magic, count, rows, cols = struct.unpack(">IIII", img_bytes[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"bad image magic 0x{magic:08x} (want 0x{IDX_IMAGE_MAGIC:08x})")
    if rows != GLYPH_SIZE or cols != GLYPH_SIZE:
        raise IdxFormatError(f"expected {GLYPH_SIZE}x{GLYPH_SIZE} glyphs, got {rows}x{cols}")
    if len(img_bytes) - 16 != count * rows * cols:
        raise IdxFormatError("image payload size does not match header count")

    if len(lbl_bytes) < 8:
        raise IdxFormatError(f"label file too short for IDX header: {idx_label_path}")
    lmagic, lcount = struct.unpack(">II", lbl_bytes[:8])
    if lmagic != IDX_LABEL_MAGIC:
        raise IdxFormatError(f"bad label magic 0x{lmagic:08x} (want 0x{IDX_LABEL_MAGIC:08x})")
    if lcount != count:
        raise IdxFormatError(f"label count {lcount} != image count {count}")
    if len(lbl_bytes) - 8 != lcount:
        raise IdxFormatError("label payload size does not match header count")

    images = np.frombuffer(img_bytes, dtype=np.uint8, offset=16).reshape(count, rows, cols)
    labels = np.frombuffer(lbl_bytes, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"label out of range 0-9: {labels.max()}")

    glyphs = {d: images[labels == d].copy() for d in range(10)}
    return GlyphSource(glyphs=glyphs, provenance="mnist_idx")


def write_idx_files(images: np.ndarray, labels: np.ndarray, image_path, label_path) -> None:
    """Write (n, 28, 28) uint8 glyphs and labels as an IDX file pair."""
    n = len(images)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, GLYPH_SIZE, GLYPH_SIZE))
        f.write(np.ascontiguousarray(images, dtype=np.uint8).tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


# Seven-segment layout: segment name -> present in digit
_SEGMENTS = {
    0: "abcdef",
    1: "bc",
    2: "abged",
    3: "abgcd",
    4: "fgbc",
    5: "afgcd",
    6: "afgecd",
    7: "abc",
    8: "abcdefg",
    9: "abcdfg",
}


def _render_segment_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    canvas = np.zeros((GLYPH_SIZE, GLYPH_SIZE), dtype=np.float32)
    x0 = int(rng.integers(7, 10))
    x1 = int(rng.integers(19, 22))
    y0 = int(rng.integers(4, 7))
    y1 = int(rng.integers(22, 25))
    ym = (y0 + y1) // 2
    t = int(rng.integers(2, 4))
    peak = float(rng.integers(220, 256))

    def hbar(y, xa, xb):
        canvas[max(y - t // 2, 0) : y + (t + 1) // 2, xa : xb + 1] = peak

    def vbar(x, ya, yb):
        canvas[ya : yb + 1, max(x - t // 2, 0) : x + (t + 1) // 2] = peak

    segs = _SEGMENTS[digit]
    if "a" in segs:
        hbar(y0, x0, x1)
    if "g" in segs:
        hbar(ym, x0, x1)
    if "d" in segs:
        hbar(y1, x0, x1)
    if "f" in segs:
        vbar(x0, y0, ym)
    if "b" in segs:
        vbar(x1, y0, ym)
    if "e" in segs:
        vbar(x0, ym, y1)
    if "c" in segs:
        vbar(x1, ym, y1)

    # 3x3 box blur softens bar edges into grayscale, MNIST-like strokes.
    padded = np.pad(canvas, 1)
    blurred = sum(
        padded[dy : dy + GLYPH_SIZE, dx : dx + GLYPH_SIZE]
        for dy in range(3)
        for dx in range(3)
    ) / 9.0
    return np.clip(blurred, 0, 255).astype(np.uint8)


def synthetic_glyphs(per_class: int = 64, seed: int = 0) -> GlyphSource:
    """Procedural seven-segment digit glyphs, ``per_class`` jittered variants each."""
    rng = np.random.default_rng(seed)
    glyphs = {
        d: np.stack([_render_segment_digit(d, rng) for _ in range(per_class)])
        for d in range(10)
    }
    return GlyphSource(glyphs=glyphs, provenance="synthetic_fallback")
