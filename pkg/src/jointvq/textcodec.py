"""Word-level text codec: vocabulary, fixed-length token ids, nearest-word decode.

Text enters the models as a 64x128 block of word embeddings and is
reconstructed in embedding space; discretization back to words is a
nearest-row lookup against the (trained) embedding table.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

TEXT_LENGTH = 64
EMBED_DIM = 128
PAD_ID = 0
PAD_WORD = "<pad>"


class OovError(KeyError):
    """Word not present in the vocabulary."""


class CaptionLengthError(ValueError):
    """Caption longer than the fixed token length."""


@dataclass
class Vocabulary:
    words: list[str]

    def __post_init__(self):
        if not self.words or self.words[0] != PAD_WORD:
            raise ValueError("vocabulary must reserve id 0 for the pad token")
        self._ids = {w: i for i, w in enumerate(self.words)}
        if len(self._ids) != len(self.words):
            raise ValueError("vocabulary words must be unique")

    @classmethod
    def build(cls, captions: Iterable[str]) -> "Vocabulary":
        """Assign ids in order of first occurrence across the caption stream."""
        words = [PAD_WORD]
        seen = {PAD_WORD}
        for caption in captions:
            for w in caption.split():
                if w not in seen:
                    seen.add(w)
                    words.append(w)
        return cls(words)

    @property
    def size(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise OovError(f"word not in vocabulary: {word!r}") from None

    def word_of(self, idx: int) -> str:
        return self.words[idx]

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self._ids, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path) as f:
            mapping = json.load(f)
        words = [None] * len(mapping)
        for w, i in mapping.items():
            words[i] = w
        return cls(words)

    def content_hash(self) -> str:
        blob = json.dumps(self.words, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def tokenize(vocab: Vocabulary, caption: str, length: int = TEXT_LENGTH) -> np.ndarray:
    """Whitespace-split, map to ids, right-pad to ``length``."""
    words = caption.split()
    if len(words) > length:
        raise CaptionLengthError(f"caption has {len(words)} words, max {length}")
    ids = np.full(length, PAD_ID, dtype=np.int64)
    for i, w in enumerate(words):
        ids[i] = vocab.id_of(w)
    return ids


def detokenize(vocab: Vocabulary, ids) -> str:
    """Ids back to text; trailing pads are stripped, interior ones are kept."""
    ids = np.asarray(ids)
    end = len(ids)
    while end > 0 and ids[end - 1] == PAD_ID:
        end -= 1
    return " ".join(vocab.word_of(int(i)) for i in ids[:end])


def embed(table: np.ndarray, ids) -> np.ndarray:
    return np.asarray(table)[np.asarray(ids)]


def nearest_word_decode(vocab: Vocabulary, table, reconstruction) -> str:
    """Map each reconstructed row to the nearest embedding row's word.

    Euclidean distance; exact ties resolve to the lowest word id (argmin
    returns the first minimum). Trailing pad rows are stripped.
    """
    t = np.asarray(table, dtype=np.float64)
    r = np.asarray(reconstruction, dtype=np.float64)
    d2 = (r * r).sum(1)[:, None] - 2.0 * r @ t.T + (t * t).sum(1)[None, :]
    ids = d2.argmin(axis=1)
    return detokenize(vocab, ids)


def vocab_from_manifest_rows(rows: list[dict]) -> Vocabulary:
    return Vocabulary.build(row["caption"] for row in rows)


def tokenize_all(vocab: Vocabulary, captions: list[str], length: int = TEXT_LENGTH) -> np.ndarray:
    out = np.empty((len(captions), length), dtype=np.int64)
    for i, c in enumerate(captions):
        out[i] = tokenize(vocab, c, length)
    return out
