"""Glue between stored datasets, codec tensors, and plain strings."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .dataset import load_images, read_manifest
from .stage1 import PairCodec
from .textcodec import Vocabulary, detokenize, nearest_word_decode, tokenize_all
from .training import images_to_tensor, tensor_to_images


def load_pairs(data_dir: Path | str) -> tuple[np.ndarray, list[str], list[dict]]:
    """Read a generated dataset directory into memory.

    Returns uint8 images stacked (N, 64, 64, 3), captions, and the raw
    manifest rows for anything else a caller needs (kind, slots, seeds).
    """
    data_dir = Path(data_dir)
    rows = read_manifest(data_dir)
    images = load_images(data_dir, rows)
    captions = [row["caption"] for row in rows]
    return images, captions, rows


class PairPipeline:
    """Runs a codec on uint8 images and caption strings in batches."""

    def __init__(self, model: PairCodec, vocab: Vocabulary, batch_size: int = 256):
        self.model = model
        self.vocab = vocab
        self.batch_size = batch_size

    def tokens(self, captions: list[str]) -> torch.Tensor:
        length = self.model.config.text_length
        return torch.from_numpy(tokenize_all(self.vocab, captions, length))

    @torch.no_grad()
    def encode(self, images_u8: np.ndarray, captions: list[str]) -> torch.Tensor:
        self.model.eval()
        tokens = self.tokens(captions)
        out = []
        for start in range(0, images_u8.shape[0], self.batch_size):
            stop = start + self.batch_size
            imgs = images_to_tensor(images_u8[start:stop])
            out.append(self.model.encode_to_indices(imgs, tokens[start:stop]))
        return torch.cat(out, dim=0)

    @torch.no_grad()
    def decode(self, indices: torch.Tensor) -> tuple[np.ndarray, list[str]]:
        """Index sequences back to uint8 images and caption strings."""
        self.model.eval()
        images = []
        captions: list[str] = []
        for start in range(0, indices.shape[0], self.batch_size):
            img, text = self.model.decode_from_indices(indices[start : start + self.batch_size])
            images.append(tensor_to_images(img))
            captions.extend(self._text_to_captions(text))
        return np.concatenate(images, axis=0), captions

    def _text_to_captions(self, text: torch.Tensor) -> list[str]:
        if self.model.text_output == "ids":
            return [detokenize(self.vocab, row.numpy()) for row in text]
        table = self.model.word_embedding.weight.detach().numpy()
        return [nearest_word_decode(self.vocab, table, row.numpy()) for row in text]

    def roundtrip_captions(self, images_u8: np.ndarray, captions: list[str]) -> list[str]:
        """Captions after a full encode/decode pass, for alignment checks."""
        _, decoded = self.decode(self.encode(images_u8, captions))
        return decoded

    def roundtrip(self, images_u8: np.ndarray, captions: list[str]):
        return self.decode(self.encode(images_u8, captions))
