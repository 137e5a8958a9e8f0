"""Autoregressive prior over quantized pair sequences.

A compact decoder-only Transformer trained with teacher forcing. The token
vocabulary is the codec's content vocabulary plus one BOS symbol; BOS is
never a valid output, and sampling can additionally restrict each position
to the id range the codec assigns to it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class PriorConfig:
    content_vocab: int
    seq_len: int
    layers: int = 4
    heads: int = 4
    dim: int = 256
    dropout: float = 0.0

    def __post_init__(self):
        if self.content_vocab < 1 or self.seq_len < 1:
            raise ValueError("content_vocab and seq_len must be positive")
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")

    @property
    def vocab_size(self) -> int:
        return self.content_vocab + 1

    @property
    def bos_id(self) -> int:
        return self.content_vocab

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def paper_scale(cls, content_vocab: int, seq_len: int) -> "PriorConfig":
        return cls(content_vocab=content_vocab, seq_len=seq_len, layers=8, heads=8, dim=512)


class SequencePrior(nn.Module):
    """Next-token model over index sequences, conditioned only on a BOS start."""

    def __init__(self, config: PriorConfig):
        super().__init__()
        self.config = config
        d = config.dim
        self.token_embedding = nn.Embedding(config.vocab_size, d)
        self.position_embedding = nn.Parameter(torch.zeros(config.seq_len, d))
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=config.heads,
            dim_feedforward=4 * d,
            dropout=config.dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(
            layer, num_layers=config.layers, enable_nested_tensor=False
        )
        self.final_norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, config.vocab_size)
        self._init_weights()

    def _init_weights(self):
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.normal_(module.weight, mean=0.0, std=0.02)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Embedding):
                nn.init.normal_(module.weight, mean=0.0, std=0.02)
        with torch.no_grad():
            self.position_embedding.normal_(mean=0.0, std=0.02)

    def logits(self, inputs: torch.Tensor) -> torch.Tensor:
        """Causal logits for a batch of shifted inputs, shape (B, L, vocab)."""
        if inputs.dim() != 2 or inputs.size(1) > self.config.seq_len:
            raise ValueError(
                f"inputs must be (B, <={self.config.seq_len}), got {tuple(inputs.shape)}"
            )
        length = inputs.size(1)
        x = self.token_embedding(inputs) + self.position_embedding[:length]
        mask = nn.Transformer.generate_square_subsequent_mask(length, device=inputs.device)
        x = self.blocks(x, mask=mask, is_causal=True)
        return self.head(self.final_norm(x))

    def nll(self, seq: torch.Tensor) -> torch.Tensor:
        """Mean negative log likelihood of full sequences, in nats per token."""
        if seq.size(1) != self.config.seq_len:
            raise ValueError(f"expected sequences of length {self.config.seq_len}")
        bos = torch.full((seq.size(0), 1), self.config.bos_id, dtype=seq.dtype, device=seq.device)
        inputs = torch.cat([bos, seq[:, :-1]], dim=1)
        logits = self.logits(inputs)
        return F.cross_entropy(logits.reshape(-1, self.config.vocab_size), seq.reshape(-1))

    @torch.no_grad()
    def sample(
        self,
        num_samples: int,
        temperature: float = 1.0,
        top_k: int | None = None,
        seed: int | None = None,
        position_ranges: list[tuple[int, int]] | None = None,
        device: torch.device | str = "cpu",
    ) -> torch.Tensor:
        """Draw complete sequences; BOS is masked out at every position.

        ``position_ranges`` optionally pins each output position to a half
        open id interval, matching the block layout of composed codecs.
        ``temperature <= 0`` selects greedy decoding.
        """
        cfg = self.config
        if position_ranges is not None and len(position_ranges) != cfg.seq_len:
            raise ValueError("position_ranges must cover every sequence position")
        generator = None
        if seed is not None:
            generator = torch.Generator(device=device)
            generator.manual_seed(seed)
        was_training = self.training
        self.eval()
        try:
            tokens = torch.full(
                (num_samples, 1), cfg.bos_id, dtype=torch.long, device=device
            )
            for pos in range(cfg.seq_len):
                logits = self.logits(tokens[:, -cfg.seq_len :])[:, -1, :]
                logits[:, cfg.bos_id] = float("-inf")
                if position_ranges is not None:
                    lo, hi = position_ranges[pos]
                    logits[:, :lo] = float("-inf")
                    logits[:, hi : cfg.content_vocab] = float("-inf")
                if temperature <= 0:
                    nxt = logits.argmax(dim=-1, keepdim=True)
                else:
                    logits = logits / temperature
                    if top_k is not None and top_k < cfg.vocab_size:
                        kth = torch.topk(logits, top_k, dim=-1).values[:, -1:]
                        logits = logits.masked_fill(logits < kth, float("-inf"))
                    probs = F.softmax(logits, dim=-1)
                    nxt = torch.multinomial(probs, 1, generator=generator)
                tokens = torch.cat([tokens, nxt], dim=1)
            return tokens[:, 1:]
        finally:
            self.train(was_training)


def initial_nll_reference(vocab_size: int) -> float:
    """NLL of a uniform predictive distribution, in nats."""
    return math.log(vocab_size)
