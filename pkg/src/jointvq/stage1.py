"""Image-text autoencoder with a shared quantized latent sequence.

The flagship model encodes both modalities, fuses them with a Transformer
encoder, drops the text-aligned positions, quantizes the remaining 64
positions against a shared codebook, and reconstructs both modalities from
the quantized sequence. Text reconstruction lives in word-embedding space.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import torch
import torch.nn.functional as F
from torch import nn

from .quantize import VectorQuantizer


@dataclass
class Stage1Config:
    vocab_size: int
    image_size: int = 64
    image_channels: int = 3
    enc_channels: tuple = (64, 128, 128)  # three stride-2 stages -> factor 8
    text_length: int = 64
    embed_dim: int = 128
    latent_dim: int = 128
    text_latent_len: int = 8
    codebook_size: int = 256
    fusion_layers: int = 2
    fusion_heads: int = 2
    beta: float = 0.25

    def __post_init__(self):
        if isinstance(self.enc_channels, list):
            self.enc_channels = tuple(self.enc_channels)
        if len(self.enc_channels) != 3:
            raise ValueError("enc_channels must have three stride-2 stages")
        if self.enc_channels[-1] != self.latent_dim:
            raise ValueError("last encoder stage must emit latent_dim channels")
        if self.image_size % 8 or self.text_length % 8:
            raise ValueError("image size and text length must be divisible by 8")

    @property
    def latent_grid(self) -> int:
        return self.image_size // 8

    @property
    def image_tokens(self) -> int:
        return self.latent_grid * self.latent_grid

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enc_channels"] = list(self.enc_channels)
        return d


def _image_encoder(cfg: Stage1Config) -> nn.Sequential:
    c1, c2, c3 = cfg.enc_channels
    return nn.Sequential(
        nn.Conv2d(cfg.image_channels, c1, 4, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(c1, c2, 4, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(c2, c3, 4, stride=2, padding=1),
    )


def _image_decoder(cfg: Stage1Config) -> nn.Sequential:
    c1, c2, _ = cfg.enc_channels
    return nn.Sequential(
        nn.ConvTranspose2d(cfg.latent_dim, c2, 4, stride=2, padding=1),
        nn.ReLU(),
        nn.ConvTranspose2d(c2, c1, 4, stride=2, padding=1),
        nn.ReLU(),
        nn.ConvTranspose2d(c1, cfg.image_channels, 4, stride=2, padding=1),
    )


def _fusion_encoder(cfg: Stage1Config) -> nn.TransformerEncoder:
    # Pre-norm with no final LayerNorm, so the fused stream keeps a natural
    # scale that the quantizer projection is standardized against once at
    # initialization (see standardize_projection).
    layer = nn.TransformerEncoderLayer(
        d_model=cfg.latent_dim,
        nhead=cfg.fusion_heads,
        dim_feedforward=4 * cfg.latent_dim,
        dropout=0.0,
        batch_first=True,
        norm_first=True,
    )
    return nn.TransformerEncoder(layer, num_layers=cfg.fusion_layers, enable_nested_tensor=False)


class ConvTextCoder(nn.Module):
    """1D conv stack compressing 64 word embeddings to 8 latents (and back)."""

    def __init__(self, cfg: Stage1Config):
        super().__init__()
        self.encoded_len = cfg.text_latent_len
        d, h = cfg.embed_dim, cfg.latent_dim
        self.encoder = nn.Sequential(
            nn.Conv1d(d, h, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv1d(h, h, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv1d(h, h, 4, stride=2, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.ConvTranspose1d(h, h, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.ConvTranspose1d(h, h, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.ConvTranspose1d(h, d, 4, stride=2, padding=1),
        )

    def encode(self, embedded: torch.Tensor) -> torch.Tensor:
        # (B, w, d) -> (B, w', D)
        return self.encoder(embedded.transpose(1, 2)).transpose(1, 2)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        # (B, w', D) -> (B, w, d)
        return self.decoder(latents.transpose(1, 2)).transpose(1, 2)


class TransformerTextCoder(nn.Module):
    """Length-preserving Transformer text branch (no compression)."""

    def __init__(self, cfg: Stage1Config, layers: int = 2, heads: int = 2):
        super().__init__()
        self.encoded_len = cfg.text_length
        self.pos = nn.Parameter(torch.zeros(cfg.text_length, cfg.embed_dim))
        nn.init.normal_(self.pos, std=0.02)

        def block():
            layer = nn.TransformerEncoderLayer(
                d_model=cfg.embed_dim, nhead=heads,
                dim_feedforward=4 * cfg.embed_dim, dropout=0.0, batch_first=True,
            )
            return nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)

        self.encoder = block()
        self.decoder = block()

    def encode(self, embedded: torch.Tensor) -> torch.Tensor:
        return self.encoder(embedded + self.pos)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return self.decoder(latents)


@torch.no_grad()
def standardize_projection(proj: nn.Linear, latents: torch.Tensor) -> None:
    """Rescale ``proj`` so its outputs on a reference batch are zero mean and
    unit spread.

    This heads off two quantizer failure modes. A fresh projection hands every
    position one large shared mean direction, which wins every nearest-row
    lookup and funnels the whole batch onto a single codebook row; centering
    removes it. And the commitment term can only discipline the latent cloud
    while its magnitude is comparable to the reconstruction losses, so at a
    much smaller spread the cloud drifts wherever reconstruction pushes it and
    the slow-moving codebook rows never catch up. Starting at unit spread puts
    the commitment force on the right scale from the first step. This is one
    reparameterization of the projection's weights at initialization; nothing
    is constrained afterward.
    """
    flat = latents.reshape(-1, latents.shape[-1])
    out = flat @ proj.weight.t() + proj.bias
    mu = out.mean(0)
    scale = float((out - mu).std())
    proj.weight.div_(scale)
    proj.bias.sub_(mu).div_(scale)


class PairCodec(nn.Module):
    """Shared contract: image-text pair <-> fixed-length index sequence.

    ``text_output`` says whether decode returns embedding-space text (to be
    read out by nearest-word lookup) or raw token ids.
    """

    kind: str = ""
    text_output: str = "embedding"

    @property
    def seq_len(self) -> int:
        raise NotImplementedError

    @property
    def content_vocab(self) -> int:
        raise NotImplementedError

    def position_ranges(self) -> list[tuple[int, int]]:
        """Valid [lo, hi) id range at each sequence position."""
        raise NotImplementedError

    def compute_loss(self, images: torch.Tensor, tokens: torch.Tensor):
        raise NotImplementedError

    def encode_to_indices(self, images: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def decode_from_indices(self, seq: torch.Tensor):
        raise NotImplementedError

    @torch.no_grad()
    def calibrate(self, images: torch.Tensor, tokens: torch.Tensor) -> None:
        """Standardize the quantizer projection on a reference batch.

        Called once before training; a loaded checkpoint carries the result,
        and repeating the call is harmless because standardized outputs are
        already centered at unit spread.
        """

    def _check_seq(self, seq: torch.Tensor) -> None:
        if seq.ndim != 2 or seq.shape[1] != self.seq_len:
            raise ValueError(f"expected (B, {self.seq_len}) index sequences, got {tuple(seq.shape)}")
        for pos, (lo, hi) in enumerate(self.position_ranges()):
            col = seq[:, pos]
            if col.numel() and (col.min() < lo or col.max() >= hi):
                raise IndexError(f"index out of range [{lo}, {hi}) at position {pos}")


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return F.mse_loss(a, b)


def vq_terms(joint: torch.Tensor, selected: torch.Tensor, beta: float):
    """Codebook term updates only the codebook; the beta-weighted commitment
    term updates only whatever produced ``joint``."""
    codebook_loss = mse(selected, joint.detach())
    commit_loss = mse(joint, selected.detach())
    return codebook_loss, beta * commit_loss


class JointVQ(PairCodec):
    """Fused image-text autoencoder over one shared codebook.

    ``text_coder="conv"`` compresses text 64 -> 8 before fusion (the default);
    ``"transformer"`` keeps all 64 text positions (the no-compression ablation).
    Either way only the image-aligned positions survive to quantization, so
    the unified sequence length is always 64.
    """

    def __init__(self, config: Stage1Config, text_coder: str = "conv"):
        super().__init__()
        self.config = config
        self.kind = "joint" if text_coder == "conv" else "no-text-compression"
        self.word_embedding = nn.Embedding(config.vocab_size, config.embed_dim)
        self.image_encoder = _image_encoder(config)
        self.image_decoder = _image_decoder(config)
        if text_coder == "conv":
            self.text_coder = ConvTextCoder(config)
        elif text_coder == "transformer":
            self.text_coder = TransformerTextCoder(config)
        else:
            raise ValueError(f"unknown text coder {text_coder!r}")

        fused_len = config.image_tokens + self.text_coder.encoded_len
        self.fusion = _fusion_encoder(config)
        self.fusion_pos = nn.Parameter(torch.zeros(fused_len, config.latent_dim))
        nn.init.normal_(self.fusion_pos, std=0.02)
        self.pre_quant = nn.Linear(config.latent_dim, config.latent_dim)

        self.quantizer = VectorQuantizer(config.codebook_size, config.latent_dim)
        # Linear maps over the sequence axis resize the quantized sequence to
        # each decoder's expected input length.
        self.image_spatial = nn.Linear(config.image_tokens, config.image_tokens)
        self.text_spatial = nn.Linear(config.image_tokens, self.text_coder.encoded_len)

    @property
    def seq_len(self) -> int:
        return self.config.image_tokens

    @property
    def content_vocab(self) -> int:
        return self.config.codebook_size

    def position_ranges(self) -> list[tuple[int, int]]:
        return [(0, self.config.codebook_size)] * self.seq_len

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, 64, 64) in [-1, 1] -> (B, 64, D) row-major latent sequence."""
        grid = self.image_encoder(images)
        return grid.flatten(2).transpose(1, 2)

    def encode_text(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.text_coder.encode(self.word_embedding(tokens))

    def fuse_and_drop(self, image_latents: torch.Tensor, text_latents: torch.Tensor) -> torch.Tensor:
        fused_in = torch.cat([image_latents, text_latents], dim=1) + self.fusion_pos
        fused = self.fusion(fused_in)
        return self.pre_quant(fused[:, : self.seq_len])

    @torch.no_grad()
    def calibrate(self, images: torch.Tensor, tokens: torch.Tensor) -> None:
        image_latents = self.encode_image(images)
        text_latents = self.encode_text(tokens)
        fused_in = torch.cat([image_latents, text_latents], dim=1) + self.fusion_pos
        fused = self.fusion(fused_in)[:, : self.seq_len]
        standardize_projection(self.pre_quant, fused)

    def decode_image(self, quantized: torch.Tensor) -> torch.Tensor:
        g = self.config.latent_grid
        h = self.image_spatial(quantized.transpose(1, 2))  # (B, D, L)
        return self.image_decoder(h.reshape(h.shape[0], self.config.latent_dim, g, g))

    def decode_text(self, quantized: torch.Tensor) -> torch.Tensor:
        h = self.text_spatial(quantized.transpose(1, 2)).transpose(1, 2)
        return self.text_coder.decode(h)

    def forward(self, images: torch.Tensor, tokens: torch.Tensor) -> dict:
        embedded = self.word_embedding(tokens)
        image_latents = self.encode_image(images)
        text_latents = self.text_coder.encode(embedded)
        joint = self.fuse_and_drop(image_latents, text_latents)
        quantized, indices, selected = self.quantizer(joint)
        return {
            "embedded": embedded,
            "joint": joint,
            "indices": indices,
            "quantized": quantized,
            "selected": selected,
            "image_recon": self.decode_image(quantized),
            "text_recon": self.decode_text(quantized),
        }

    def compute_loss(self, images: torch.Tensor, tokens: torch.Tensor):
        out = self.forward(images, tokens)
        recon_img = mse(out["image_recon"], images)
        # The embedded caption is the reconstruction target, not a trainable
        # one: without the detach the word-embedding table can shrink toward
        # zero to satisfy this term, ruining the nearest-word readout.
        recon_txt = mse(out["text_recon"], out["embedded"].detach())
        codebook_loss, commit_loss = vq_terms(out["joint"], out["selected"], self.config.beta)
        total = recon_img + recon_txt + codebook_loss + commit_loss
        terms = {
            "recon_img": recon_img,
            "recon_txt": recon_txt,
            "codebook": codebook_loss,
            "commit": commit_loss,
        }
        return total, terms, out["indices"]

    @torch.no_grad()
    def encode_to_indices(self, images: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        image_latents = self.encode_image(images)
        text_latents = self.encode_text(tokens)
        joint = self.fuse_and_drop(image_latents, text_latents)
        return self.quantizer.assign(joint)

    @torch.no_grad()
    def decode_from_indices(self, seq: torch.Tensor):
        self._check_seq(seq)
        quantized = self.quantizer.lookup(seq)
        images = self.decode_image(quantized).clamp(-1.0, 1.0)
        return images, self.decode_text(quantized)
