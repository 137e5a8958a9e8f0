"""Baseline pair codecs: same index-sequence interface, no joint fusion.

Three families: a shared codebook with independent branches, fully separate
quantizers, and image-VQ with raw word ids for text. Each composes its
sequence from an image block and a text block; modality order is a sequence
layout concern only and never changes how the branches train.
"""

from __future__ import annotations

import enum

import torch
from torch import nn

from .quantize import VectorQuantizer
from .stage1 import (
    ConvTextCoder,
    JointVQ,
    PairCodec,
    Stage1Config,
    _image_decoder,
    _image_encoder,
    mse,
    standardize_projection,
    vq_terms,
)


class ModelKind(enum.Enum):
    JOINT = "joint"
    SHARED_CODEBOOK_IT = "shared-codebook-it"
    SHARED_CODEBOOK_TI = "shared-codebook-ti"
    SEPARATE_VQ_IT = "separate-vq-it"
    SEPARATE_VQ_TI = "separate-vq-ti"
    IMG_VQ_TEXT_EMBED_IT = "img-vq-text-embed-it"
    IMG_VQ_TEXT_EMBED_TI = "img-vq-text-embed-ti"
    NO_TEXT_COMPRESSION = "no-text-compression"

    @property
    def text_first(self) -> bool:
        return self.value.endswith("-ti")

    @property
    def family(self) -> str:
        v = self.value
        return v[:-3] if v.endswith(("-it", "-ti")) else v


ORDER_FAMILIES = ("shared-codebook", "separate-vq", "img-vq-text-embed")


class ComposedCodec(PairCodec):
    """Index sequence = image block + text block, concatenated per order."""

    text_first: bool = False
    image_len: int = 0
    text_len: int = 0

    @property
    def seq_len(self) -> int:
        return self.image_len + self.text_len

    def _block_ranges(self) -> tuple[tuple[int, int], tuple[int, int]]:
        raise NotImplementedError

    def position_ranges(self) -> list[tuple[int, int]]:
        img_r, txt_r = self._block_ranges()
        img = [img_r] * self.image_len
        txt = [txt_r] * self.text_len
        return txt + img if self.text_first else img + txt

    def _assemble(self, img_block: torch.Tensor, txt_block: torch.Tensor) -> torch.Tensor:
        parts = (txt_block, img_block) if self.text_first else (img_block, txt_block)
        return torch.cat(parts, dim=1)

    def _split(self, seq: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if self.text_first:
            return seq[:, self.text_len :], seq[:, : self.text_len]
        return seq[:, : self.image_len], seq[:, self.image_len :]


class SharedCodebookVQ(ComposedCodec):
    """Image and text branches quantize independently into one codebook."""

    def __init__(self, config: Stage1Config, text_first: bool = False):
        super().__init__()
        self.config = config
        self.text_first = text_first
        self.kind = "shared-codebook-ti" if text_first else "shared-codebook-it"
        self.image_len = config.image_tokens
        self.text_len = config.text_latent_len
        self.word_embedding = nn.Embedding(config.vocab_size, config.embed_dim)
        self.image_encoder = _image_encoder(config)
        self.image_decoder = _image_decoder(config)
        self.text_coder = ConvTextCoder(config)
        self.quantizer = VectorQuantizer(config.codebook_size, config.latent_dim)
        self.pre_quant = nn.Linear(config.latent_dim, config.latent_dim)

    @property
    def content_vocab(self) -> int:
        return self.config.codebook_size

    def _block_ranges(self):
        r = (0, self.config.codebook_size)
        return r, r

    def _raw_latents(self, images, tokens):
        img = self.image_encoder(images).flatten(2).transpose(1, 2)
        txt = self.text_coder.encode(self.word_embedding(tokens))
        return img, txt

    def _latents(self, images, tokens):
        img, txt = self._raw_latents(images, tokens)
        return self.pre_quant(img), self.pre_quant(txt)

    @torch.no_grad()
    def calibrate(self, images, tokens):
        img, txt = self._raw_latents(images, tokens)
        standardize_projection(self.pre_quant, torch.cat([img, txt], dim=1))

    def _decode_blocks(self, img_q: torch.Tensor, txt_q: torch.Tensor):
        g = self.config.latent_grid
        grid = img_q.transpose(1, 2).reshape(-1, self.config.latent_dim, g, g)
        return self.image_decoder(grid), self.text_coder.decode(txt_q)

    def compute_loss(self, images, tokens):
        img_lat, txt_lat = self._latents(images, tokens)
        both = torch.cat([img_lat, txt_lat], dim=1)
        quantized, indices, selected = self.quantizer(both)
        image_recon, text_recon = self._decode_blocks(
            quantized[:, : self.image_len], quantized[:, self.image_len :]
        )
        recon_img = mse(image_recon, images)
        recon_txt = mse(text_recon, self.word_embedding(tokens).detach())
        codebook_loss, commit_loss = vq_terms(both, selected, self.config.beta)
        total = recon_img + recon_txt + codebook_loss + commit_loss
        return total, {
            "recon_img": recon_img,
            "recon_txt": recon_txt,
            "codebook": codebook_loss,
            "commit": commit_loss,
        }, indices

    @torch.no_grad()
    def encode_to_indices(self, images, tokens):
        img_lat, txt_lat = self._latents(images, tokens)
        return self._assemble(self.quantizer.assign(img_lat), self.quantizer.assign(txt_lat))

    @torch.no_grad()
    def decode_from_indices(self, seq):
        self._check_seq(seq)
        img_ids, txt_ids = self._split(seq)
        image_recon, text_recon = self._decode_blocks(
            self.quantizer.lookup(img_ids), self.quantizer.lookup(txt_ids)
        )
        return image_recon.clamp(-1.0, 1.0), text_recon


class SeparateVQ(ComposedCodec):
    """Two independent VQ autoencoders; text ids are offset past image ids."""

    def __init__(self, config: Stage1Config, text_first: bool = False):
        super().__init__()
        self.config = config
        self.text_first = text_first
        self.kind = "separate-vq-ti" if text_first else "separate-vq-it"
        self.image_len = config.image_tokens
        self.text_len = config.text_latent_len
        self.word_embedding = nn.Embedding(config.vocab_size, config.embed_dim)
        self.image_encoder = _image_encoder(config)
        self.image_decoder = _image_decoder(config)
        self.text_coder = ConvTextCoder(config)
        self.image_quantizer = VectorQuantizer(config.codebook_size, config.latent_dim)
        self.text_quantizer = VectorQuantizer(config.codebook_size, config.latent_dim)
        self.image_pre_quant = nn.Linear(config.latent_dim, config.latent_dim)
        self.text_pre_quant = nn.Linear(config.latent_dim, config.latent_dim)

    def _image_latents(self, images):
        raw = self.image_encoder(images).flatten(2).transpose(1, 2)
        return self.image_pre_quant(raw)

    def _text_latents(self, tokens):
        raw = self.text_coder.encode(self.word_embedding(tokens))
        return self.text_pre_quant(raw)

    @torch.no_grad()
    def calibrate(self, images, tokens):
        img_raw = self.image_encoder(images).flatten(2).transpose(1, 2)
        txt_raw = self.text_coder.encode(self.word_embedding(tokens))
        standardize_projection(self.image_pre_quant, img_raw)
        standardize_projection(self.text_pre_quant, txt_raw)

    @property
    def text_offset(self) -> int:
        return self.config.codebook_size

    @property
    def content_vocab(self) -> int:
        return 2 * self.config.codebook_size

    def _block_ranges(self):
        k = self.config.codebook_size
        return (0, k), (k, 2 * k)

    def compute_loss(self, images, tokens):
        img_lat = self._image_latents(images)
        txt_lat = self._text_latents(tokens)
        img_quant, img_idx, img_sel = self.image_quantizer(img_lat)
        txt_quant, txt_idx, txt_sel = self.text_quantizer(txt_lat)

        g = self.config.latent_grid
        grid = img_quant.transpose(1, 2).reshape(-1, self.config.latent_dim, g, g)
        recon_img = mse(self.image_decoder(grid), images)
        text_recon = self.text_coder.decode(txt_quant)
        recon_txt = mse(text_recon, self.word_embedding(tokens).detach())
        cb_i, cm_i = vq_terms(img_lat, img_sel, self.config.beta)
        cb_t, cm_t = vq_terms(txt_lat, txt_sel, self.config.beta)
        codebook_loss = cb_i + cb_t
        commit_loss = cm_i + cm_t
        total = recon_img + recon_txt + codebook_loss + commit_loss
        indices = self._assemble(img_idx, txt_idx + self.text_offset)
        return total, {
            "recon_img": recon_img,
            "recon_txt": recon_txt,
            "codebook": codebook_loss,
            "commit": commit_loss,
        }, indices

    @torch.no_grad()
    def encode_to_indices(self, images, tokens):
        img_ids = self.image_quantizer.assign(self._image_latents(images))
        txt_ids = self.text_quantizer.assign(self._text_latents(tokens)) + self.text_offset
        return self._assemble(img_ids, txt_ids)

    @torch.no_grad()
    def decode_from_indices(self, seq):
        self._check_seq(seq)
        img_ids, txt_ids = self._split(seq)
        g = self.config.latent_grid
        img_q = self.image_quantizer.lookup(img_ids)
        txt_q = self.text_quantizer.lookup(txt_ids - self.text_offset)
        grid = img_q.transpose(1, 2).reshape(-1, self.config.latent_dim, g, g)
        return self.image_decoder(grid).clamp(-1.0, 1.0), self.text_coder.decode(txt_q)


class ImageVQTextEmbed(ComposedCodec):
    """Image VQ indices plus raw (offset) word ids; text round-trips losslessly."""

    text_output = "ids"

    def __init__(self, config: Stage1Config, text_first: bool = False):
        super().__init__()
        self.config = config
        self.text_first = text_first
        self.kind = "img-vq-text-embed-ti" if text_first else "img-vq-text-embed-it"
        self.image_len = config.image_tokens
        self.text_len = config.text_length
        self.image_encoder = _image_encoder(config)
        self.image_decoder = _image_decoder(config)
        self.quantizer = VectorQuantizer(config.codebook_size, config.latent_dim)
        self.pre_quant = nn.Linear(config.latent_dim, config.latent_dim)

    def _image_latents(self, images):
        raw = self.image_encoder(images).flatten(2).transpose(1, 2)
        return self.pre_quant(raw)

    @torch.no_grad()
    def calibrate(self, images, tokens):
        raw = self.image_encoder(images).flatten(2).transpose(1, 2)
        standardize_projection(self.pre_quant, raw)

    @property
    def text_offset(self) -> int:
        return self.config.codebook_size

    @property
    def content_vocab(self) -> int:
        return self.config.codebook_size + self.config.vocab_size

    def _block_ranges(self):
        k = self.config.codebook_size
        return (0, k), (k, k + self.config.vocab_size)

    def compute_loss(self, images, tokens):
        img_lat = self._image_latents(images)
        img_quant, img_idx, img_sel = self.quantizer(img_lat)
        g = self.config.latent_grid
        grid = img_quant.transpose(1, 2).reshape(-1, self.config.latent_dim, g, g)
        recon_img = mse(self.image_decoder(grid), images)
        codebook_loss, commit_loss = vq_terms(img_lat, img_sel, self.config.beta)
        total = recon_img + codebook_loss + commit_loss
        zero = torch.zeros((), device=images.device)
        indices = self._assemble(img_idx, tokens + self.text_offset)
        return total, {
            "recon_img": recon_img,
            "recon_txt": zero,
            "codebook": codebook_loss,
            "commit": commit_loss,
        }, indices

    @torch.no_grad()
    def encode_to_indices(self, images, tokens):
        return self._assemble(
            self.quantizer.assign(self._image_latents(images)), tokens + self.text_offset
        )

    @torch.no_grad()
    def decode_from_indices(self, seq):
        self._check_seq(seq)
        img_ids, txt_ids = self._split(seq)
        g = self.config.latent_grid
        grid = self.quantizer.lookup(img_ids).transpose(1, 2).reshape(
            -1, self.config.latent_dim, g, g
        )
        return self.image_decoder(grid).clamp(-1.0, 1.0), txt_ids - self.text_offset


def build_model(kind, config: Stage1Config) -> PairCodec:
    """Construct any codec kind; the returned model's ``kind`` round-trips."""
    kind = ModelKind(kind) if not isinstance(kind, ModelKind) else kind
    family = kind.family
    if family == "joint":
        return JointVQ(config, text_coder="conv")
    if family == "no-text-compression":
        return JointVQ(config, text_coder="transformer")
    if family == "shared-codebook":
        return SharedCodebookVQ(config, text_first=kind.text_first)
    if family == "separate-vq":
        return SeparateVQ(config, text_first=kind.text_first)
    if family == "img-vq-text-embed":
        return ImageVQTextEmbed(config, text_first=kind.text_first)
    raise ValueError(f"unknown model kind {kind}")
