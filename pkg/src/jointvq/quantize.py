"""Codebook quantization: nearest-neighbor assignment with pass-through gradients."""

from __future__ import annotations

import torch
from torch import nn


class _PassThroughLookup(torch.autograd.Function):
    """Forward emits the selected codebook rows bit-exactly; backward treats
    quantization as identity, routing the full gradient to the latents and
    none to the codebook (the codebook trains through its own loss term)."""

    @staticmethod
    def forward(ctx, latents, selected):
        return selected.clone()

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output, None


class VectorQuantizer(nn.Module):
    """K x D embedding table; rows are selected by Euclidean nearest neighbor.

    Ties resolve to the lowest row index. The returned quantized tensor is
    bit-equal to the selected rows while gradients pass straight through to
    the input latents.
    """

    def __init__(self, num_codes: int = 256, dim: int = 128):
        super().__init__()
        self.num_codes = num_codes
        self.dim = dim
        weight = torch.empty(num_codes, dim)
        weight.uniform_(-1.0 / num_codes, 1.0 / num_codes)
        self.codebook = nn.Parameter(weight)

    @torch.no_grad()
    def assign(self, latents: torch.Tensor) -> torch.Tensor:
        """Nearest codebook row id for each (..., D) latent vector."""
        flat = latents.reshape(-1, self.dim)
        e = self.codebook
        d2 = (
            flat.pow(2).sum(1, keepdim=True)
            - 2.0 * flat @ e.t()
            + e.pow(2).sum(1)[None, :]
        )
        return d2.argmin(dim=1).reshape(latents.shape[:-1])

    def lookup(self, indices: torch.Tensor) -> torch.Tensor:
        """Differentiable row lookup (gradients flow into the codebook)."""
        if indices.numel() and (indices.min() < 0 or indices.max() >= self.num_codes):
            raise IndexError(
                f"codebook index out of range [0, {self.num_codes}): "
                f"[{int(indices.min())}, {int(indices.max())}]"
            )
        flat = self.codebook.index_select(0, indices.reshape(-1))
        return flat.reshape(*indices.shape, self.dim)

    def forward(self, latents: torch.Tensor):
        """Returns (quantized, indices, selected).

        ``quantized`` carries straight-through gradients to ``latents``;
        ``selected`` is the plain differentiable lookup used by the codebook
        and commitment loss terms. Both hold identical values.
        """
        indices = self.assign(latents)
        selected = self.lookup(indices)
        quantized = _PassThroughLookup.apply(latents, selected)
        return quantized, indices, selected
