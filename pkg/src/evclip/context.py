"""Context prompt generator and video-feature aggregation.

The context prompt compresses the video latent into one d-dimensional vector:
global mean pooling down to the channel axis, an affine projection, and a
learnable scale.  Aggregation with frame embeddings is parameter-free: the
prompt counts as one extra frame.
"""

from __future__ import annotations

import torch
from torch import nn

from .exceptions import DomainError
from .mask import _init_linear, _linear


def global_pool(z: torch.Tensor) -> torch.Tensor:
    """Mean over all non-channel axes: (..., d_z, T/2, h, w) -> (..., d_z)."""
    if z.ndim < 4:
        raise DomainError(f"latent must have >= 4 dims, got shape {tuple(z.shape)}")
    return z.mean(dim=(-3, -2, -1))


class ContextGenerator(nn.Module):
    """Pooled latent (d_z) -> context prompt (d): alpha * (W z + b)."""

    def __init__(self, latent_channels: int, embed_dim: int, seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.projection = _linear(latent_channels, embed_dim)
        _init_linear(self.projection, generator)
        self.alpha = nn.Parameter(torch.ones((), dtype=torch.float64))

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.alpha * self.projection(pooled)


def aggregate_video(frame_feats: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
    """Pool T frame embeddings with the context prompt using divisor T + 1.

    frame_feats: (..., T, d); context: (..., d) broadcastable over the batch.
    """
    if frame_feats.ndim < 2 or frame_feats.shape[-2] < 1:
        raise DomainError("aggregate_video needs at least one frame embedding")
    t = frame_feats.shape[-2]
    return (context + frame_feats.sum(dim=-2)) / (t + 1)


def baseline_video_feature(frame_feats: torch.Tensor) -> torch.Tensor:
    """Plain mean of frame embeddings: the prompt-free video representation."""
    if frame_feats.ndim < 2 or frame_feats.shape[-2] < 1:
        raise DomainError("baseline_video_feature needs at least one frame embedding")
    return frame_feats.mean(dim=-2)
