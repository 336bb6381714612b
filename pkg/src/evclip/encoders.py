"""Frozen encoder set: per-frame visual map, per-label text map, video-latent map.

The toy encoders built here are seeded, deterministic stand-ins for pretrained
backbones.  They carry no trainable parameters; gradients flow through their
inputs only.  Real backbones are supported via precomputed embedding archives
(see :mod:`evclip.archive`), never via bundled weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import hashlib

import numpy as np
import torch

from .exceptions import ConfigurationError, DomainError
from .validation import as_frames

TEXT_TEMPLATE = "A video of {label}"

_VISUAL_GAIN = 2.5
_BIAS_SCALE = 0.05


@dataclass(frozen=True)
class VideoClip:
    """T frames of pixel data plus a class label; the unit of recognition."""

    frames: np.ndarray  # (T, C, H, W), values in the encoder's input range
    label: int
    id: str

    def __post_init__(self):
        as_frames(self.frames, f"clip '{self.id}'")


@dataclass(frozen=True)
class EncoderDims:
    """Declared dimensions of a frozen encoder set.

    The spatial downsampling ratio frame_height/latent_height must equal
    frame_width/latent_width and be a power of two >= 4; the mask decoder's
    stage count is derived from it.
    """

    embed_dim: int
    latent_channels: int
    latent_height: int
    latent_width: int
    frame_height: int
    frame_width: int
    channels: int = 3

    def __post_init__(self):
        for name in (
            "embed_dim",
            "latent_channels",
            "latent_height",
            "latent_width",
            "frame_height",
            "frame_width",
            "channels",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.frame_height % self.latent_height or self.frame_width % self.latent_width:
            raise ConfigurationError(
                f"latent grid {self.latent_height}x{self.latent_width} does not divide "
                f"frame {self.frame_height}x{self.frame_width}"
            )
        ratio_h = self.frame_height // self.latent_height
        ratio_w = self.frame_width // self.latent_width
        if ratio_h != ratio_w:
            raise ConfigurationError(
                f"height ratio {ratio_h} and width ratio {ratio_w} must be equal"
            )
        if ratio_h < 4 or ratio_h & (ratio_h - 1):
            raise ConfigurationError(
                f"spatial ratio must be a power of two >= 4, got {ratio_h}"
            )

    @property
    def spatial_ratio(self) -> int:
        return self.frame_height // self.latent_height


def _text_seed(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class FrozenEncoderSet:
    """Deterministic frozen visual/text/video encoders with fixed weights.

    All weight tensors are requires_grad=False buffers; a training run can
    never change them.  Evaluation is pure and safe to call concurrently.
    """

    dims: EncoderDims
    input_range: tuple[float, float]
    visual_weight: torch.Tensor = field(repr=False)  # (d, C*H*W)
    visual_bias: torch.Tensor = field(repr=False)  # (d,)
    video_weight: torch.Tensor = field(repr=False)  # (d_z, h, w, C)
    video_bias: torch.Tensor = field(repr=False)  # (d_z,)

    def __post_init__(self):
        for t in (self.visual_weight, self.visual_bias, self.video_weight, self.video_bias):
            t.requires_grad_(False)

    def _to_tensor(self, x) -> torch.Tensor:
        if isinstance(x, torch.Tensor):
            return x.to(torch.float64)
        return torch.as_tensor(np.asarray(x), dtype=torch.float64)

    def encode_frame(self, frame) -> torch.Tensor:
        """Map one (C, H, W) frame to a d-dimensional embedding."""
        x = self._to_tensor(frame)
        d = self.dims
        if x.shape != (d.channels, d.frame_height, d.frame_width):
            raise ConfigurationError(
                f"frame shape {tuple(x.shape)} does not match encoder input "
                f"({d.channels}, {d.frame_height}, {d.frame_width})"
            )
        return self.encode_frames(x.unsqueeze(0))[0]

    def encode_frames(self, frames: torch.Tensor) -> torch.Tensor:
        """Batched frame encoding: (..., C, H, W) -> (..., d). Differentiable in the input."""
        x = self._to_tensor(frames)
        d = self.dims
        if x.shape[-3:] != (d.channels, d.frame_height, d.frame_width):
            raise ConfigurationError(
                f"frame batch shape {tuple(x.shape)} does not end in "
                f"({d.channels}, {d.frame_height}, {d.frame_width})"
            )
        lead = x.shape[:-3]
        flat = x.reshape(*lead, -1)
        return torch.tanh(flat @ self.visual_weight.T + self.visual_bias)

    def encode_text(self, label: str) -> torch.Tensor:
        """Apply the text template and the frozen hash-seeded text map."""
        if not isinstance(label, str) or label == "":
            raise DomainError("label must be a nonempty string")
        text = TEXT_TEMPLATE.format(label=label)
        rng = np.random.default_rng(_text_seed(text))
        return torch.as_tensor(rng.standard_normal(self.dims.embed_dim), dtype=torch.float64)

    def encode_texts(self, labels) -> torch.Tensor:
        return torch.stack([self.encode_text(lbl) for lbl in labels], dim=0)

    def encode_video_latent(self, frames) -> torch.Tensor:
        """Map (T, C, H, W) or (B, T, C, H, W) frames to the video latent.

        The time axis halves: frame pairs and spatial blocks are mean-pooled,
        then each spatial cell applies its own fixed linear map over channels.
        """
        x = self._to_tensor(frames)
        squeeze = x.ndim == 4
        if squeeze:
            x = x.unsqueeze(0)
        d = self.dims
        if x.ndim != 5 or x.shape[-3:] != (d.channels, d.frame_height, d.frame_width):
            raise ConfigurationError(
                f"clip shape {tuple(x.shape)} does not end in "
                f"(T, {d.channels}, {d.frame_height}, {d.frame_width})"
            )
        t = x.shape[1]
        if t % 2:
            raise DomainError(
                f"video latent needs an even frame count, got T={t}; "
                "configure the frame sampler with an even T"
            )
        b, t2 = x.shape[0], t // 2
        bh = d.frame_height // d.latent_height
        bw = d.frame_width // d.latent_width
        pooled = x.reshape(
            b, t2, 2, d.channels, d.latent_height, bh, d.latent_width, bw
        ).mean(dim=(2, 5, 7))  # (B, T/2, C, h, w)
        z = torch.einsum("kyxc,btcyx->bktyx", self.video_weight, pooled)
        z = z + self.video_bias.view(1, -1, 1, 1, 1)
        return z[0] if squeeze else z


def make_toy_encoders(seed: int, dims: EncoderDims) -> FrozenEncoderSet:
    """Build a seeded toy encoder set.

    The visual map concentrates each output coordinate's weights on a spatial
    patch (Gaussian envelope) so that pixel reweighting can change embeddings
    in a region-dependent way; a tanh keeps outputs bounded.  The video map
    uses a distinct random channel mix per latent cell, so global pooling of
    the latent stays sensitive to where brightness sits in the frame.
    """
    if not isinstance(dims, EncoderDims):
        dims = EncoderDims(*dims)
    rng = np.random.default_rng(seed)
    d, c = dims.embed_dim, dims.channels
    height, width = dims.frame_height, dims.frame_width

    centers_y = rng.uniform(0.0, height, size=d)
    centers_x = rng.uniform(0.0, width, size=d)
    base = rng.standard_normal((d, c, height, width))
    yy = np.arange(height, dtype=np.float64)[:, None]
    xx = np.arange(width, dtype=np.float64)[None, :]
    sigma_y = height / 8.0
    sigma_x = width / 8.0
    envelope = np.exp(
        -(
            (yy[None, :, :] - centers_y[:, None, None]) ** 2 / (2.0 * sigma_y**2)
            + (xx[None, :, :] - centers_x[:, None, None]) ** 2 / (2.0 * sigma_x**2)
        )
    )  # (d, H, W)
    visual = base * envelope[:, None, :, :]
    visual = visual.reshape(d, -1)
    norms = np.linalg.norm(visual, axis=1, keepdims=True)
    visual = _VISUAL_GAIN * visual / norms
    visual_bias = _BIAS_SCALE * rng.standard_normal(d)

    video = rng.standard_normal(
        (dims.latent_channels, dims.latent_height, dims.latent_width, c)
    ) / np.sqrt(c)
    # Zero mean per output channel: spatially flat inputs contribute nothing,
    # so the pooled latent tracks where brightness sits rather than how much.
    video -= video.reshape(dims.latent_channels, -1).mean(axis=1)[:, None, None, None]
    video_bias = _BIAS_SCALE * rng.standard_normal(dims.latent_channels)

    return FrozenEncoderSet(
        dims=dims,
        input_range=(0.0, 1.0),
        visual_weight=torch.as_tensor(visual, dtype=torch.float64),
        visual_bias=torch.as_tensor(visual_bias, dtype=torch.float64),
        video_weight=torch.as_tensor(video, dtype=torch.float64),
        video_bias=torch.as_tensor(video_bias, dtype=torch.float64),
    )
