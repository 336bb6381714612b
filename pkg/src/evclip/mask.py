"""Mask prompt generator: a shallow windowed-attention decoder over the video latent.

Pipeline per clip: project the latent's time axis away, run pairs of plain and
shifted window attention blocks with 2x patch expands, apply a final 4x expand
and a single-channel projection, then a softmax across all pixels followed by
MinMax rescaling into [0, 1].  The resulting H x W field multiplies every
channel of every frame.

No skip connections, no relative position bias tables, no attention masking
for shifted windows; blocks are shallow on purpose.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .exceptions import ConfigurationError, DomainError

MIN_CHANNELS = 16
MAX_WINDOW = 4


def _init_linear(linear: nn.Linear, generator: torch.Generator, zero: bool = False) -> None:
    with torch.no_grad():
        if zero:
            linear.weight.zero_()
        else:
            bound = 1.0 / math.sqrt(linear.in_features)
            linear.weight.uniform_(-bound, bound, generator=generator)
        if linear.bias is not None:
            linear.bias.zero_()


def _linear(in_features: int, out_features: int) -> nn.Linear:
    return nn.Linear(in_features, out_features, dtype=torch.float64)


def window_size_for(side_h: int, side_w: int) -> int:
    """Largest window <= MAX_WINDOW that tiles both sides exactly."""
    for win in range(min(MAX_WINDOW, side_h, side_w), 0, -1):
        if side_h % win == 0 and side_w % win == 0:
            return win
    raise RuntimeError(f"no window size tiles a {side_h}x{side_w} grid")  # pragma: no cover


def window_partition(x: torch.Tensor, win: int) -> torch.Tensor:
    """(B, Sh, Sw, C) -> (B * num_windows, win*win, C)."""
    b, sh, sw, c = x.shape
    x = x.view(b, sh // win, win, sw // win, win, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, win * win, c)


def window_merge(windows: torch.Tensor, win: int, b: int, sh: int, sw: int) -> torch.Tensor:
    """Inverse of :func:`window_partition`."""
    c = windows.shape[-1]
    x = windows.view(b, sh // win, sw // win, win, win, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, sh, sw, c)


class TemporalProjection(nn.Module):
    """Collapse the latent time axis with one shared learnable weight per step."""

    def __init__(self, time_steps: int):
        super().__init__()
        if time_steps < 1:
            raise ConfigurationError(f"time_steps must be >= 1, got {time_steps}")
        init = torch.full((time_steps,), 1.0 / time_steps, dtype=torch.float64)
        self.weights = nn.Parameter(init)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-3] != self.weights.shape[0]:
            raise ConfigurationError(
                f"latent has {z.shape[-3]} time steps, projection expects "
                f"{self.weights.shape[0]}"
            )
        return torch.einsum("...ctyx,t->...cyx", z, self.weights)


class WindowAttentionBlock(nn.Module):
    """One windowed multi-head self-attention block with a feedforward tail.

    Token = one spatial position's channel vector.  Windows are win x win and
    non-overlapping; when ``shifted`` the grid is cyclically rolled by half a
    window first.  Attention output projection and the second feedforward
    layer start at zero, so a fresh block is the identity map.
    """

    def __init__(self, channels: int, window: int, shifted: bool, generator: torch.Generator):
        super().__init__()
        heads = max(channels // 16, 1)
        while channels % heads:
            heads -= 1
        self.channels = channels
        self.window = window
        self.shifted = shifted
        self.heads = heads
        self.head_dim = channels // heads
        self.scale = self.head_dim**-0.5
        self.qkv = _linear(channels, 3 * channels)
        self.proj = _linear(channels, channels)
        self.fc1 = _linear(channels, 2 * channels)
        self.fc2 = _linear(2 * channels, channels)
        self.act = nn.GELU()
        _init_linear(self.qkv, generator)
        _init_linear(self.proj, generator, zero=True)
        _init_linear(self.fc1, generator)
        _init_linear(self.fc2, generator, zero=True)

    def _attend(self, tokens: torch.Tensor) -> torch.Tensor:
        n_win, n_tok, c = tokens.shape
        q, k, v = self.qkv(tokens).chunk(3, dim=-1)
        shape = (n_win, n_tok, self.heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)  # (n_win, heads, tokens, head_dim)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(n_win, n_tok, c)
        return self.proj(out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, sh, sw = x.shape
        if c != self.channels:
            raise ConfigurationError(f"block expects {self.channels} channels, got {c}")
        win = self.window
        if win > sh or win > sw or sh % win or sw % win:
            raise RuntimeError(
                f"window {win} does not tile a {sh}x{sw} grid; the window "
                "fallback rule should have prevented this"
            )
        shift = win // 2 if self.shifted else 0
        y = x.permute(0, 2, 3, 1)  # (B, Sh, Sw, C)
        if shift:
            y = torch.roll(y, shifts=(-shift, -shift), dims=(1, 2))
        tokens = window_partition(y, win)
        tokens = tokens + self._attend(tokens)
        y = window_merge(tokens, win, b, sh, sw)
        if shift:
            y = torch.roll(y, shifts=(shift, shift), dims=(1, 2))
        y = y + self.fc2(self.act(self.fc1(y)))
        return y.permute(0, 3, 1, 2)


class PatchExpand(nn.Module):
    """Upsample spatially by ``factor`` via linear expand + pixel rearrangement.

    Channels expand by factor^2, channel groups scatter into a factor x factor
    neighborhood, then a linear reduction maps to max(C // factor, 16).
    """

    def __init__(self, in_channels: int, factor: int, generator: torch.Generator):
        super().__init__()
        if factor not in (2, 4):
            raise ConfigurationError(f"expand factor must be 2 or 4, got {factor}")
        self.in_channels = in_channels
        self.factor = factor
        self.out_channels = max(in_channels // factor, MIN_CHANNELS)
        self.expand = _linear(in_channels, factor * factor * in_channels)
        self.reduce = _linear(in_channels, self.out_channels)
        _init_linear(self.expand, generator)
        _init_linear(self.reduce, generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, sh, sw = x.shape
        if c != self.in_channels:
            raise ConfigurationError(f"expand expects {self.in_channels} channels, got {c}")
        f = self.factor
        y = self.expand(x.permute(0, 2, 3, 1))  # (B, Sh, Sw, f*f*C)
        y = y.view(b, sh, sw, f, f, c)
        y = y.permute(0, 1, 3, 2, 4, 5).reshape(b, sh * f, sw * f, c)
        y = self.reduce(y)
        return y.permute(0, 3, 1, 2)


class DecoderStage(nn.Module):
    """Plain block, shifted block, then a 2x patch expand."""

    def __init__(self, channels: int, side_h: int, side_w: int, generator: torch.Generator):
        super().__init__()
        win = window_size_for(side_h, side_w)
        self.plain = WindowAttentionBlock(channels, win, shifted=False, generator=generator)
        self.shifted = WindowAttentionBlock(channels, win, shifted=True, generator=generator)
        self.expand = PatchExpand(channels, factor=2, generator=generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.expand(self.shifted(self.plain(x)))


def pixel_softmax(scores: torch.Tensor) -> torch.Tensor:
    """Softmax across all pixels of each (..., H, W) field, max-subtracted."""
    flat = scores.reshape(*scores.shape[:-2], -1)
    flat = flat - flat.amax(dim=-1, keepdim=True)
    out = torch.softmax(flat, dim=-1)
    return out.reshape(scores.shape)


def minmax_scale(field: torch.Tensor) -> torch.Tensor:
    """Rescale each (..., H, W) field to [0, 1]; a constant field becomes all ones."""
    flat = field.reshape(*field.shape[:-2], -1)
    lo = flat.amin(dim=-1, keepdim=True)
    hi = flat.amax(dim=-1, keepdim=True)
    span = hi - lo
    degenerate = span == 0
    safe_span = torch.where(degenerate, torch.ones_like(span), span)
    scaled = (flat - lo) / safe_span
    out = torch.where(degenerate, torch.ones_like(flat), scaled)
    return out.reshape(field.shape)


class MaskGenerator(nn.Module):
    """Latent (d_z, T/2, h, w) -> mask (H, W) in [0, 1], one mask per clip."""

    def __init__(
        self,
        latent_channels: int,
        latent_time: int,
        latent_height: int,
        latent_width: int,
        frame_height: int,
        frame_width: int,
        seed: int = 0,
    ):
        super().__init__()
        ratio_h = frame_height // latent_height
        ratio_w = frame_width // latent_width
        if (
            latent_height * ratio_h != frame_height
            or latent_width * ratio_w != frame_width
            or ratio_h != ratio_w
            or ratio_h < 4
            or ratio_h & (ratio_h - 1)
        ):
            raise ConfigurationError(
                f"frame {frame_height}x{frame_width} over latent "
                f"{latent_height}x{latent_width} must give one power-of-two "
                "ratio >= 4"
            )
        self.latent_channels = latent_channels
        self.latent_time = latent_time
        self.latent_height = latent_height
        self.latent_width = latent_width
        self.frame_height = frame_height
        self.frame_width = frame_width

        generator = torch.Generator().manual_seed(seed)
        self.temporal = TemporalProjection(latent_time)
        stages = []
        channels = latent_channels
        side_h, side_w = latent_height, latent_width
        for _ in range(int(math.log2(ratio_h)) - 2):
            stage = DecoderStage(channels, side_h, side_w, generator)
            stages.append(stage)
            channels = stage.expand.out_channels
            side_h, side_w = side_h * 2, side_w * 2
        self.stages = nn.ModuleList(stages)
        self.final_expand = PatchExpand(channels, factor=4, generator=generator)
        self.final_proj = _linear(self.final_expand.out_channels, 1)
        _init_linear(self.final_proj, generator)

    def scores(self, z: torch.Tensor) -> torch.Tensor:
        """Raw pre-softmax score field, shape (..., H, W)."""
        squeeze = z.ndim == 4
        if squeeze:
            z = z.unsqueeze(0)
        expected = (self.latent_channels, self.latent_time, self.latent_height, self.latent_width)
        if z.shape[1:] != expected:
            raise ConfigurationError(f"latent shape {tuple(z.shape[1:])} != {expected}")
        x = self.temporal(z)
        for stage in self.stages:
            x = stage(x)
        x = self.final_expand(x)
        scores = self.final_proj(x.permute(0, 2, 3, 1)).squeeze(-1)
        return scores[0] if squeeze else scores

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return minmax_scale(pixel_softmax(self.scores(z)))


def apply_mask(frames: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Multiply every channel of every frame by the shared (H, W) mask.

    frames: (..., T, C, H, W); mask: (H, W) or (B, H, W) matching the batch.
    """
    if frames.shape[-2:] != mask.shape[-2:]:
        raise DomainError(
            f"mask spatial shape {tuple(mask.shape[-2:])} does not match "
            f"frames {tuple(frames.shape[-2:])}"
        )
    if mask.ndim == 2:
        return frames * mask
    if mask.ndim == 3 and frames.ndim == 5 and frames.shape[0] == mask.shape[0]:
        return frames * mask[:, None, None, :, :]
    raise DomainError(
        f"cannot broadcast mask shape {tuple(mask.shape)} over frames "
        f"{tuple(frames.shape)}"
    )
