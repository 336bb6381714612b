"""Frame sampling and spatial preprocessing.

Training picks a random L-frame window and random crops; testing uses a
centered window and center crops.  Within the window, T frame indices are
spread uniformly with round-half-up.  Videos shorter than the window are
loop-padded (callers log the flag).
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigurationError, DomainError
from .validation import as_frames


def uniform_indices(window: int, count: int) -> list[int]:
    """count indices spread over [0, window), via round-half-up of k*(L-1)/(T-1)."""
    if count < 1:
        raise DomainError(f"frame count must be >= 1, got {count}")
    if window < count:
        raise DomainError(f"window {window} shorter than frame count {count}")
    if count == 1:
        return [(window - 1) // 2]
    step = (window - 1) / (count - 1)
    return [int(np.floor(k * step + 0.5)) for k in range(count)]


def sample_frames(
    frames: np.ndarray,
    count: int,
    window: int,
    mode: str,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, bool]:
    """Select ``count`` frames from a (F, C, H, W) video.

    Returns the sampled frames and whether loop padding was needed.
    """
    if mode not in ("train", "test"):
        raise ConfigurationError(f"mode must be 'train' or 'test', got {mode!r}")
    if mode == "train" and rng is None:
        raise ConfigurationError("train-mode sampling needs an rng")
    arr = as_frames(frames, "video")
    padded = False
    if arr.shape[0] < window:
        reps = -(-window // arr.shape[0])
        arr = np.concatenate([arr] * reps, axis=0)
        padded = True
    total = arr.shape[0]
    if mode == "train":
        start = int(rng.integers(0, total - window + 1))
    else:
        start = (total - window + 1) // 2 if total > window else 0
    indices = [start + i for i in uniform_indices(window, count)]
    return arr[indices].copy(), padded


def bilinear_resize(frames: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (..., H, W) arrays bilinearly using half-pixel sample centers."""
    arr = np.asarray(frames, dtype=np.float64)
    in_h, in_w = arr.shape[-2], arr.shape[-1]
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"resize dims must be >= 1, got {out_h}x{out_w}")
    if (in_h, in_w) == (out_h, out_w):
        return arr.copy()

    def axis_weights(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(src).astype(np.int64)
        frac = src - lo
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac

    y0, y1, fy = axis_weights(in_h, out_h)
    x0, x1, fx = axis_weights(in_w, out_w)
    rows = arr[..., y0, :] * (1.0 - fy)[:, None] + arr[..., y1, :] * fy[:, None]
    out = rows[..., :, x0] * (1.0 - fx) + rows[..., :, x1] * fx
    return out


def crop(
    frames: np.ndarray,
    crop_h: int,
    crop_w: int,
    mode: str,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Center crop (test) or seeded random crop (train) of (..., H, W) data.

    Odd margins put the extra pixel of margin on the top/left side.
    """
    if mode not in ("train", "test"):
        raise ConfigurationError(f"mode must be 'train' or 'test', got {mode!r}")
    arr = np.asarray(frames, dtype=np.float64)
    in_h, in_w = arr.shape[-2], arr.shape[-1]
    if crop_h > in_h or crop_w > in_w:
        raise ConfigurationError(
            f"crop {crop_h}x{crop_w} larger than frame {in_h}x{in_w}"
        )
    margin_h, margin_w = in_h - crop_h, in_w - crop_w
    if mode == "train":
        if rng is None:
            raise ConfigurationError("train-mode cropping needs an rng")
        top = int(rng.integers(0, margin_h + 1))
        left = int(rng.integers(0, margin_w + 1))
    else:
        top = (margin_h + 1) // 2
        left = (margin_w + 1) // 2
    return arr[..., top : top + crop_h, left : left + crop_w].copy()


def preprocess(
    frames: np.ndarray,
    resize_hw: tuple[int, int],
    crop_hw: tuple[int, int],
    mode: str,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Bilinear resize then crop, matching the train/test conventions above."""
    if crop_hw[0] > resize_hw[0] or crop_hw[1] > resize_hw[1]:
        raise ConfigurationError(
            f"crop {crop_hw} larger than resized frame {resize_hw}"
        )
    resized = bilinear_resize(frames, *resize_hw)
    return crop(resized, crop_hw[0], crop_hw[1], mode, rng)
