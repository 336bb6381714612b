"""Input validation helpers used by the estimator, the CLI, and the core ops."""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigurationError, DomainError


def as_embedding(v, name: str = "embedding") -> np.ndarray:
    """Coerce to a finite 1-D float64 vector."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError(f"{name} must have dimension > 0")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise DomainError(
            f"embedding dimensions differ: {a.shape[0]} vs {b.shape[0]}"
        )


def as_frames(x, name: str = "frames") -> np.ndarray:
    """Coerce to a finite (T, C, H, W) float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise DomainError(f"{name} must have shape (T, C, H, W), got {arr.shape}")
    if min(arr.shape) < 1:
        raise DomainError(f"{name} has an empty axis: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def check_frame_shape(frame: np.ndarray, channels: int, height: int, width: int) -> None:
    if frame.shape != (channels, height, width):
        raise ConfigurationError(
            f"frame shape {frame.shape} does not match encoder input "
            f"({channels}, {height}, {width})"
        )


def check_positive(value, name: str) -> None:
    if not value > 0:
        raise ConfigurationError(f"{name} must be positive, got {value}")


def check_labels(labels, num_classes: int) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise DomainError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        raise DomainError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{arr.min()}, {arr.max()}]"
        )
    return arr.astype(np.int64)
