"""Checkpoint format ("EVCK"): named f32 tensors grouped into sections.

Sections hold the mask and context generator parameters (and optionally Adam
moments).  The header carries a digest of the training config so a checkpoint
cannot silently load under a different configuration.  Files round-trip
bit-exactly: load followed by save reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .exceptions import ConfigurationError, FormatError
from .training import PromptModel, TrainConfig

MAGIC = b"EVCK"
VERSION = 1

SECTION_MASK = "mask_generator"
SECTION_CONTEXT = "context_generator"
SECTION_OPTIMIZER = "optimizer_state"


def config_digest(config: TrainConfig) -> bytes:
    """SHA-256 over the canonical `key = value` rendering of the config."""
    lines = [f"{key} = {value!r}" for key, value in sorted(asdict(config).items())]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).digest()


@dataclass
class Checkpoint:
    digest: bytes
    seed: int
    epoch: int
    sections: dict[str, dict[str, np.ndarray]]  # section -> name -> f32 array


def _model_sections(model: PromptModel) -> dict[str, dict[str, np.ndarray]]:
    sections: dict[str, dict[str, np.ndarray]] = {SECTION_MASK: {}, SECTION_CONTEXT: {}}
    for name, param in model.named_parameters():
        section, _, rest = name.partition(".")
        key = {"mask_generator": SECTION_MASK, "context_generator": SECTION_CONTEXT}[section]
        sections[key][rest] = param.detach().numpy().astype(np.float32)
    return sections


def _optimizer_section(state: dict) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for idx in sorted(state.get("state", {})):
        entry = state["state"][idx]
        for field_name in ("step", "exp_avg", "exp_avg_sq"):
            value = entry.get(field_name)
            if value is None:
                continue
            arr = value.detach().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
            tensors[f"{idx}.{field_name}"] = arr.astype(np.float32)
    return tensors


def checkpoint_from_model(
    model: PromptModel,
    config: TrainConfig,
    epoch: int,
    optimizer_state: dict | None = None,
) -> Checkpoint:
    sections = _model_sections(model)
    if optimizer_state is not None:
        sections[SECTION_OPTIMIZER] = _optimizer_section(optimizer_state)
    return Checkpoint(
        digest=config_digest(config), seed=config.seed, epoch=epoch, sections=sections
    )


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack("<I", len(checkpoint.digest)) + checkpoint.digest)
    parts.append(struct.pack("<qI", checkpoint.seed, checkpoint.epoch))
    parts.append(struct.pack("<I", len(checkpoint.sections)))
    for section, tensors in checkpoint.sections.items():
        parts.append(_pack_str(section))
        parts.append(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float32)
            parts.append(_pack_str(name))
            parts.append(struct.pack("<I", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            parts.append(arr.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise FormatError(
                f"truncated checkpoint: needed {n} bytes for {what} at byte {offset}"
            )
        out = data[offset : offset + n]
        offset += n
        return out

    def u32(what: str) -> int:
        return struct.unpack("<I", take(4, what))[0]

    def string(what: str) -> str:
        return take(u32(f"{what} length"), what).decode("utf-8")

    if take(4, "magic") != MAGIC:
        raise FormatError(f"bad magic at byte 0, expected {MAGIC!r}")
    version = u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at byte 4")
    digest = take(u32("digest length"), "digest")
    seed, epoch = struct.unpack("<qI", take(12, "seed/epoch"))
    sections: dict[str, dict[str, np.ndarray]] = {}
    for _ in range(u32("section count")):
        section = string("section name")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(u32("tensor count")):
            name = string("tensor name")
            ndim = u32("tensor rank")
            shape = struct.unpack(f"<{ndim}I", take(4 * ndim, "tensor shape")) if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            raw = take(4 * count, f"tensor '{section}/{name}' data")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        sections[section] = tensors
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after checkpoint body")
    return Checkpoint(digest=digest, seed=seed, epoch=epoch, sections=sections)


def load_into_model(checkpoint: Checkpoint, model: PromptModel) -> None:
    """Copy checkpoint tensors into the model (f32 storage -> f64 params)."""
    sections = checkpoint.sections
    for name, param in model.named_parameters():
        section, _, rest = name.partition(".")
        key = {"mask_generator": SECTION_MASK, "context_generator": SECTION_CONTEXT}[section]
        tensors = sections.get(key, {})
        if rest not in tensors:
            raise FormatError(f"checkpoint is missing tensor '{key}/{rest}'")
        arr = tensors[rest]
        if tuple(arr.shape) != tuple(param.shape):
            raise FormatError(
                f"checkpoint tensor '{key}/{rest}' has shape {arr.shape}, "
                f"model expects {tuple(param.shape)}"
            )
        with torch.no_grad():
            param.copy_(torch.as_tensor(arr, dtype=torch.float64))


def check_digest(checkpoint: Checkpoint, config: TrainConfig, allow_mismatch: bool) -> None:
    if checkpoint.digest != config_digest(config) and not allow_mismatch:
        raise ConfigurationError(
            "checkpoint was produced under a different config "
            "(digest mismatch); pass the override flag to load anyway"
        )
