"""Line-oriented `key = value` run configuration files.

Unknown keys are rejected with their line number; missing keys fall back to
defaults and are reported as notices.  Relative paths resolve against the
config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigurationError
from .training import TrainConfig

_TRAIN_KEYS = {
    "shots": int,
    "frames": int,
    "clip_window": int,
    "temperature": float,
    "lambda": float,  # maps to TrainConfig.consistency_weight
    "epochs": int,
    "learning_rate": float,
    "seed": int,
    "batch_size": int,
    "resize_height": int,
    "resize_width": int,
    "crop_height": int,
    "crop_width": int,
    "embed_dim": int,
    "latent_channels": int,
    "latent_height": int,
    "latent_width": int,
    "encoder_seed": int,
    "ablate_mask": bool,
    "ablate_context": bool,
    "save_optimizer": bool,
}
_PATH_KEYS = {"data_dir", "checkpoint_path", "log_path", "metrics_path"}
_FIELD_FOR_KEY = {"lambda": "consistency_weight"}


@dataclass
class RunConfig:
    train: TrainConfig
    data_dir: str
    checkpoint_path: str
    log_path: str
    metrics_path: str


def _parse_bool(raw: str, key: str, line_no: int) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"line {line_no}: key '{key}' expects a boolean, got {raw!r}")


def parse_run_config(path) -> tuple[RunConfig, list[str]]:
    """Parse a config file; returns the config and default-substitution notices."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc

    seen: dict[str, object] = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, raw_value = line.partition("=")
        key, raw_value = key.strip(), raw_value.strip()
        if key in seen:
            raise ConfigurationError(f"line {line_no}: duplicate key '{key}'")
        if key in _TRAIN_KEYS:
            kind = _TRAIN_KEYS[key]
            try:
                if kind is bool:
                    value = _parse_bool(raw_value, key, line_no)
                else:
                    value = kind(raw_value)
            except ValueError as exc:
                raise ConfigurationError(
                    f"line {line_no}: key '{key}' expects {kind.__name__}, got {raw_value!r}"
                ) from exc
            seen[key] = value
        elif key in _PATH_KEYS:
            seen[key] = raw_value
        else:
            raise ConfigurationError(f"line {line_no}: unknown key '{key}'")

    notices: list[str] = []
    defaults = TrainConfig()
    train_kwargs = {}
    for key in _TRAIN_KEYS:
        field = _FIELD_FOR_KEY.get(key, key)
        if key in seen:
            train_kwargs[field] = seen[key]
        else:
            train_kwargs[field] = getattr(defaults, field)
            notices.append(f"config key '{key}' missing, using default {train_kwargs[field]!r}")
    train = TrainConfig(**train_kwargs)
    train.validate()

    if "data_dir" not in seen:
        raise ConfigurationError("required key 'data_dir' missing from config")

    base = path.parent

    def resolve(key: str, default: str | None) -> str:
        if key in seen:
            value = str(seen[key])
        else:
            value = default
            notices.append(f"config key '{key}' missing, using default {default!r}")
        return str((base / value).resolve()) if not Path(value).is_absolute() else value

    run = RunConfig(
        train=train,
        data_dir=resolve("data_dir", None),
        checkpoint_path=resolve("checkpoint_path", "checkpoint.evck"),
        log_path=resolve("log_path", "train.log"),
        metrics_path=resolve("metrics_path", "metrics.txt"),
    )
    return run, notices


def write_run_config(path, run: RunConfig) -> None:
    """Serialize a RunConfig back to `key = value` text (used by tests and tools)."""
    lines = []
    for key, kind in _TRAIN_KEYS.items():
        field = _FIELD_FOR_KEY.get(key, key)
        value = getattr(run.train, field)
        if kind is bool:
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    lines.append(f"data_dir = {run.data_dir}")
    lines.append(f"checkpoint_path = {run.checkpoint_path}")
    lines.append(f"log_path = {run.log_path}")
    lines.append(f"metrics_path = {run.metrics_path}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def train_config_to_text(config: TrainConfig) -> str:
    parts = []
    for key, kind in _TRAIN_KEYS.items():
        field = _FIELD_FOR_KEY.get(key, key)
        value = getattr(config, field)
        if kind is bool:
            value = "true" if value else "false"
        parts.append(f"{key} = {value}")
    return "\n".join(parts) + "\n"


def config_fields() -> dict[str, type]:
    return dict(_TRAIN_KEYS)


def train_field_for_key(key: str) -> str:
    return _FIELD_FOR_KEY.get(key, key)


def as_dataclass_dict(config: TrainConfig) -> dict:
    return dataclasses.asdict(config)
