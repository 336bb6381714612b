"""Synthetic desk-scale video datasets.

Each class is a bright soft-edged patch anchored at a class-specific location
and oscillating along a class-specific direction; clips of one class differ by
motion phase, small positional jitter, and their background.  The background
is smooth per-clip noise plus light per-frame flicker, so the class signal
competes with clip-specific clutter.  A darkness factor in (0, 1] multiplies
all pixels, emulating low-light capture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, FormatError
from .ppm import read_ppm, write_ppm
from .sampling import bilinear_resize
from .training import Video

_NAME_POOL = [
    "waving east",
    "waving south",
    "waving west",
    "waving north",
    "circling upper left",
    "circling lower right",
    "bouncing top edge",
    "bouncing bottom edge",
]

MANIFEST_NAME = "manifest.txt"


@dataclass
class SynthSpec:
    classes: int = 4
    per_class: int = 8
    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 3
    darkness: float = 1.0

    def validate(self) -> None:
        if self.classes < 1:
            raise ConfigurationError(f"classes must be >= 1, got {self.classes}")
        if self.per_class < 1:
            raise ConfigurationError(f"per_class must be >= 1, got {self.per_class}")
        if self.frames < 1:
            raise ConfigurationError(f"frames must be >= 1, got {self.frames}")
        if self.height < 8 or self.width < 8:
            raise ConfigurationError(
                f"frames must be at least 8x8, got {self.height}x{self.width}"
            )
        if self.channels != 3:
            raise ConfigurationError("only 3-channel synthesis is supported")
        if not 0.0 < self.darkness <= 1.0:
            raise ConfigurationError(f"darkness must be in (0, 1], got {self.darkness}")


def class_names(count: int) -> list[str]:
    names = list(_NAME_POOL[:count])
    for k in range(len(names), count):
        names.append(f"moving pattern {k}")
    return names


def _class_motion(label: int, count: int, height: int, width: int):
    """Anchor point and oscillation direction for one class."""
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    radius = 0.30 * min(height, width)
    angle = 2.0 * math.pi * label / count + 0.4
    anchor = (cy + radius * math.sin(angle), cx + radius * math.cos(angle))
    direction = (math.cos(angle), -math.sin(angle))  # tangent to the circle
    return anchor, direction


def _soft_patch(height: int, width: int, center_y: float, center_x: float, side: float) -> np.ndarray:
    """A [0, 1] square bump with a ~1.5 px cosine edge."""
    yy = np.arange(height, dtype=np.float64)[:, None]
    xx = np.arange(width, dtype=np.float64)[None, :]
    half = side / 2.0
    edge = 1.5

    def ramp(dist):
        inside = np.clip((half - np.abs(dist)) / edge, 0.0, 1.0)
        return 0.5 - 0.5 * np.cos(np.pi * inside)

    return ramp(yy - center_y) * ramp(xx - center_x)


def _background(spec: SynthSpec, frames: int, rng: np.random.Generator) -> np.ndarray:
    low = rng.uniform(-1.0, 1.0, size=(spec.channels, 8, 8))
    smooth = bilinear_resize(low, spec.height, spec.width)
    base = 0.15 + 0.30 * np.clip(0.5 + 0.5 * smooth, 0.0, 1.0)
    flicker = 0.03 * rng.standard_normal((frames, spec.channels, spec.height, spec.width))
    return np.clip(base[None, :, :, :] + flicker, 0.0, 1.0)


def render_video(spec: SynthSpec, label: int, rng: np.random.Generator) -> np.ndarray:
    """One (F, C, H, W) float video in [0, 1], darkness already applied."""
    anchor, direction = _class_motion(label, spec.classes, spec.height, spec.width)
    period = 8.0
    amplitude = 0.08 * min(spec.height, spec.width)
    phase = rng.uniform(0.0, period)
    jitter = rng.uniform(-1.0, 1.0, size=2)
    side = min(spec.height, spec.width) / 4.0

    video = _background(spec, spec.frames, rng)
    for t in range(spec.frames):
        swing = amplitude * math.sin(2.0 * math.pi * (t + phase) / period)
        cy = anchor[0] + swing * direction[0] + jitter[0]
        cx = anchor[1] + swing * direction[1] + jitter[1]
        patch = _soft_patch(spec.height, spec.width, cy, cx, side)
        video[t] = video[t] * (1.0 - patch) + patch
    return spec.darkness * video


def generate_videos(spec: SynthSpec, seed: int) -> tuple[list[Video], list[str]]:
    """Seeded in-memory dataset: per_class videos for each class, float pixels."""
    spec.validate()
    rng = np.random.default_rng(seed)
    names = class_names(spec.classes)
    videos = []
    index = 0
    for label in range(spec.classes):
        for _ in range(spec.per_class):
            frames = render_video(spec, label, rng)
            videos.append(Video(id=f"vid_{index:04d}", label=label, frames=frames))
            index += 1
    return videos, names


def write_dataset(out_dir, spec: SynthSpec, seed: int) -> list[Video]:
    """Generate and write PPM frames plus a manifest; returns the float videos."""
    videos, names = generate_videos(spec, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        "# evclip synthetic dataset",
        f"classes = {spec.classes}",
        f"videos = {len(videos)}",
        f"frames = {spec.frames}",
        f"height = {spec.height}",
        f"width = {spec.width}",
        f"channels = {spec.channels}",
        f"darkness = {spec.darkness!r}",
        f"seed = {seed}",
    ]
    for label, name in enumerate(names):
        lines.append(f"class {label} = {name}")
    for video in videos:
        rel = f"videos/{video.id}"
        frame_dir = out / rel
        frame_dir.mkdir(parents=True, exist_ok=True)
        for t in range(video.frames.shape[0]):
            write_ppm(frame_dir / f"frame_{t:04d}.ppm", video.frames[t])
        lines.append(f"video {video.id} {video.label} {video.frames.shape[0]} {rel}")
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return videos


def load_dataset(data_dir) -> tuple[list[Video], list[str], dict]:
    """Read a dataset directory back into float videos + class names + metadata."""
    root = Path(data_dir)
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        raise FormatError(f"missing dataset manifest: {manifest}")
    meta: dict = {}
    names: dict[int, str] = {}
    entries: list[tuple[str, int, int, str]] = []
    for line_no, raw in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("class "):
            body = line[len("class ") :]
            label_str, _, name = body.partition("=")
            names[int(label_str.strip())] = name.strip()
        elif line.startswith("video "):
            parts = line.split()
            if len(parts) != 5:
                raise FormatError(f"{manifest}:{line_no}: malformed video entry {line!r}")
            entries.append((parts[1], int(parts[2]), int(parts[3]), parts[4]))
        else:
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    expected = int(meta.get("videos", len(entries)))
    if expected != len(entries):
        raise FormatError(
            f"{manifest}: declares {expected} videos but lists {len(entries)}"
        )
    class_list = [names[i] for i in sorted(names)]
    videos = []
    for vid, label, n_frames, rel in entries:
        frame_dir = root / rel
        frames = []
        for t in range(n_frames):
            ppm = frame_dir / f"frame_{t:04d}.ppm"
            if not ppm.exists():
                raise FormatError(f"video '{vid}' is missing frame file {ppm}")
            frames.append(read_ppm(ppm))
        videos.append(Video(id=vid, label=label, frames=np.stack(frames, axis=0)))
    return videos, class_list, meta
