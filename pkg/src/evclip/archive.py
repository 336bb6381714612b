"""Binary embedding-archive format ("EVCA").

Stores, for one dataset: per-class text embeddings, per-video frame embeddings
and video latents, plus an id/label manifest.  Little-endian throughout; all
tensor payloads are float32 row-major.  A trailing u64 checksum holds the sum
of payload bytes mod 2^64.

Layout:
    magic "EVCA" | version u32 | videos u32 | classes u32 | T u32 | d u32
    | d_z u32 | T_half u32 | h u32 | w u32
    | manifest: per video (str id, u32 label), per class (str name)
    | payload: per class f32[d]; per video f32[T, d] then f32[d_z, T_half, h, w]
    | checksum u64

Strings are u32 byte-length prefixed UTF-8.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError

MAGIC = b"EVCA"
VERSION = 1


@dataclass
class EmbeddingArchive:
    video_ids: list[str]
    labels: np.ndarray  # (N,) int
    class_names: list[str]
    text_embeddings: np.ndarray  # (M, d) float32
    frame_embeddings: np.ndarray  # (N, T, d) float32
    latents: np.ndarray  # (N, d_z, T_half, h, w) float32

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.text_embeddings = np.asarray(self.text_embeddings, dtype=np.float32)
        self.frame_embeddings = np.asarray(self.frame_embeddings, dtype=np.float32)
        self.latents = np.asarray(self.latents, dtype=np.float32)
        n = len(self.video_ids)
        if self.labels.shape != (n,):
            raise FormatError(f"labels shape {self.labels.shape} != ({n},)")
        if self.frame_embeddings.ndim != 3 or self.frame_embeddings.shape[0] != n:
            raise FormatError(
                f"frame embeddings shape {self.frame_embeddings.shape} "
                f"inconsistent with {n} videos"
            )
        if self.latents.ndim != 5 or self.latents.shape[0] != n:
            raise FormatError(
                f"latents shape {self.latents.shape} inconsistent with {n} videos"
            )
        m = len(self.class_names)
        if self.text_embeddings.shape[0] != m:
            raise FormatError(
                f"{self.text_embeddings.shape[0]} text embeddings for {m} classes"
            )
        if n and (self.labels.min() < 0 or self.labels.max() >= m):
            raise FormatError("labels out of class range")

    @property
    def num_videos(self) -> int:
        return len(self.video_ids)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def frames_per_video(self) -> int:
        return self.frame_embeddings.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.frame_embeddings.shape[2]


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"truncated archive: needed {n} bytes for {what} at byte "
                f"{self.offset}, file has {len(self.data)}"
            )
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def string(self, what: str) -> str:
        n = self.u32(f"{what} length")
        return self.take(n, what).decode("utf-8")

    def f32_array(self, shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def write_embedding_archive(path, archive: EmbeddingArchive) -> None:
    n, m = archive.num_videos, archive.num_classes
    t, d = archive.frame_embeddings.shape[1], archive.frame_embeddings.shape[2]
    d_z, t_half, h, w = archive.latents.shape[1:]

    parts = [MAGIC, struct.pack("<9I", VERSION, n, m, t, d, d_z, t_half, h, w)]
    for vid, label in zip(archive.video_ids, archive.labels):
        parts.append(_pack_str(vid))
        parts.append(struct.pack("<I", int(label)))
    for name in archive.class_names:
        parts.append(_pack_str(name))

    payload = bytearray()
    for i in range(m):
        payload += archive.text_embeddings[i].astype("<f4").tobytes()
    for i in range(n):
        payload += archive.frame_embeddings[i].astype("<f4").tobytes()
        payload += archive.latents[i].astype("<f4").tobytes()
    checksum = int(np.frombuffer(bytes(payload), dtype=np.uint8).sum(dtype=np.uint64))
    parts.append(bytes(payload))
    parts.append(struct.pack("<Q", checksum & 0xFFFFFFFFFFFFFFFF))

    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_embedding_archive(path) -> EmbeddingArchive:
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)

    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at byte 4")
    n = r.u32("video count")
    m = r.u32("class count")
    t = r.u32("frames per video")
    d = r.u32("embedding dim")
    d_z = r.u32("latent channels")
    t_half = r.u32("latent time steps")
    h = r.u32("latent height")
    w = r.u32("latent width")
    for name, value in [
        ("frames per video", t),
        ("embedding dim", d),
        ("latent channels", d_z),
        ("latent time steps", t_half),
        ("latent height", h),
        ("latent width", w),
    ]:
        if value < 1:
            raise FormatError(f"invalid {name} {value} in header at byte {r.offset}")

    video_ids, labels = [], []
    for i in range(n):
        video_ids.append(r.string(f"video id {i}"))
        labels.append(r.u32(f"label of video {i}"))
    class_names = [r.string(f"class name {i}") for i in range(m)]

    payload_start = r.offset
    text = np.empty((m, d), dtype=np.float32)
    for i in range(m):
        text[i] = r.f32_array((d,), f"text embedding for class '{class_names[i]}'")
    frames = np.empty((n, t, d), dtype=np.float32)
    latents = np.empty((n, d_z, t_half, h, w), dtype=np.float32)
    for i in range(n):
        frames[i] = r.f32_array((t, d), f"frame embeddings of video '{video_ids[i]}'")
        latents[i] = r.f32_array(
            (d_z, t_half, h, w), f"latent block of video '{video_ids[i]}'"
        )
    payload = data[payload_start : r.offset]

    stored = r.u64("checksum")
    actual = int(np.frombuffer(payload, dtype=np.uint8).sum(dtype=np.uint64))
    if stored != (actual & 0xFFFFFFFFFFFFFFFF):
        raise FormatError(
            f"checksum mismatch at byte {r.offset - 8}: stored {stored}, "
            f"computed {actual}"
        )
    if r.offset != len(data):
        raise FormatError(f"{len(data) - r.offset} trailing bytes after checksum")

    return EmbeddingArchive(
        video_ids=video_ids,
        labels=np.asarray(labels, dtype=np.int64),
        class_names=class_names,
        text_embeddings=text,
        frame_embeddings=frames,
        latents=latents,
    )
