"""Binary PPM (P6) image I/O: codec-free and bit-exact.

Images move through the package as (C, H, W) float arrays in [0, 1];
files store 8-bit RGB.  Single-channel data is replicated to gray RGB.
"""

from __future__ import annotations

import numpy as np

from .exceptions import FormatError


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0, 1] to uint8 with round-half-away."""
    arr = np.asarray(image, dtype=np.float64)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    """Write a (C, H, W) or (H, W) float image in [0, 1] as binary P6."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[None, :, :], 3, axis=0)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise FormatError(f"PPM writer expects (1|3, H, W) or (H, W), got {arr.shape}")
    if arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    _, h, w = arr.shape
    pixels = to_bytes(arr).transpose(1, 2, 0)  # (H, W, 3)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read binary P6 into a (3, H, W) float64 array in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise FormatError(f"{path}: not a binary PPM (P6) file")
    # Header: magic, width, height, maxval; separated by whitespace, with
    # optional '#' comment lines.
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(v) for v in fields)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PPM header fields {fields}") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    need = w * h * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} pixel bytes, got {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0
