"""Portable pixmap I/O. Reads P3 and P6 with maxval <= 255 (``#`` comments
allowed in the header); always writes canonical P6: ``P6\\n<w> <h>\\n255\\n``
followed by raw RGB bytes."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ImageFormatError


def _header_tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens and the offset just
    past the single whitespace byte that ends the last one."""
    tokens = []
    i, n = 0, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if i >= n:
            raise ImageFormatError("truncated header")
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        if not (tokens[0] == b"P3" and i == n):
            raise ImageFormatError("header must end with a whitespace byte")
    return tokens, i + 1


def decode(data: bytes) -> np.ndarray:
    """Bytes -> float array (rows, cols, 3) with channels in [0, 1]."""
    if len(data) < 2 or data[:2] not in (b"P3", b"P6"):
        raise ImageFormatError("not a P3/P6 portable pixmap (bad magic number)")
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError("non-numeric width, height or maxval") from None
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad dimensions {w}x{h}")
    if not 1 <= maxval <= 255:
        raise ImageFormatError(f"unsupported maxval {maxval} (only 1..255)")
    n = w * h * 3
    if magic == b"P6":
        payload = data[offset:offset + n]
        if len(payload) < n:
            raise ImageFormatError(f"truncated payload: {len(payload)} of {n} bytes")
        raw = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    else:
        words = re.sub(rb"#[^\r\n]*", b" ", data[offset:]).split()
        if len(words) < n:
            raise ImageFormatError(f"truncated payload: {len(words)} of {n} samples")
        try:
            raw = np.array([int(x) for x in words[:n]], dtype=np.int64)
        except ValueError:
            raise ImageFormatError("non-numeric sample in P3 body") from None
    if raw.max(initial=0) > maxval:
        raise ImageFormatError(f"sample exceeds maxval {maxval}")
    return (raw.astype(float) / maxval).reshape(h, w, 3)


def encode_p6(values: np.ndarray) -> bytes:
    """uint8 array (rows, cols, 3) -> canonical P6 bytes."""
    values = np.asarray(values)
    h, w, _ = values.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + values.astype(np.uint8).tobytes()


def encode(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"image must have shape (rows, cols, 3), got {image.shape}")
    return encode_p6(np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8))


def encode_p3(image: np.ndarray) -> bytes:
    values = np.clip(np.floor(np.asarray(image) * 255.0 + 0.5), 0, 255).astype(int)
    h, w, _ = values.shape
    body = "\n".join(" ".join(str(v) for v in row.ravel()) for row in values)
    return f"P3\n{w} {h}\n255\n{body}\n".encode("ascii")


def read_image(path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def write_image(image: np.ndarray, path) -> None:
    Path(path).write_bytes(encode(image))
