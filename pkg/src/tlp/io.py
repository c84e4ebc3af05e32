"""File formats: TLPT tensors, binary PGM masks, grayscale PNG, atomic writes.

TLPT layout (little-endian throughout):

    magic b"TLPT" | u32 rank | rank * u32 extents | float32 data, row-major

PGM masks are written as binary P5 with maxval 255; 0 is background and 255
is foreground. All writers go through :func:`atomic_write` (temp file +
rename) so an interrupted run never leaves a truncated file behind.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from typing import Callable

import numpy as np

from .errors import CorruptHeader, IOFailure

TLPT_MAGIC = b"TLPT"


def atomic_write(path: str, writer: Callable) -> None:
    """Write via a temp file in the target directory, then rename over path."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
        try:
            with os.fdopen(fd, "wb") as fh:
                writer(fh)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


# -- TLPT ----------------------------------------------------------------------


def write_tlpt(path: str, array: np.ndarray) -> None:
    atomic_write(path, lambda fh: write_tlpt_stream(fh, array))


def write_tlpt_stream(fh, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    fh.write(TLPT_MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def read_tlpt(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            return read_tlpt_stream(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


def read_tlpt_stream(fh) -> np.ndarray:
    magic = fh.read(4)
    if magic != TLPT_MAGIC:
        raise CorruptHeader(f"bad magic {magic!r}, expected {TLPT_MAGIC!r}")
    raw = fh.read(4)
    if len(raw) != 4:
        raise CorruptHeader("truncated rank field")
    (rank,) = struct.unpack("<I", raw)
    if rank > 32:
        raise CorruptHeader(f"implausible rank {rank}")
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise CorruptHeader("truncated shape fields")
    shape = struct.unpack(f"<{rank}I", raw)
    count = 1
    for extent in shape:
        if extent == 0:
            raise CorruptHeader("zero extent")
        count *= extent
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise CorruptHeader(f"expected {count} float32 values, file is short")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


# -- PGM -------------------------------------------------------------------------


def write_pgm(path: str, mask: np.ndarray) -> None:
    """Binary mask to P5 PGM: values {0,1} map to bytes {0,255}."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise IOFailure(f"PGM mask must be 2-D, got shape {m.shape}")
    payload = (np.where(m > 0, 255, 0)).astype(np.uint8)

    def writer(fh):
        fh.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii"))
        fh.write(payload.tobytes())

    atomic_write(path, writer)


def read_pgm(path: str) -> np.ndarray:
    """Read a P5 PGM into a {0,1} float32 mask (threshold at 128)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    if not blob.startswith(b"P5"):
        raise CorruptHeader("not a binary PGM (P5) file")
    # header: magic, width, height, maxval; '#' comments allowed between tokens
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptHeader("truncated PGM header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise CorruptHeader(f"non-numeric PGM header fields {fields}") from exc
    if maxval != 255 or width <= 0 or height <= 0:
        raise CorruptHeader(f"unsupported PGM header {width}x{height} maxval={maxval}")
    data = blob[pos : pos + width * height]
    if len(data) != width * height:
        raise CorruptHeader("PGM payload is short")
    img = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return (img >= 128).astype(np.float32)


# -- minimal grayscale PNG -------------------------------------------------------


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_gray_png(img8: np.ndarray) -> bytes:
    """8-bit grayscale ndarray (H, W) to PNG bytes (filter 0, fixed zlib level)."""
    arr = np.asarray(img8, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D grayscale image, got {arr.shape}")
    h, w = arr.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)  # bit depth 8, gray
    raw = b"".join(b"\x00" + arr[row].tobytes() for row in range(h))
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(raw, 6))
        + _png_chunk(b"IEND", b"")
    )


def decode_gray_png(blob: bytes) -> np.ndarray:
    """Inverse of encode_gray_png; handles only the subset that writer emits."""
    if blob[:8] != b"\x89PNG\r\n\x1a\n":
        raise CorruptHeader("not a PNG file")
    pos, w = 8, None
    idat = b""
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        tag = blob[pos + 4 : pos + 8]
        payload = blob[pos + 8 : pos + 8 + length]
        if tag == b"IHDR":
            w, h, depth, color = struct.unpack(">IIBB", payload[:10])
            if depth != 8 or color != 0:
                raise CorruptHeader("decoder handles 8-bit grayscale only")
        elif tag == b"IDAT":
            idat += payload
        pos += 12 + length
    if w is None:
        raise CorruptHeader("missing IHDR")
    raw = zlib.decompress(idat)
    out = np.zeros((h, w), dtype=np.uint8)
    stride = w + 1
    for row in range(h):
        line = raw[row * stride : (row + 1) * stride]
        if line[0] != 0:
            raise CorruptHeader(f"unsupported PNG filter {line[0]}")
        out[row] = np.frombuffer(line[1:], dtype=np.uint8)
    return out
