"""Binary tensor and weight files, plus PGM heatmap export.

Tensor file (all integers little-endian)::

    magic   4 bytes  b"PMTN"
    version u32      1
    ndim    u32
    dims    ndim x u64
    payload prod(dims) x f32, row-major

Weight file::

    magic   4 bytes  b"PMNW"
    version u32      1
    count   u32
    count x (name_len u16, name utf-8, tensor body)

where a tensor body is a complete tensor file (magic included).
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import (
    BadMagicError,
    DimOverflowError,
    FormatError,
    RangeError,
    TruncatedFileError,
    UnsupportedVersionError,
)

TENSOR_MAGIC = b"PMTN"
WEIGHT_MAGIC = b"PMNW"
VERSION = 1
MAX_NDIM = 16
MAX_ELEMENTS = 2**40


class _Reader:
    def __init__(self, buf: bytes, offset: int = 0):
        self.buf = memoryview(buf)
        self.pos = offset

    def take(self, n: int, what: str) -> memoryview:
        if n > len(self.buf) - self.pos:
            raise TruncatedFileError(
                f"{what}: need {n} bytes at offset {self.pos}, only {len(self.buf) - self.pos} left"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_header(reader: _Reader, magic: bytes) -> None:
    got = bytes(reader.take(4, "magic"))
    if got != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {got!r}")
    (version,) = reader.unpack("<I", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}, expected {VERSION}")


def encode_tensor(array) -> bytes:
    a = np.ascontiguousarray(array, dtype="<f4")
    header = TENSOR_MAGIC + struct.pack("<II", VERSION, a.ndim)
    header += struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + a.tobytes()


def _decode_tensor(reader: _Reader) -> np.ndarray:
    _read_header(reader, TENSOR_MAGIC)
    (ndim,) = reader.unpack("<I", "ndim")
    if ndim > MAX_NDIM:
        raise DimOverflowError(f"ndim {ndim} exceeds limit {MAX_NDIM}")
    dims = reader.unpack(f"<{ndim}Q", "dims")
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise DimOverflowError(f"dims {dims} declare more than {MAX_ELEMENTS} elements")
    payload = reader.take(4 * count, "payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)


def decode_tensor(buf: bytes) -> np.ndarray:
    reader = _Reader(buf)
    out = _decode_tensor(reader)
    if reader.pos != len(buf):
        raise FormatError(f"{len(buf) - reader.pos} trailing bytes after tensor")
    return out


def encode_weights(records: dict[str, np.ndarray]) -> bytes:
    parts = [WEIGHT_MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, array in records.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"record name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(encode_tensor(array))
    return b"".join(parts)


def decode_weights(buf: bytes) -> dict[str, np.ndarray]:
    reader = _Reader(buf)
    _read_header(reader, WEIGHT_MAGIC)
    (count,) = reader.unpack("<I", "record count")
    records = {}
    for _ in range(count):
        (n,) = reader.unpack("<H", "name length")
        try:
            name = bytes(reader.take(n, "name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"record name is not valid UTF-8: {exc}") from None
        if name in records:
            raise FormatError(f"duplicate record name {name!r}")
        records[name] = _decode_tensor(reader)
    if reader.pos != len(buf):
        raise FormatError(f"{len(buf) - reader.pos} trailing bytes after last record")
    return records


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_tensor(path, array) -> None:
    _write(path, encode_tensor(array))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(_read(path))


def save_weights(path, records: dict[str, np.ndarray]) -> None:
    _write(path, encode_weights(records))


def load_weights(path) -> dict[str, np.ndarray]:
    return decode_weights(_read(path))


def file_kind(path) -> bytes:
    """The 4-byte magic of ``path``."""
    with open(path, "rb") as fh:
        return fh.read(4)


def pgm_bytes(values) -> bytes:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise RangeError(f"heatmap must be 2-D, got shape {v.shape}")
    if not ((v >= 0.0) & (v <= 1.0)).all():
        raise RangeError("heatmap values must lie in [0, 1]")
    pixels = np.floor(v * 255.0 + 0.5).astype(np.uint8)
    h, w = v.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def export_pgm(channel, path) -> None:
    """Write a [0, 1] channel as an 8-bit binary PGM (round half up)."""
    data = getattr(channel, "data", channel)
    _write(path, pgm_bytes(data))
