"""Bit-exact file formats: the VSRT tensor container and binary PPM images.

VSRT layout (all integers little-endian):

    magic   4 bytes  b"VSRT"
    version u16      currently 1
    count   u32      number of records
    record: name_len u16, name bytes (UTF-8), dtype u8 (1 = float32),
            rank u8, dims u32 * rank, payload little-endian float32

PPM is the binary P6 variant with maxval 255. Floats in [0, 1] quantize by
rounding half away from zero to 0..255; dequantization is exactly v / 255, so
a quantize/dequantize round trip moves a value by at most 1/510.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ParseError, ShapeError
from .tensor import Tensor

MAGIC = b"VSRT"
VERSION = 1
DTYPE_F32 = 1


def write_tensor_container(path, records: Mapping[str, np.ndarray]) -> None:
    """Write named float32 arrays; byte output is a pure function of the input."""
    chunks = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(records))]
    for name, arr in records.items():
        data = np.asarray(arr, dtype="<f4")  # tobytes() below emits C order
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"record name too long: {name!r}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", DTYPE_F32, data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    """Byte cursor that reports the offset of the first missing byte."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated container: expected {what}", len(self.data))
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def read_tensor_container(path) -> "dict[str, np.ndarray]":
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    (version,) = struct.unpack("<H", r.take(2, "version"))
    if version != VERSION:
        raise ParseError(f"unsupported container version {version}", 4)
    (count,) = struct.unpack("<I", r.take(4, "record count"))
    out: dict[str, np.ndarray] = {}
    for k in range(count):
        (name_len,) = struct.unpack("<H", r.take(2, f"record {k} name length"))
        name = r.take(name_len, f"record {k} name").decode("utf-8")
        dtype_pos = r.pos
        dtype, rank = struct.unpack("<BB", r.take(2, f"record {k} dtype/rank"))
        if dtype != DTYPE_F32:
            raise ParseError(f"record {name!r} has unknown dtype code {dtype}", dtype_pos)
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"record {k} dims"))
        n_elems = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(4 * n_elems, f"record {k} payload")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return out


# ---------------------------------------------------------------------------
# PPM (binary P6, maxval 255)
# ---------------------------------------------------------------------------

def quantize(values: np.ndarray) -> np.ndarray:
    """[0, 1] floats to u8 by rounding half away from zero."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def dequantize(bytes_: np.ndarray) -> np.ndarray:
    return (np.asarray(bytes_, dtype=np.float32) / np.float32(255.0)).astype(np.float32)


def write_ppm(path, img) -> None:
    """Write a (1, 3, h, w) or (3, h, w) float image in [0, 1] as binary PPM."""
    data = img.data if isinstance(img, Tensor) else np.asarray(img)
    if data.ndim == 4:
        if data.shape[0] != 1:
            raise ShapeError("batch", 1, data.shape[0], "write_ppm")
        data = data[0]
    if data.ndim != 3 or data.shape[0] != 3:
        raise ShapeError("image", "(3, h, w)", data.shape, "write_ppm")
    h, w = data.shape[1], data.shape[2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    payload = quantize(data).transpose(1, 2, 0).tobytes()  # rows of RGB pixels
    Path(path).write_bytes(header + payload)


def _next_token(data: bytes, pos: int) -> "tuple[bytes, int]":
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":  # comment runs to end of line
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise ParseError("truncated PPM header", n)
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a (1, 3, h, w) float32 array in [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise ParseError(f"bad PPM magic {data[:2]!r}, expected b'P6'", 0)
    pos = 2
    fields = []
    for what in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise ParseError(f"PPM {what} is not an integer: {token!r}", pos - len(token))
    w, h, maxval = fields
    if maxval != 255:
        raise ParseError(f"unsupported PPM maxval {maxval}", pos)
    pos += 1  # single whitespace byte after maxval
    need = 3 * w * h
    if len(data) - pos < need:
        raise ParseError("truncated PPM payload", len(data))
    raw = np.frombuffer(data[pos:pos + need], dtype=np.uint8).reshape(h, w, 3)
    return dequantize(raw.transpose(2, 0, 1))[None, :, :, :]
