"""GIRT raw tensor files and the named-tensor checkpoint container.

GIRT layout: ASCII ``GIRT``, little-endian u32 rank, u32 dims[rank], then
little-endian f64 data in row-major order.

Container layout (``GIRC``): ASCII ``GIRC``, u32 version, u32 header length,
UTF-8 header text (``key = value`` lines), u32 entry count, then per entry a
u32 name length, the UTF-8 name and a complete GIRT blob.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

GIRT_MAGIC = b"GIRT"
CONTAINER_MAGIC = b"GIRC"
CONTAINER_VERSION = 1


class FormatError(ValueError):
    pass


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _read_u32(f: BinaryIO, what: str) -> int:
    return struct.unpack("<I", _read_exact(f, 4, what))[0]


def write_girt_stream(f: BinaryIO, array) -> None:
    arr = np.ascontiguousarray(np.asarray(array, dtype=np.float64))
    f.write(GIRT_MAGIC)
    f.write(struct.pack("<I", arr.ndim))
    if arr.ndim:
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.astype("<f8").tobytes())


def read_girt_stream(f: BinaryIO) -> np.ndarray:
    magic = _read_exact(f, 4, "magic")
    if magic != GIRT_MAGIC:
        raise FormatError(f"bad GIRT magic {magic!r}")
    rank = _read_u32(f, "rank")
    dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims")) if rank else ()
    count = int(np.prod(dims)) if rank else 1
    raw = _read_exact(f, 8 * count, "data")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)


def write_girt(path, array) -> None:
    with open(path, "wb") as f:
        write_girt_stream(f, array)


def read_girt(path) -> np.ndarray:
    with open(path, "rb") as f:
        arr = read_girt_stream(f)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after GIRT payload")
    return arr


def encode_header(header: dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in header.items())


def parse_header(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def write_container(path, header: dict[str, object], tensors: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    head = encode_header(header).encode("utf-8")
    buf.write(CONTAINER_MAGIC)
    buf.write(struct.pack("<II", CONTAINER_VERSION, len(head)))
    buf.write(head)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        write_girt_stream(buf, arr)
    Path(path).write_bytes(buf.getvalue())


def read_container(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != CONTAINER_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
        version = _read_u32(f, "version")
        if version != CONTAINER_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        head_len = _read_u32(f, "header length")
        header = parse_header(_read_exact(f, head_len, "header").decode("utf-8"))
        count = _read_u32(f, "entry count")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            name_len = _read_u32(f, "name length")
            name = _read_exact(f, name_len, "name").decode("utf-8")
            tensors[name] = read_girt_stream(f)
    return header, tensors
