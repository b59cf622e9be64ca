"""Reading and writing databases.

Binary layout (all integers little-endian)::

    offset  size             content
    0       8                magic b"MPRVDB01"
    8       8                n, u64
    16      8                d, u64
    24      ceil(n*d/8)      entries, row-major; entry k = (row k // d, column k % d)
                             is bit (k % 8) of byte k // 8, least significant bit
                             first; 1 = +1, 0 = -1; unused trailing bits are 0

Text layout: one row per line, one character per entry, ``+`` or ``-``.

Sidecar layout: UTF-8 ``key=value`` lines; ``#`` starts a comment line.
"""

from __future__ import annotations

import os
import struct
from typing import Mapping, Optional

import numpy as np

from .core import Database
from .errors import DimensionError, FormatError, ParameterError

MAGIC = b"MPRVDB01"
_HEADER = struct.Struct("<8sQQ")
_CHUNK_ROWS = 8 * 4096


def _check_expected(shape, expected_shape):
    if expected_shape is None:
        return
    for got, want, name in zip(shape, expected_shape, ("n", "d")):
        if want is not None and got != want:
            raise DimensionError(f"expected {name}={want}, file has {name}={got}")


def write_binary(db: Database, path) -> None:
    n, d = db.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d))
        # Chunks of a multiple of 8 rows start on a byte boundary of the stream.
        for start in range(0, n, _CHUNK_ROWS):
            bits = db.bits(start, start + _CHUNK_ROWS)
            fh.write(np.packbits(bits.ravel(), bitorder="little").tobytes())


def read_binary(path, expected_shape: Optional[tuple] = None) -> Database:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, n, d = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"{path}: not a marginalpriv database (bad magic)")
        if n < 1 or d < 1:
            raise DimensionError(f"{path}: header declares n={n}, d={d}")
        _check_expected((n, d), expected_shape)
        payload_len = (n * d + 7) // 8
        size = os.fstat(fh.fileno()).st_size
        if size != _HEADER.size + payload_len:
            raise DimensionError(
                f"{path}: payload is {size - _HEADER.size} bytes, n={n} d={d} needs {payload_len}"
            )
        row_bytes = (d + 7) // 8
        packed = np.empty((n, row_bytes), dtype=np.uint8)
        for start in range(0, n, _CHUNK_ROWS):
            rows = min(_CHUNK_ROWS, n - start)
            nbits = rows * d
            raw = np.frombuffer(fh.read((nbits + 7) // 8), dtype=np.uint8)
            bits = np.unpackbits(raw, bitorder="little")
            if np.any(bits[nbits:]):
                raise FormatError(f"{path}: nonzero padding bits")
            packed[start:start + rows] = np.packbits(bits[:nbits].reshape(rows, d), axis=1, bitorder="little")
    return Database._owned(packed, d)


def write_text(db: Database, path) -> None:
    table = np.array([ord("-"), ord("+")], dtype=np.uint8)
    with open(path, "wb") as fh:
        for start in range(0, db.n, _CHUNK_ROWS):
            chars = table[db.bits(start, start + _CHUNK_ROWS).astype(np.uint8)]
            lines = np.concatenate([chars, np.full((chars.shape[0], 1), ord("\n"), dtype=np.uint8)], axis=1)
            fh.write(lines.tobytes())


def read_text(path, expected_shape: Optional[tuple] = None) -> Database:
    with open(path, "rb") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty database file")
    d = len(lines[0])
    if d == 0:
        raise FormatError(f"{path}: empty first row")
    for i, line in enumerate(lines):
        if len(line) != d:
            raise DimensionError(f"{path}: row {i} has {len(line)} entries, expected {d}")
    chars = np.frombuffer(b"".join(lines), dtype=np.uint8).reshape(len(lines), d)
    plus = chars == ord("+")
    if not np.all(plus | (chars == ord("-"))):
        raise FormatError(f"{path}: entries must be '+' or '-'")
    _check_expected(plus.shape, expected_shape)
    return Database.from_bits(plus)


def sniff_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return "binary" if head == MAGIC else "text"


def load_database(path, fmt: str = "auto", expected_shape: Optional[tuple] = None) -> Database:
    if fmt == "auto":
        fmt = sniff_format(path)
    if fmt == "binary":
        return read_binary(path, expected_shape)
    if fmt == "text":
        return read_text(path, expected_shape)
    raise ParameterError(f"unknown database format {fmt!r}")


def save_database(db: Database, path, fmt: str = "binary") -> None:
    if fmt == "binary":
        write_binary(db, path)
    elif fmt == "text":
        write_text(db, path)
    else:
        raise ParameterError(f"unknown database format {fmt!r}")


def write_sidecar(record: Mapping[str, str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in record.items():
            if "=" in key or "\n" in key or "\n" in str(value):
                raise FormatError(f"cannot encode sidecar entry {key!r}")
            fh.write(f"{key}={value}\n")


def read_sidecar(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            out[key.strip()] = value.strip()
    return out
