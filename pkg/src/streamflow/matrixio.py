"""Binary matrix fixture container used by the validate-gemm subcommand.

Header: magic "MFMX", version u16, dtype code u8, M u32, N u32, layout code u8,
all little-endian, followed by raw little-endian row-major elements.
"""

from __future__ import annotations

import struct

import numpy as np

from .dtypes import DTYPES, DataType
from .errors import InvalidInputError
from .gemm import Matrix

MAGIC = b"MFMX"
VERSION = 1
_HEADER = struct.Struct("<4sHBIIB")

_DTYPE_CODES = {"int8": 0, "int16": 1, "int32": 2, "fp16": 3, "fp32": 4}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}

LAYOUT_DENSE = 0


def dump_matrix(m: Matrix) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, _DTYPE_CODES[m.dtype.name], m.rows, m.cols, LAYOUT_DENSE)
    body = np.ascontiguousarray(m.data, dtype=m.dtype.np_dtype.newbyteorder("<")).tobytes()
    return header + body


def load_matrix(blob: bytes) -> Matrix:
    if len(blob) < _HEADER.size:
        raise InvalidInputError("fixture too short for header")
    magic, version, code, rows, cols, layout = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise InvalidInputError("bad magic, not an MFMX fixture")
    if version != VERSION:
        raise InvalidInputError(f"unsupported fixture version {version}")
    if code not in _CODE_DTYPES:
        raise InvalidInputError(f"unknown dtype code {code}")
    if layout != LAYOUT_DENSE:
        raise InvalidInputError(f"unknown layout code {layout}")
    dtype: DataType = DTYPES[_CODE_DTYPES[code]]
    expect = rows * cols * dtype.element_size
    body = blob[_HEADER.size :]
    if len(body) != expect:
        raise InvalidInputError(f"fixture body is {len(body)} bytes, expected {expect}")
    data = np.frombuffer(body, dtype=dtype.np_dtype.newbyteorder("<")).astype(dtype.np_dtype)
    return Matrix(data.reshape(rows, cols), dtype)


def write_matrix(path, m: Matrix) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_matrix(m))


def read_matrix(path) -> Matrix:
    with open(path, "rb") as fh:
        return load_matrix(fh.read())
