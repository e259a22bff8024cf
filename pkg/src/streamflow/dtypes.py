"""Element types supported by the accelerator and the page-sized tile shapes they imply."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

PAGE_BYTES = 4096
ARRAY_WIDTH = 16  # W, PE grid width of the default array


@dataclass(frozen=True)
class DataType:
    name: str
    element_size: int          # bytes per element
    np_dtype: np.dtype         # storage dtype
    np_accumulator: np.dtype   # partial-sum dtype (int32 or float32)
    is_integer: bool

    @property
    def accumulator_size(self) -> int:
        return self.np_accumulator.itemsize


INT8 = DataType("int8", 1, np.dtype(np.int8), np.dtype(np.int32), True)
INT16 = DataType("int16", 2, np.dtype(np.int16), np.dtype(np.int32), True)
INT32 = DataType("int32", 4, np.dtype(np.int32), np.dtype(np.int32), True)
FP16 = DataType("fp16", 2, np.dtype(np.float16), np.dtype(np.float32), False)
FP32 = DataType("fp32", 4, np.dtype(np.float32), np.dtype(np.float32), False)

DTYPES = {d.name: d for d in (INT8, INT16, INT32, FP16, FP32)}


def dtype_by_name(name: str) -> DataType:
    try:
        return DTYPES[name.lower()]
    except KeyError:
        raise InvalidInputError(f"unknown dtype {name!r}; expected one of {sorted(DTYPES)}")


@dataclass(frozen=True)
class TileGeometry:
    """One 4 KB tile: W rows by L columns of elements."""

    rows: int   # W
    cols: int   # L = PAGE_BYTES / (W * element_size)
    bytes: int  # always PAGE_BYTES


def tile_geometry(dtype: DataType, width: int = ARRAY_WIDTH) -> TileGeometry:
    """Tile shape for a dtype: int8 16x256, fp16/int16 16x128, fp32/int32 16x64."""
    cols = PAGE_BYTES // (width * dtype.element_size)
    if cols * width * dtype.element_size != PAGE_BYTES:
        raise InvalidInputError(
            f"width {width} with {dtype.name} does not evenly divide a {PAGE_BYTES}-byte page"
        )
    return TileGeometry(rows=width, cols=cols, bytes=PAGE_BYTES)
