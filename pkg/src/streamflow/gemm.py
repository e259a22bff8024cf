"""Functional blocked GEMM over page-aligned 4 KB tiles.

The accelerator operates on matrices reorganized into 4096-byte tiles: A tiles
are W x L row-major blocks, B tiles are L x W blocks stored contiguously by
rows of B ("row-striped") so that fetching an output-column block of B is one
sequential page read instead of a strided column walk.  Results accumulate in
32-bit (int32 for integer inputs, float32 for float inputs); fp16 results are
rounded to nearest-even on the final store.  Integer accumulation wraps in
two's complement, which is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dtypes import ARRAY_WIDTH, PAGE_BYTES, DataType, tile_geometry
from .errors import DimensionError, InvalidInputError, LayoutError


class Layout(Enum):
    A_LAYOUT = "A"   # W x L row-major blocks of the left operand
    B_LAYOUT = "B"   # L x W row-striped blocks of the right operand


@dataclass
class Matrix:
    """Dense row-major matrix with an accelerator element type."""

    data: np.ndarray
    dtype: DataType

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=self.dtype.np_dtype)
        if self.data.ndim != 2:
            raise InvalidInputError("matrix data must be 2-D")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InvalidInputError("matrix dimensions must be >= 1")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass
class TiledMatrix:
    """A matrix repacked into page-aligned 4096-byte tiles.

    ``tiles[r, c]`` is one page.  For A_LAYOUT the grid is indexed by
    (row block i, reduction block k); for B_LAYOUT by (output-column
    block j, reduction block k).  Padding slack is zero-filled.
    """

    source_dims: tuple[int, int]      # matrix shape before padding
    grid_dims: tuple[int, int]
    layout: Layout
    tiles: np.ndarray                 # uint8, shape (grid_rows, grid_cols, PAGE_BYTES)
    dtype: DataType

    def __post_init__(self):
        if self.tiles.shape != (*self.grid_dims, PAGE_BYTES):
            raise InvalidInputError("tile buffer shape does not match grid dims")

    def tile_bytes(self, r: int, c: int) -> np.ndarray:
        return self.tiles[r, c]

    def tile_block(self, r: int, c: int) -> np.ndarray:
        """Decode one page into its element block (W x L for A, L x W for B)."""
        geo = tile_geometry(self.dtype)
        shape = (geo.rows, geo.cols) if self.layout is Layout.A_LAYOUT else (geo.cols, geo.rows)
        return self.tiles[r, c].view(self.dtype.np_dtype).reshape(shape)


def _pad_to(m: np.ndarray, rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols), dtype=m.dtype)
    out[: m.shape[0], : m.shape[1]] = m
    return out


def pack_a(m: Matrix) -> TiledMatrix:
    """Repack the left operand into W x L row-major page tiles, zero-padding slack."""
    geo = tile_geometry(m.dtype)
    w, l = geo.rows, geo.cols
    gr = -(-m.rows // w)
    gc = -(-m.cols // l)
    padded = _pad_to(m.data, gr * w, gc * l)
    # (gr*w, gc*l) -> (gr, gc, w, l) -> raw pages
    blocks = padded.reshape(gr, w, gc, l).transpose(0, 2, 1, 3)
    tiles = np.ascontiguousarray(blocks).reshape(gr, gc, -1).view(np.uint8)
    tiles = tiles.reshape(gr, gc, PAGE_BYTES)
    return TiledMatrix((m.rows, m.cols), (gr, gc), Layout.A_LAYOUT, tiles, m.dtype)


def pack_b(m: Matrix) -> TiledMatrix:
    """Repack the right operand row-striped: tile (j, k) holds B rows k*L..k*L+L-1
    of output-column block j, stored by rows of B so one tile is one contiguous page."""
    geo = tile_geometry(m.dtype)
    w, l = geo.rows, geo.cols
    gr = -(-m.cols // w)   # output-column blocks
    gc = -(-m.rows // l)   # reduction blocks
    padded = _pad_to(m.data, gc * l, gr * w)
    # (gc*l, gr*w) -> (gc, l, gr, w) -> tile (j, k) = L x W sub-block, row-of-B major
    blocks = padded.reshape(gc, l, gr, w).transpose(2, 0, 1, 3)
    tiles = np.ascontiguousarray(blocks).reshape(gr, gc, -1).view(np.uint8)
    tiles = tiles.reshape(gr, gc, PAGE_BYTES)
    return TiledMatrix((m.rows, m.cols), (gr, gc), Layout.B_LAYOUT, tiles, m.dtype)


def unpack(t: TiledMatrix) -> Matrix:
    """Exact inverse of pack_a / pack_b on the unpadded region."""
    geo = tile_geometry(t.dtype)
    w, l = geo.rows, geo.cols
    gr, gc = t.grid_dims
    rows, cols = t.source_dims
    if t.layout is Layout.A_LAYOUT:
        if gr * w < rows or gc * l < cols:
            raise InvalidInputError("grid dims do not cover source dims")
        elems = t.tiles.reshape(gr, gc, -1).view(t.dtype.np_dtype).reshape(gr, gc, w, l)
        full = elems.transpose(0, 2, 1, 3).reshape(gr * w, gc * l)
        return Matrix(full[:rows, :cols].copy(), t.dtype)
    else:
        if gc * l < rows or gr * w < cols:
            raise InvalidInputError("grid dims do not cover source dims")
        elems = t.tiles.reshape(gr, gc, -1).view(t.dtype.np_dtype).reshape(gr, gc, l, w)
        full = elems.transpose(1, 2, 0, 3).reshape(gc * l, gr * w)
        return Matrix(full[:rows, :cols].copy(), t.dtype)


def _result_np_dtype(dtype: DataType) -> np.dtype:
    # int results stay in the 32-bit accumulator; fp16 rounds back on store
    return dtype.np_dtype if not dtype.is_integer else dtype.np_accumulator


def multi_acc(a_block: np.ndarray, b_block: np.ndarray, acc: np.ndarray) -> np.ndarray:
    """acc += a_block @ b_block in the accumulator dtype.  Shared by the blocked
    GEMM and the systolic-array model so both produce bit-identical values."""
    acc += a_block.astype(acc.dtype, copy=False) @ b_block.astype(acc.dtype, copy=False)
    return acc


def naive_gemm(a: Matrix, b: Matrix) -> Matrix:
    """Reference product with the dtype's accumulator; the oracle for equivalence tests.

    Element [i, j] is the K-term dot product accumulated in int32 (wrapping) or
    float32, identical in value semantics to a triple loop at that precision.
    """
    if a.dtype != b.dtype:
        raise DimensionError("operand dtypes differ")
    if a.cols != b.rows:
        raise DimensionError(f"inner dims differ: {a.cols} vs {b.rows}")
    acc_t = a.dtype.np_accumulator
    out = a.data.astype(acc_t) @ b.data.astype(acc_t)
    return Matrix(out.astype(_result_np_dtype(a.dtype)), _result_dtype(a.dtype))


def _result_dtype(dtype: DataType) -> DataType:
    from .dtypes import INT32
    return INT32 if dtype.is_integer else dtype


def block_matrix_multiply(a: TiledMatrix, b: TiledMatrix) -> Matrix:
    """Tile-blocked GEMM: i-j-k loops over the tile grids, one W x W accumulator
    block per (i, j) zeroed up front and written back once after the k loop."""
    if a.layout is not Layout.A_LAYOUT or b.layout is not Layout.B_LAYOUT:
        raise LayoutError("left operand must be A-layout and right operand B-layout")
    if a.dtype != b.dtype:
        raise DimensionError("operand dtypes differ")
    m, k_a = a.source_dims
    k_b, n = b.source_dims
    if k_a != k_b:
        raise DimensionError(f"reduction dims differ: {k_a} vs {k_b}")
    if a.grid_dims[1] != b.grid_dims[1]:
        raise DimensionError("tile grids disagree on reduction block count")

    geo = tile_geometry(a.dtype)
    w = geo.rows
    acc_t = a.dtype.np_accumulator
    gi, gk = a.grid_dims
    gj = b.grid_dims[0]

    a_blocks = a.tiles.reshape(gi, gk, -1).view(a.dtype.np_dtype).reshape(gi, gk, w, geo.cols)
    b_blocks = b.tiles.reshape(gj, gk, -1).view(b.dtype.np_dtype).reshape(gj, gk, geo.cols, w)

    out = np.empty((gi * w, gj * w), dtype=acc_t)
    for i in range(gi):
        for j in range(gj):
            block = np.zeros((w, w), dtype=acc_t)
            for k in range(gk):
                multi_acc(a_blocks[i, k], b_blocks[j, k], block)
            out[i * w : (i + 1) * w, j * w : (j + 1) * w] = block
    res = out[:m, :n].astype(_result_np_dtype(a.dtype))
    return Matrix(res, _result_dtype(a.dtype))


@dataclass(frozen=True)
class TraceEvent:
    kind: str   # read_a | read_b | compute | write_c
    i: int      # output row block
    j: int      # output column block
    k: int      # reduction block (-1 for write_c)


@dataclass
class TileAccessTrace:
    grid_i: int
    grid_j: int
    grid_k: int
    events: list[TraceEvent]

    @property
    def compute_events(self) -> int:
        return self.grid_i * self.grid_j * self.grid_k


def trace_tile_accesses(a: TiledMatrix, b: TiledMatrix) -> TileAccessTrace:
    """Ordered tile-access trace of the blocked GEMM; feeds the timing engine.

    Every A tile (i, k) is read grid_j times, every B tile (j, k) grid_i times,
    and each C block (i, j) is written exactly once after its k loop.
    """
    if a.layout is not Layout.A_LAYOUT or b.layout is not Layout.B_LAYOUT:
        raise LayoutError("left operand must be A-layout and right operand B-layout")
    if a.grid_dims[1] != b.grid_dims[1]:
        raise DimensionError("tile grids disagree on reduction block count")
    gi, gk = a.grid_dims
    gj = b.grid_dims[0]
    events = []
    for i in range(gi):
        for j in range(gj):
            for k in range(gk):
                events.append(TraceEvent("read_a", i, j, k))
                events.append(TraceEvent("read_b", i, j, k))
                events.append(TraceEvent("compute", i, j, k))
            events.append(TraceEvent("write_c", i, j, -1))
    return TileAccessTrace(gi, gj, gk, events)
