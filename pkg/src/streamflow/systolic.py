"""Timing and value model of the W x W output-stationary systolic array.

Each PE accumulates one output element in place while A streams in from the
left and B from the top, skewed one cycle per row/column.  A tile pair with
reduction length L occupies the array for L + 2(W-1) cycles: L beats of input
plus the fill and drain wavefronts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dtypes import ARRAY_WIDTH, INT8, DataType
from .errors import DimensionError, InvalidInputError
from .gemm import multi_acc


@dataclass
class ArrayConfig:
    width: int = ARRAY_WIDTH          # W
    clock_hz: float = 1e9             # f
    dtype: DataType = field(default_factory=lambda: INT8)

    def __post_init__(self):
        if self.width < 1:
            raise InvalidInputError("array width must be >= 1")
        if self.clock_hz <= 0:
            raise InvalidInputError("clock must be positive")

    @property
    def macs_per_cycle(self) -> int:
        return self.width * self.width


def tile_compute_cycles(cfg: ArrayConfig, reduction_len: int) -> int:
    """Cycles to stream one tile pair: L + 2(W-1) fill/drain bubbles included."""
    if reduction_len < 1:
        raise InvalidInputError("reduction length must be >= 1")
    return reduction_len + 2 * (cfg.width - 1)


def peak_gops(cfg: ArrayConfig) -> float:
    """Peak throughput in ops/s, counting a MAC as 2 ops: 2 * W^2 * f."""
    return 2.0 * cfg.width * cfg.width * cfg.clock_hz


def wavefront_schedule(width: int, reduction_len: int):
    """Yield (cycle, row, col, k) for every MAC of the skewed schedule.

    PE (r, c) consumes reduction step k at cycle r + c + k; the result is
    complete one cycle after the last MAC, which structurally derives the
    L + 2(W-1) tile occupancy.
    """
    for k in range(reduction_len):
        for r in range(width):
            for c in range(width):
                yield r + c + k, r, c, k


def sa_compute_tile(a_tile: np.ndarray, b_tile: np.ndarray, c_block: np.ndarray) -> np.ndarray:
    """One output-stationary tile step: c_block + a_tile @ b_tile.

    The wavefront skew only changes when each PE fires, not its per-k
    accumulation order, so the value semantics equal the blocked-GEMM tile
    kernel on the same operands.
    """
    if a_tile.ndim != 2 or b_tile.ndim != 2 or c_block.ndim != 2:
        raise DimensionError("tile operands must be 2-D")
    w = c_block.shape[0]
    if c_block.shape != (w, w) or a_tile.shape[0] != w or b_tile.shape[1] != w:
        raise DimensionError(
            f"shape mismatch: A {a_tile.shape}, B {b_tile.shape}, C {c_block.shape}"
        )
    if a_tile.shape[1] != b_tile.shape[0]:
        raise DimensionError("reduction lengths differ")
    out = c_block.copy()
    multi_acc(a_tile, b_tile, out)
    return out
