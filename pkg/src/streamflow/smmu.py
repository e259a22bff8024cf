"""SMMU/IOMMU model: micro-TLB with LRU replacement and page-table walks.

Page-aligned tiles mean every tile transfer costs at most one translation.
A hit is one cycle; a miss pays the fixed walk latency plus the configured
number of page-table reads routed through the memory model, so walk time
rises when memory is loaded.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

from .dtypes import PAGE_BYTES, DataType
from .errors import InvalidInputError


@dataclass
class SmmuConfig:
    tlb_entries: int = 64
    page_bytes: int = PAGE_BYTES
    ptw_base_cycles: float = 250.0
    ptw_levels: int = 4
    ptw_memory_visits: int = 1   # uncached page-table reads per walk (walk caches absorb the rest)
    ptw_queue_weight: float = 0.15  # share of an in-flight bulk burst a walk waits out
    policy: str = "lru"          # lru | fifo

    def __post_init__(self):
        if self.tlb_entries < 1:
            raise InvalidInputError("TLB needs at least one entry")
        if self.page_bytes != PAGE_BYTES:
            raise InvalidInputError("tiles assume 4096-byte pages")
        if self.policy not in ("lru", "fifo"):
            raise InvalidInputError(f"unknown replacement policy {self.policy!r}")


@dataclass
class TranslationStats:
    lookups: int = 0
    misses: int = 0
    walks: int = 0
    translate_cycles: float = 0.0
    ptw_cycles: float = 0.0
    overhead_fraction: float = 0.0

    @property
    def mean_translate_cycles(self) -> float:
        return self.translate_cycles / self.lookups if self.lookups else 0.0

    @property
    def mean_ptw_cycles(self) -> float:
        return self.ptw_cycles / self.walks if self.walks else 0.0


class Tlb:
    """Micro-TLB state owned by a single simulation run."""

    def __init__(self, cfg: SmmuConfig):
        self.cfg = cfg
        self._entries: OrderedDict[int, None] = OrderedDict()
        self.stats = TranslationStats()

    def lookup(self, page_id: int) -> bool:
        """Probe and update the TLB; True on hit.  Misses install the entry
        with LRU (or FIFO) eviction.  Walk accounting is the caller's."""
        if page_id < 0:
            raise InvalidInputError("page id must be nonnegative")
        self.stats.lookups += 1
        if page_id in self._entries:
            if self.cfg.policy == "lru":
                self._entries.move_to_end(page_id)
            return True
        self.stats.misses += 1
        self._entries[page_id] = None
        if len(self._entries) > self.cfg.tlb_entries:
            self._entries.popitem(last=False)
        return False

    def record_walk(self, walk_cycles: float) -> None:
        self.stats.walks += 1
        self.stats.ptw_cycles += walk_cycles
        self.stats.translate_cycles += 1.0 + walk_cycles

    def record_hit(self) -> None:
        self.stats.translate_cycles += 1.0

    def translate(self, page_id: int, walk_cycles_fn=None) -> float:
        """Translate one page; returns the cycles spent.

        ``walk_cycles_fn`` supplies the memory-visit charge of a walk (the
        engine routes it through the DRAM queue); without it the walk costs
        the fixed base only.
        """
        if self.lookup(page_id):
            self.record_hit()
            return 1.0
        walk = self.cfg.ptw_base_cycles
        if walk_cycles_fn is not None:
            walk += walk_cycles_fn()
        self.record_walk(walk)
        return 1.0 + walk


def translate(page_id: int, state: Tlb, walk_cycles_fn=None) -> tuple[float, Tlb]:
    """Functional wrapper over Tlb.translate: returns (cycles, state)."""
    cycles = state.translate(page_id, walk_cycles_fn)
    return cycles, state


def footprint_pages(m: int, n: int, k: int, dtype: DataType) -> int:
    """Pages touched by an M x K * K x N GEMM: A + B + the accumulator-width C."""
    if m < 1 or n < 1 or k < 1:
        raise InvalidInputError("dims must be >= 1")
    s = dtype.element_size
    s_acc = dtype.accumulator_size
    pages_a = -(-(m * k * s) // PAGE_BYTES)
    pages_b = -(-(k * n * s) // PAGE_BYTES)
    pages_c = -(-(m * n * s_acc) // PAGE_BYTES)
    return pages_a + pages_b + pages_c


def stats_report(state: Tlb) -> TranslationStats:
    """Counters for a completed run; misses <= lookups and walks <= misses hold."""
    st = state.stats
    assert st.misses <= st.lookups and st.walks <= st.misses
    return st
