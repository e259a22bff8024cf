"""DRAM technology presets, host/device placement, LLC model, and a
latency + bandwidth service model.

DRAM is a single-server queue (fixed latency plus bytes over bandwidth plus
waiting behind earlier requests), not a bank-level model: the workload is
bandwidth-bound, so row-buffer detail buys nothing here.  The LLC is a
set-associative LRU hit/miss classifier probed at 64 B line granularity.
"""

from __future__ import annotations

import json
import os
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .dtypes import PAGE_BYTES
from .errors import InvalidInputError

MEMORY_TECH_SCHEMA = 1


class Placement(Enum):
    HOST_VIA_LINK = "host"
    DEVICE_LOCAL = "device"


@dataclass(frozen=True)
class MemoryTech:
    name: str
    channels: int
    data_width_bits: int
    bandwidth_gbps: float
    data_rate_mtps: float
    fixed_latency_ns: float = 12.0

    def __post_init__(self):
        if self.bandwidth_gbps <= 0:
            raise InvalidInputError("memory bandwidth must be positive")

    @property
    def bytes_per_ns(self) -> float:
        return self.bandwidth_gbps  # 1 GB/s == 1 byte/ns


def _preset_dir() -> str | None:
    return os.environ.get("STREAMFLOW_PRESET_DIR")


def load_tech_table() -> dict[str, MemoryTech]:
    """Preset table from the versioned fixture file (STREAMFLOW_PRESET_DIR overrides)."""
    override = _preset_dir()
    path = os.path.join(override, "memory_tech.json") if override else None
    if path and os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raw = json.loads(
            resources.files("streamflow.presets").joinpath("memory_tech.json").read_text()
        )
    if raw.get("schema_version") != MEMORY_TECH_SCHEMA:
        raise InvalidInputError(
            f"memory tech fixture schema {raw.get('schema_version')} != {MEMORY_TECH_SCHEMA}"
        )
    return {
        name: MemoryTech(name=name, **fields) for name, fields in raw["techs"].items()
    }


def tech_preset(name: str) -> MemoryTech:
    table = load_tech_table()
    key = name.upper()
    if key not in table:
        raise InvalidInputError(f"unknown memory tech {name!r}; expected one of {sorted(table)}")
    return table[key]


class MemoryServer:
    """Queueing state for one DRAM channel group.

    Reads and posted writes drain through separate ports (write buffering
    decouples them), each a single FIFO server: requests on a port must be
    issued in nondecreasing arrival order."""

    def __init__(self, tech: MemoryTech):
        self.tech = tech
        self.next_free_ns = 0.0
        self.write_next_free_ns = 0.0
        self.busy_ns = 0.0
        self.read_bytes = 0
        self.write_bytes = 0

    def service_ns(self, nbytes: int) -> float:
        return self.tech.fixed_latency_ns + nbytes / self.tech.bytes_per_ns

    def access(self, now_ns: float, nbytes: int, is_write: bool = False) -> float:
        """Serve a request arriving at now_ns; returns its completion time."""
        if nbytes < 1:
            raise InvalidInputError("memory access must move at least one byte")
        start = max(now_ns, self.write_next_free_ns if is_write else self.next_free_ns)
        done = start + self.service_ns(nbytes)
        if is_write:
            self.write_next_free_ns = done
            self.write_bytes += nbytes
        else:
            self.next_free_ns = done
            self.read_bytes += nbytes
        self.busy_ns += done - start
        return done

    def queue_delay_ns(self, now_ns: float) -> float:
        return max(0.0, self.next_free_ns - now_ns)

    def load_factor(self, now_ns: float) -> float:
        """Fraction of time served so far; the congestion signal for priority traffic."""
        return min(1.0, self.busy_ns / now_ns) if now_ns > 0 else 0.0

    def priority_access(self, now_ns: float, nbytes: int, queue_weight: float = 0.25,
                        residual_bytes: int = PAGE_BYTES) -> float:
        """Small high-priority read (page-table walk) that slips into scheduling
        gaps: pays service time plus a load-weighted share of an in-progress
        bulk burst, and does not delay the bulk stream."""
        self.read_bytes += nbytes
        wait = queue_weight * self.load_factor(now_ns) * self.service_ns(residual_bytes)
        return now_ns + self.service_ns(nbytes) + wait


def service_time(nbytes: int, tech: MemoryTech, queue_state: MemoryServer | None = None,
                 now_ns: float = 0.0) -> float:
    """Cycles (ns at 1 GHz) for one access: fixed latency + bytes/bandwidth + queueing."""
    if nbytes < 1:
        raise InvalidInputError("access must move at least one byte")
    base = tech.fixed_latency_ns + nbytes / tech.bytes_per_ns
    if queue_state is None:
        return base
    return base + queue_state.queue_delay_ns(now_ns)


@dataclass
class LlcConfig:
    size_bytes: int = 2 * 1024 * 1024
    ways: int = 16
    line_bytes: int = 64
    hit_latency_cycles: float = 2.0
    inclusive: bool = True
    write_allocate: bool = True

    def __post_init__(self):
        if self.size_bytes % (self.ways * self.line_bytes):
            raise InvalidInputError("LLC size must divide into ways * line_bytes")

    @property
    def num_sets(self) -> int:
        return self.size_bytes // (self.ways * self.line_bytes)


class Llc:
    """Set-associative LRU cache classifier, probed per 64 B line."""

    def __init__(self, cfg: LlcConfig):
        self.cfg = cfg
        self._sets: list[OrderedDict[int, None]] = [OrderedDict() for _ in range(cfg.num_sets)]
        self.hits = 0
        self.misses = 0

    def access(self, line_addr: int, is_write: bool = False) -> bool:
        """True on hit.  Misses allocate (writes too, under write-allocate)."""
        set_idx = line_addr % self.cfg.num_sets
        ways = self._sets[set_idx]
        if line_addr in ways:
            ways.move_to_end(line_addr)
            self.hits += 1
            return True
        self.misses += 1
        if not is_write or self.cfg.write_allocate:
            ways[line_addr] = None
            if len(ways) > self.cfg.ways:
                ways.popitem(last=False)
        return False


def llc_access(line_addr: int, state: Llc, tech: MemoryTech | None = None,
               queue_state: MemoryServer | None = None, now_ns: float = 0.0,
               is_write: bool = False):
    """Classify one line access; hits cost hit latency, misses forward to service_time."""
    hit = state.access(line_addr, is_write=is_write)
    if hit:
        return "hit", state.cfg.hit_latency_cycles, state
    cycles = state.cfg.hit_latency_cycles
    if tech is not None:
        cycles += service_time(state.cfg.line_bytes, tech, queue_state, now_ns)
    return "miss", cycles, state


class PageLlc:
    """Whole-page view of the LLC used by the tile engine.

    DMA traffic touches entire 4 KB tiles, so the 64 lines of a page always
    move together: a page maps onto 64 consecutive sets, and the cache
    degenerates into groups of 64 sets holding 16 pages each with page-level
    LRU.  This is exactly equivalent to probing the line-level model with
    whole-page traffic (see tests) and is O(1) per tile.
    """

    def __init__(self, cfg: LlcConfig):
        self.cfg = cfg
        lines_per_page = PAGE_BYTES // cfg.line_bytes
        self.num_groups = max(1, cfg.num_sets // lines_per_page)
        self.pages_per_group = cfg.ways
        self._groups: list[OrderedDict[int, None]] = [OrderedDict() for _ in range(self.num_groups)]
        self.hits = 0
        self.misses = 0

    def access_page(self, page_id: int, is_write: bool = False) -> bool:
        group = self._groups[page_id % self.num_groups]
        if page_id in group:
            group.move_to_end(page_id)
            self.hits += 1
            return True
        self.misses += 1
        if not is_write or self.cfg.write_allocate:
            group[page_id] = None
            if len(group) > self.pages_per_group:
                group.popitem(last=False)
        return False
