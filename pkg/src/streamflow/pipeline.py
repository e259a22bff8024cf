"""Deterministic pipeline engine: overlapped DMA-in(A/B), systolic compute,
and DMA-out(C) with double buffering, across the three memory-access modes,
plus the analytic overlap-bound / roofline layer.

The schedule is a feed-forward dependency recurrence evaluated in tile order
(reads before compute before writes, lower tile index first), which is the
discrete-event schedule of this pipeline DAG with the documented tie-break
baked into the iteration order.  All state is per-run; repeated runs of the
same config produce bit-identical reports.

Timeline bookkeeping is in nanoseconds; reported cycles are at the array
clock.  Control costs (descriptor build, doorbell, MSI handling) are charged
as a serial inter-step handshake on the launch path: transfers overlap
compute, but each tile launch waits for the previous tile's completion
processing, which is where the loosely-coupled control overhead lives.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

from .dtypes import PAGE_BYTES, DataType, dtype_by_name, tile_geometry
from .errors import ConfigError, InvalidInputError, InvariantError
from .link import DmaConfig, LinkConfig, packet_count, raw_bandwidth, serialize_time_ns
from .memory import LlcConfig, MemoryServer, MemoryTech, PageLlc, Placement, tech_preset
from .smmu import SmmuConfig, Tlb, TranslationStats, footprint_pages
from .systolic import ArrayConfig, tile_compute_cycles

SIM_SCHEMA_VERSION = 1


class AccessMode(Enum):
    DM = "dm"          # link -> smmu -> host DRAM
    DC = "dc"          # link -> smmu -> LLC -> membus -> DRAM on miss
    DEVMEM = "devmem"  # device-local DRAM, no link traffic for operands

    @property
    def path(self) -> tuple[str, ...]:
        return {
            AccessMode.DM: ("link", "smmu", "dram"),
            AccessMode.DC: ("link", "smmu", "llc", "membus", "dram-on-miss"),
            AccessMode.DEVMEM: ("device-dram",),
        }[self]


@dataclass
class SystemConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    dma: DmaConfig = field(default_factory=DmaConfig)
    smmu: SmmuConfig = field(default_factory=SmmuConfig)
    host_mem: MemoryTech = field(default_factory=lambda: tech_preset("DDR3"))
    device_mem: MemoryTech = field(default_factory=lambda: tech_preset("HBM2"))
    llc: LlcConfig = field(default_factory=LlcConfig)
    mode: AccessMode = AccessMode.DM
    eta_io: float = 1.0
    eta_sa: float = 1.0
    c_drain: str = "block"       # block | page (see SimReport.c_drain)
    control_scale: float = 1.0   # calibration multiplier on DMA control costs

    def __post_init__(self):
        if not (0.0 < self.eta_io <= 1.0) or not (0.0 < self.eta_sa <= 1.0):
            raise ConfigError("eta factors must lie in (0, 1]")
        if self.c_drain not in ("block", "page"):
            raise ConfigError("c_drain must be 'block' or 'page'")
        if self.control_scale < 0:
            raise ConfigError("control_scale must be nonnegative")

    @property
    def operand_placement(self) -> Placement:
        return Placement.DEVICE_LOCAL if self.mode is AccessMode.DEVMEM else Placement.HOST_VIA_LINK


@dataclass
class LatencyBreakdown:
    """Cycles attributed to the message-sequence buckets; sums to the total."""

    fetch: float = 0.0        # DMA engine issue/slot waits not covered below
    link_txn: float = 0.0     # packet serialization + propagation
    translation: float = 0.0  # SMMU lookups and walks
    llc_bus: float = 0.0      # LLC probe / on-chip bus (DC mode)
    dram: float = 0.0         # memory service incl. queueing
    compute: float = 0.0      # systolic array busy
    control: float = 0.0      # descriptors, doorbells, completion handling

    def total(self) -> float:
        return (self.fetch + self.link_txn + self.translation + self.llc_bus
                + self.dram + self.compute + self.control)

    def as_dict(self) -> dict[str, float]:
        return {
            "fetch": self.fetch, "link_txn": self.link_txn,
            "translation": self.translation, "llc_bus": self.llc_bus,
            "dram": self.dram, "compute": self.compute, "control": self.control,
        }


@dataclass
class SimReport:
    schema_version: int
    config_hash: str
    m: int
    n: int
    k: int
    dtype: str
    mode: str
    c_drain: str
    total_cycles: float          # at the array clock
    total_ns: float
    breakdown: LatencyBreakdown  # in array-clock cycles
    translation: TranslationStats
    footprint_pages: int
    packets: int
    descriptors: int
    interrupts: int
    link_read_bytes: int
    link_write_bytes: int
    mem_read_bytes: int
    mem_write_bytes: int
    llc_hits: int
    llc_misses: int
    eta_io_measured: float
    eta_sa_measured: float
    steady_idle_cycles: float        # mean compute gap per step, steady-state window
    mean_tile_transfer_cycles: float  # summed-direction link occupancy per tile step

    @property
    def total_seconds(self) -> float:
        return self.total_ns * 1e-9


def overlap_bound(width: int, clock_hz: float, elem_bytes: float, reduction_len: int,
                  eta_io: float = 1.0, eta_sa: float = 1.0) -> float:
    """Link bandwidth (bytes/s) at which per-tile transfer just matches compute:
    S*f*(2WL + W^2) / (L + 2(W-1)) scaled by eta_sa/eta_io."""
    if width < 1 or clock_hz <= 0 or elem_bytes <= 0 or reduction_len < 1:
        raise InvalidInputError("bound arguments must be positive")
    if not (0 < eta_io <= 1) or not (0 < eta_sa <= 1):
        raise InvalidInputError("eta factors must lie in (0, 1]")
    w, l = width, reduction_len
    return elem_bytes * clock_hz * (2 * w * l + w * w) / (l + 2 * (w - 1)) * (eta_sa / eta_io)


def overlap_bound_asymptote(width: int, clock_hz: float, elem_bytes: float) -> float:
    """L -> infinity limit of the bound: 2*W*S*f."""
    return 2.0 * width * elem_bytes * clock_hz


def srams_sensitivity(cfg: SystemConfig, l_multiplier: float) -> dict[str, float]:
    """Relative movement of the overlap bound when the tile reduction length
    grows by l_multiplier (larger on-chip pages)."""
    if l_multiplier < 1:
        raise InvalidInputError("multiplier must be >= 1")
    geo = tile_geometry(cfg.array.dtype, cfg.array.width)
    base = overlap_bound(cfg.array.width, cfg.array.clock_hz, cfg.array.dtype.element_size,
                         geo.cols, cfg.eta_io, cfg.eta_sa)
    if math.isinf(l_multiplier):
        scaled = overlap_bound_asymptote(cfg.array.width, cfg.array.clock_hz,
                                         cfg.array.dtype.element_size)
    else:
        scaled = overlap_bound(cfg.array.width, cfg.array.clock_hz, cfg.array.dtype.element_size,
                               int(round(geo.cols * l_multiplier)), cfg.eta_io, cfg.eta_sa)
    return {
        "bound_gbps": base / 1e9,
        "scaled_bound_gbps": scaled / 1e9,
        "relative_change": scaled / base - 1.0,
    }


# ---------------------------------------------------------------------------
# Event engine
# ---------------------------------------------------------------------------

class _Transfer:
    """Completion time of one tile fetch plus its chain segments for attribution."""

    __slots__ = ("done", "fetch", "translation", "llc", "dram", "link")

    def __init__(self, done, fetch=0.0, translation=0.0, llc=0.0, dram=0.0, link=0.0):
        self.done = done
        self.fetch = fetch
        self.translation = translation
        self.llc = llc
        self.dram = dram
        self.link = link


_RESIDENT = _Transfer(0.0)


class _Engine:
    def __init__(self, m: int, n: int, k: int, dtype: DataType, cfg: SystemConfig):
        if m < 1 or n < 1 or k < 1:
            raise InvalidInputError("GEMM dims must be >= 1")
        self.cfg = cfg
        self.dtype = dtype
        geo = tile_geometry(dtype, cfg.array.width)
        self.geo = geo
        self.gi = -(-m // geo.rows)
        self.gj = -(-n // geo.rows)
        self.gk = -(-k // geo.cols)
        self.dims = (m, n, k)

        self.f_ns = cfg.array.clock_hz * 1e-9          # array cycles per ns
        self.tile_ns = tile_compute_cycles(cfg.array, geo.cols) / self.f_ns
        self.c_block_bytes = geo.rows * geo.rows * dtype.accumulator_size
        self.c_blocks_per_page = max(1, PAGE_BYTES // self.c_block_bytes)

        # page id spaces: A, then B, then C
        self.base_b = self.gi * self.gk
        self.base_c = self.base_b + self.gj * self.gk

        mode = cfg.mode
        self.over_link = mode is not AccessMode.DEVMEM
        self.operand_mem = MemoryServer(cfg.device_mem if mode is AccessMode.DEVMEM
                                        else cfg.host_mem)
        self.ptw_mem = self.operand_mem if self.over_link else MemoryServer(cfg.host_mem)
        self.llc = PageLlc(cfg.llc) if mode is AccessMode.DC else None
        self.tlb = Tlb(cfg.smmu)

        nrd = cfg.dma.read_channels
        self.read_free = [0.0] * nrd
        self.write_free = [0.0] * cfg.dma.write_channels
        # TLB lookups pipeline; walks serialize on a walker context.  Read and
        # write streams each arrive time-ordered but not with respect to each
        # other, so they use separate contexts (real walkers are multi-context).
        self.walker_free = [0.0, 0.0]

        self.link_read_bytes = 0
        self.link_write_bytes = 0
        self.llc_hit_bytes = 0
        self.llc_write_hit_bytes = 0
        self.packets = 0
        self.descriptors = 0
        self.interrupts = 0
        self.link_busy_read_ns = 0.0
        self.compute_busy_ns = 0.0

        self.bd_ns = LatencyBreakdown()
        self.gaps = []                  # per-step compute gap, ns
        self.prev_tile = {"a": None, "b": None}
        self.prev_done = {"a": _RESIDENT, "b": _RESIDENT}
        self.block_write_done: list[float] = []
        self.page_pending_blocks = 0
        self.page_first_ready = 0.0

    # -- resource chains ----------------------------------------------------

    def _walk_fn_at(self, when: float):
        visits = self.cfg.smmu.ptw_memory_visits
        if visits <= 0:
            return None
        weight = self.cfg.smmu.ptw_queue_weight

        def walk() -> float:
            now = when
            for _ in range(visits):
                now = self.ptw_mem.priority_access(now, self.cfg.llc.line_bytes, weight)
            return now - when

        return walk

    def _translate(self, page_id: int, ready: float, ctx: int = 0) -> tuple[float, float]:
        """One translation; returns (done_time, latency for attribution).

        Lookups are pipelined (1 cycle); misses queue on a walker context.
        Walk accounting counts walker busy time only."""
        if self.tlb.lookup(page_id):
            self.tlb.record_hit()
            return ready + 1.0, 1.0
        walk_start = max(ready + 1.0, self.walker_free[ctx])
        walk = self.cfg.smmu.ptw_base_cycles
        fn = self._walk_fn_at(walk_start)
        if fn is not None:
            walk += fn()
        done = walk_start + walk
        self.walker_free[ctx] = done
        self.tlb.record_walk(walk)
        return done, done - ready

    def _fetch_tile(self, operand: str, tile_id: int, page_id: int, slot_free: float,
                    kickoff: float) -> tuple[_Transfer, bool]:
        """Issue one tile read; returns (completion + attribution segments, fetched)."""
        if self.cfg.dma.skip_resident_tiles and self.prev_tile[operand] == tile_id:
            return self.prev_done[operand], False  # resident in the active buffer, no DMA
        cfg = self.cfg
        issue = max(slot_free, kickoff)
        self.descriptors += 1

        if not self.over_link:
            done = self.operand_mem.access(issue, PAGE_BYTES)
            tr = _Transfer(done, dram=done - issue)
        else:
            t_done, t_cost = self._translate(page_id, issue)
            llc_ns = 0.0
            if self.llc is not None:
                lines = PAGE_BYTES // cfg.llc.line_bytes
                llc_ns = lines * cfg.llc.hit_latency_cycles
                if self.llc.access_page(page_id):
                    self.llc_hit_bytes += PAGE_BYTES
                    mem_done = t_done + llc_ns
                    mem_span = 0.0
                else:
                    mem_done = self.operand_mem.access(t_done + llc_ns, PAGE_BYTES)
                    mem_span = mem_done - (t_done + llc_ns)
            else:
                mem_done = self.operand_mem.access(t_done, PAGE_BYTES)
                mem_span = mem_done - t_done
            ch = 0 if operand == "a" else (cfg.dma.read_channels - 1)
            ser_start = max(mem_done, self.read_free[ch])
            ser = serialize_time_ns(cfg.link, PAGE_BYTES)
            ser_done = ser_start + ser
            self.read_free[ch] = ser_done
            self.link_busy_read_ns += ser
            done = ser_done + cfg.link.link_latency_ns
            self.link_read_bytes += PAGE_BYTES
            self.packets += packet_count(cfg.link, PAGE_BYTES)
            tr = _Transfer(done, fetch=max(0.0, ser_start - mem_done),
                           translation=t_cost, llc=llc_ns, dram=mem_span,
                           link=ser + cfg.link.link_latency_ns)
        self.prev_tile[operand] = tile_id
        self.prev_done[operand] = tr
        return tr, True

    def _drain_c(self, page_id: int, nbytes: int, ready: float) -> float:
        """Write accumulated output back; returns completion time."""
        cfg = self.cfg
        self.descriptors += 1
        if not self.over_link:
            return self.operand_mem.access(ready, nbytes, is_write=True)
        ch = len(self.write_free) - 1
        ser_start = max(ready, self.write_free[ch])
        ser_done = ser_start + serialize_time_ns(cfg.link, nbytes)
        self.write_free[ch] = ser_done
        self.link_write_bytes += nbytes
        self.packets += packet_count(cfg.link, nbytes)
        arrival = ser_done + cfg.link.link_latency_ns
        t_done, _ = self._translate(page_id, arrival, ctx=1)
        if self.llc is not None and self.llc.access_page(page_id, is_write=True):
            self.llc_write_hit_bytes += nbytes  # dirty hit absorbed by the LLC
            return t_done + cfg.llc.hit_latency_cycles
        return self.operand_mem.access(t_done, nbytes, is_write=True)

    def _ctrl_ns(self, n_desc: int) -> float:
        d = self.cfg.dma
        return self.cfg.control_scale * (
            d.descriptor_cycles * n_desc + d.doorbell_cycles + d.interrupt_cycles
        )

    # -- gap attribution ----------------------------------------------------

    def _attribute_wait(self, wait: float, tr: _Transfer):
        """Carve a compute wait backwards along the gating transfer's chain."""
        bd = self.bd_ns
        for bucket, span in (("link_txn", tr.link), ("dram", tr.dram),
                             ("llc_bus", tr.llc), ("translation", tr.translation)):
            if wait <= 0:
                return
            part = min(wait, span)
            setattr(bd, bucket, getattr(bd, bucket) + part)
            wait -= part
        if wait > 0:
            bd.fetch += wait

    # -- main loop ----------------------------------------------------------

    def run(self) -> SimReport:
        cfg = self.cfg
        gi, gj, gk = self.gi, self.gj, self.gk
        n_steps = gi * gj * gk
        inflight = cfg.dma.inflight_tiles
        done_ring = [0.0] * inflight   # compute completion, inflight steps back
        prev_done = 0.0
        t_init_gate = 0.0
        last_write_done = 0.0
        step = 0

        for i in range(gi):
            for j in range(gj):
                block_idx = i * gj + j
                drains_now = (cfg.c_drain == "block")
                for k in range(gk):
                    a_id = i * gk + k
                    b_id = self.base_b + j * gk + k
                    slot_free = done_ring[step % inflight] if step >= inflight else t_init_gate
                    a_tr, a_new = self._fetch_tile("a", a_id, a_id, slot_free, t_init_gate)
                    b_tr, b_new = self._fetch_tile("b", b_id, b_id, slot_free, t_init_gate)

                    is_last_k = k == gk - 1
                    n_desc = int(a_new) + int(b_new) + (1 if is_last_k and drains_now else 0)
                    ctrl = self._ctrl_ns(n_desc)
                    self.interrupts += 1

                    gate = prev_done + ctrl
                    start = max(gate, a_tr.done, b_tr.done)
                    c_gate = self._c_slot_gate(block_idx, k)
                    if c_gate > start:
                        start = c_gate
                    done = start + self.tile_ns
                    gap = start - prev_done
                    self.compute_busy_ns += self.tile_ns
                    self.bd_ns.compute += self.tile_ns
                    self.bd_ns.control += min(ctrl, gap)
                    wait = gap - min(ctrl, gap)
                    if wait > 0:
                        gating = a_tr if a_tr.done >= b_tr.done else b_tr
                        if c_gate == start and c_gate > max(a_tr.done, b_tr.done):
                            self.bd_ns.link_txn += wait  # stalled on output drain
                        else:
                            self._attribute_wait(wait, gating)
                    if step > 0:
                        self.gaps.append(gap)
                    done_ring[step % inflight] = done
                    prev_done = done
                    step += 1

                # output block complete
                last_write_done = self._finish_block(i, j, block_idx, prev_done, last_write_done)

        total = max(prev_done, last_write_done)
        epilogue = total - prev_done
        self.bd_ns.link_txn += epilogue  # final drain charged to the link bucket
        return self._report(total, n_steps)

    def _c_slot_gate(self, block_idx: int, k: int) -> float:
        if k != 0:
            return 0.0
        if self.cfg.c_drain == "block":
            slots = self.c_blocks_per_page
            if block_idx >= slots:
                return self.block_write_done[block_idx - slots]
        else:
            pages_behind = block_idx // self.c_blocks_per_page
            if pages_behind >= 1:
                idx = pages_behind * self.c_blocks_per_page - 1
                return self.block_write_done[idx]
        return 0.0

    def _finish_block(self, i: int, j: int, block_idx: int, compute_done: float,
                      last_write_done: float) -> float:
        page_id = self.base_c + (block_idx * self.c_block_bytes) // PAGE_BYTES
        if self.cfg.c_drain == "block":
            done = self._drain_c(page_id, self.c_block_bytes, compute_done)
            self.block_write_done.append(done)
            return max(last_write_done, done)
        # page mode: drain once the page's worth of blocks is complete
        self.page_pending_blocks += 1
        full = self.page_pending_blocks == self.c_blocks_per_page
        at_end = block_idx == self.gi * self.gj - 1
        if full or at_end:
            nbytes = self.page_pending_blocks * self.c_block_bytes
            done = self._drain_c(page_id, nbytes, compute_done)
            for _ in range(self.page_pending_blocks):
                self.block_write_done.append(done)
            self.page_pending_blocks = 0
            return max(last_write_done, done)
        self.block_write_done.append(0.0)
        return last_write_done

    def _report(self, total_ns: float, n_steps: int) -> SimReport:
        cfg = self.cfg
        self._check_conservation()
        stats = self.tlb.stats
        # walks serialize, so walk time <= wall time; the pipelined 1-cycle
        # lookups can nudge the ratio a hair past 1 at walker saturation
        stats.overhead_fraction = min(1.0, stats.translate_cycles / total_ns) if total_ns else 0.0
        f_ghz = cfg.array.clock_hz * 1e-9
        bd = self.bd_ns
        cycles = LatencyBreakdown(**{name: v * f_ghz for name, v in bd.as_dict().items()})
        total_cycles = total_ns * f_ghz
        bd_sum = cycles.total()
        if total_cycles > 0 and abs(bd_sum - total_cycles) > 1e-6 * total_cycles + 1e-6:
            raise InvariantError(
                f"breakdown sum {bd_sum} != total {total_cycles}"
            )
        raw = raw_bandwidth(cfg.link)
        steady = self.gaps[len(self.gaps) // 2 :]
        mean_idle_ns = sum(steady) / len(steady) if steady else 0.0
        io_bytes = self.link_read_bytes + self.link_write_bytes
        return SimReport(
            schema_version=SIM_SCHEMA_VERSION,
            config_hash=config_hash(cfg),
            m=self.dims[0], n=self.dims[1], k=self.dims[2],
            dtype=self.dtype.name,
            mode=cfg.mode.value,
            c_drain=cfg.c_drain,
            total_cycles=total_cycles,
            total_ns=total_ns,
            breakdown=cycles,
            translation=stats,
            footprint_pages=footprint_pages(*self.dims, self.dtype),
            packets=self.packets,
            descriptors=self.descriptors,
            interrupts=self.interrupts,
            link_read_bytes=self.link_read_bytes,
            link_write_bytes=self.link_write_bytes,
            mem_read_bytes=self.operand_mem.read_bytes + (
                0 if self.ptw_mem is self.operand_mem else self.ptw_mem.read_bytes),
            mem_write_bytes=self.operand_mem.write_bytes,
            llc_hits=self.llc.hits if self.llc else 0,
            llc_misses=self.llc.misses if self.llc else 0,
            eta_io_measured=(self.link_read_bytes / raw * 1e9 / total_ns) if (
                total_ns and self.over_link) else 0.0,
            eta_sa_measured=self.compute_busy_ns / total_ns if total_ns else 0.0,
            steady_idle_cycles=mean_idle_ns * f_ghz,
            mean_tile_transfer_cycles=(io_bytes / raw * 1e9 / n_steps * f_ghz) if (
                n_steps and self.over_link) else 0.0,
        )

    def _check_conservation(self):
        if not self.over_link:
            if self.link_read_bytes or self.link_write_bytes:
                raise InvariantError("DevMem run generated link traffic")
            return
        ptw_bytes = (self.cfg.smmu.ptw_memory_visits * self.cfg.llc.line_bytes
                     * self.tlb.stats.walks)
        served = self.llc_hit_bytes + self.operand_mem.read_bytes - ptw_bytes
        if served != self.link_read_bytes:
            raise InvariantError(
                f"link read bytes {self.link_read_bytes} != LLC+DRAM served {served}"
            )
        sunk = self.llc_write_hit_bytes + self.operand_mem.write_bytes
        if sunk != self.link_write_bytes:
            raise InvariantError(
                f"link write bytes {self.link_write_bytes} != LLC+DRAM sunk {sunk}"
            )


def simulate_gemm(m: int, n: int, k: int, dtype: DataType | str, cfg: SystemConfig) -> SimReport:
    """Run the tile pipeline for an M x K * K x N GEMM and return its report."""
    if isinstance(dtype, str):
        dtype = dtype_by_name(dtype)
    return _Engine(m, n, k, dtype, cfg).run()


def roofline(cfg: SystemConfig, compute_rate_sweep, dims: tuple[int, int, int] = (1024, 1024, 1024),
             dtype: DataType | None = None):
    """Simulated time as a function of ideal compute throughput (ops/s).

    Scales the array clock to hit each target rate; beyond the bandwidth roof
    the curve flattens.
    """
    from dataclasses import replace
    dtype = dtype or cfg.array.dtype
    points = []
    for rate in compute_rate_sweep:
        if rate <= 0:
            raise InvalidInputError("compute rates must be positive")
        f = rate / (2.0 * cfg.array.width ** 2)
        run_cfg = replace(cfg, array=replace(cfg.array, clock_hz=f, dtype=dtype))
        rep = simulate_gemm(*dims, dtype, run_cfg)
        points.append((rate, rep.total_seconds))
    return points


def config_hash(cfg: SystemConfig) -> str:
    """Stable short hash of the full system configuration."""
    from .config import dump_system_config
    text = dump_system_config(cfg)
    return hashlib.sha256(text.encode()).hexdigest()[:12]
