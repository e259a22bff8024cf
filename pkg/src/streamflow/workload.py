"""Transformer encoder decomposition into GEMM and non-GEMM phases, end-to-end
latency aggregation, and the host-vs-device-memory crossover study.

GEMM calls are offloaded to the accelerator; element-wise and softmax stages
run on the host CPU.  When operands live in device memory, every host-side
non-GEMM touch pays a per-line penalty to cross the link, which is what erodes
the DevMem advantage as the non-GEMM share grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .dtypes import INT8, DataType
from .errors import InvalidInputError
from .link import raw_bandwidth
from .pipeline import AccessMode, SimReport, SystemConfig, simulate_gemm


class OpClass(Enum):
    FF1 = "FF1"
    FF2 = "FF2"
    MHA = "MHA"
    PROJECTION = "Projection"
    NON_GEMM = "NonGEMM"
    CONTROL = "Control"


@dataclass(frozen=True)
class TransformerSpec:
    name: str
    layers: int
    hidden_dim: int
    heads: int
    seq_len: int
    mlp_ratio: int = 4
    dtype: DataType = INT8

    def __post_init__(self):
        if self.hidden_dim % self.heads:
            raise InvalidInputError("hidden_dim must divide evenly across heads")
        if self.seq_len < 1 or self.layers < 1:
            raise InvalidInputError("spec needs at least one layer and one token")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.heads


# Encoder geometries.  ViT sequence lengths are (224/patch)^2 + 1 class token;
# ViT-Huge/14 is the standard published geometry, not taken from our fixtures.
MODEL_PRESETS = {
    "bert-medium": TransformerSpec("bert-medium", 8, 512, 8, 128),
    "bert-base": TransformerSpec("bert-base", 12, 768, 12, 128),
    "bert-large": TransformerSpec("bert-large", 24, 1024, 16, 128),
    "vit-base": TransformerSpec("vit-base", 12, 768, 12, 197),
    "vit-large": TransformerSpec("vit-large", 24, 1024, 16, 197),
    "vit-huge": TransformerSpec("vit-huge", 32, 1280, 16, 257),
}


def model_preset(name: str) -> TransformerSpec:
    key = name.lower()
    if key not in MODEL_PRESETS:
        raise InvalidInputError(f"unknown model {name!r}; expected one of {sorted(MODEL_PRESETS)}")
    return MODEL_PRESETS[key]


@dataclass(frozen=True)
class GemmOp:
    op_class: OpClass
    m: int
    n: int
    k: int
    count: int = 1   # identical instances (heads x layers collapse here)

    @property
    def flops(self) -> int:
        return 2 * self.m * self.n * self.k * self.count


@dataclass(frozen=True)
class NonGemmOp:
    kind: str        # softmax | layernorm | activation | transpose
    elements: int
    count: int = 1


def decompose(spec: TransformerSpec, fuse_heads: bool = False) -> list:
    """Per-layer operation list: QKV projections, per-head attention GEMMs,
    output projection, FF1/FF2, interleaved with the host-side non-GEMM ops."""
    s, h, nh, hd = spec.seq_len, spec.hidden_dim, spec.heads, spec.head_dim
    ff = spec.mlp_ratio * h
    ops = []
    for _ in range(spec.layers):
        ops.append(NonGemmOp("layernorm", s * h))
        ops.append(GemmOp(OpClass.PROJECTION, s, h, h, count=3))      # Q, K, V
        ops.append(NonGemmOp("transpose", s * h))
        if fuse_heads:
            ops.append(GemmOp(OpClass.MHA, s, nh * s, hd))            # scores, batched
            ops.append(NonGemmOp("softmax", nh * s * s))
            ops.append(GemmOp(OpClass.MHA, s, nh * hd, s))            # context, batched
        else:
            ops.append(GemmOp(OpClass.MHA, s, s, hd, count=nh))       # scores per head
            ops.append(NonGemmOp("softmax", nh * s * s))
            ops.append(GemmOp(OpClass.MHA, s, hd, s, count=nh))       # context per head
        ops.append(NonGemmOp("transpose", s * h))
        ops.append(GemmOp(OpClass.PROJECTION, s, h, h))               # output projection
        ops.append(NonGemmOp("layernorm", s * h))
        ops.append(GemmOp(OpClass.FF1, s, ff, h))
        ops.append(NonGemmOp("activation", s * ff))
        ops.append(GemmOp(OpClass.FF2, s, h, ff))
    return ops


def gemm_flops(spec: TransformerSpec) -> int:
    """Brute-force FLOP total over the decomposition (2 ops per MAC)."""
    return sum(op.flops for op in decompose(spec) if isinstance(op, GemmOp))


def gemm_flops_closed_form(spec: TransformerSpec) -> int:
    """Standard encoder arithmetic at mlp_ratio 4:
    24 * layers * seq * hidden^2 + 4 * layers * seq^2 * hidden."""
    L, s, h = spec.layers, spec.seq_len, spec.hidden_dim
    return 24 * L * s * h * h + 4 * L * s * s * h


@dataclass
class NonGemmModel:
    """Host-side cost of the non-GEMM stages plus the DevMem access penalty."""

    host_ns_per_element: dict[str, float] = field(default_factory=lambda: {
        "softmax": 8.0, "layernorm": 4.0, "activation": 2.0, "transpose": 2.0,
    })
    ngm_scale: float = 1.0        # calibration multiplier
    rw_bytes_per_element: int = 2  # read + write of one byte-wide activation
    devmem_mlp: int = 1            # outstanding CPU line accesses over the link
    line_bytes: int = 64

    def host_ns(self, op: NonGemmOp) -> float:
        try:
            per = self.host_ns_per_element[op.kind]
        except KeyError:
            raise InvalidInputError(f"unknown non-GEMM kind {op.kind!r}")
        if per < 0:
            raise InvalidInputError("non-GEMM costs must be nonnegative")
        return per * self.ngm_scale * op.elements * op.count

    def devmem_penalty_ns(self, op: NonGemmOp, cfg: SystemConfig) -> float:
        """CPU touching device-resident activations: per-line exposed link
        round trip plus line serialization."""
        lines = op.elements * op.count * self.rw_bytes_per_element / self.line_bytes
        per_line = (2.0 * cfg.link.link_latency_ns / self.devmem_mlp
                    + self.line_bytes / raw_bandwidth(cfg.link) * 1e9)
        return lines * per_line


@dataclass
class WorkloadReport:
    spec_name: str
    total_seconds: float
    class_seconds: dict[str, float]
    gemm_reports: list[SimReport]

    @property
    def class_percent(self) -> dict[str, float]:
        total = sum(self.class_seconds.values())
        if total <= 0:
            return {k: 0.0 for k in self.class_seconds}
        return {k: 100.0 * v / total for k, v in self.class_seconds.items()}

    @property
    def fps(self) -> float:
        return 1.0 / self.total_seconds if self.total_seconds > 0 else float("inf")


def end_to_end(spec: TransformerSpec, cfg: SystemConfig, ngm: NonGemmModel | None = None,
               fuse_heads: bool = False) -> WorkloadReport:
    """Simulate every GEMM on the accelerator, add host non-GEMM time and the
    control charges, and report per-class times.

    Identical GEMM shapes are simulated once and scaled by their instance
    count; each instance is a separate offload with its own ramp, which the
    per-op simulation already includes.
    """
    ngm = ngm or NonGemmModel()
    ops = decompose(spec, fuse_heads=fuse_heads)
    class_ns = {c.value: 0.0 for c in OpClass}
    shape_cache: dict[tuple, SimReport] = {}
    reports = []
    devmem = cfg.mode is AccessMode.DEVMEM
    for op in ops:
        if isinstance(op, GemmOp):
            key = (op.m, op.n, op.k)
            rep = shape_cache.get(key)
            if rep is None:
                rep = simulate_gemm(op.m, op.n, op.k, spec.dtype, cfg)
                shape_cache[key] = rep
            reports.append(rep)
            ctrl_ns = rep.breakdown.control / (cfg.array.clock_hz * 1e-9)
            class_ns[OpClass.CONTROL.value] += ctrl_ns * op.count
            class_ns[op.op_class.value] += (rep.total_ns - ctrl_ns) * op.count
        else:
            t = ngm.host_ns(op)
            if devmem:
                t += ngm.devmem_penalty_ns(op, cfg)
            class_ns[OpClass.NON_GEMM.value] += t
    total = sum(class_ns.values())
    return WorkloadReport(
        spec_name=spec.name,
        total_seconds=total * 1e-9,
        class_seconds={k: v * 1e-9 for k, v in class_ns.items()},
        gemm_reports=reports,
    )


def gemm_only_seconds(spec: TransformerSpec, cfg: SystemConfig) -> float:
    """Accelerator time of the GEMM phases alone (control included)."""
    rep = end_to_end(spec, cfg)
    return rep.total_seconds - rep.class_seconds[OpClass.NON_GEMM.value]


def crossover_sweep(spec: TransformerSpec, host_cfg: SystemConfig, fractions,
                    ngm: NonGemmModel | None = None):
    """Host-memory vs device-memory throughput as the non-GEMM share grows.

    For each fraction x, the non-GEMM cost is scaled so it makes up x of the
    DevMem baseline runtime; the host config runs the same logical work
    without the device-access penalty.  Returns rows of
    (fraction, host_throughput_normalized_to_devmem).
    """
    ngm = ngm or NonGemmModel()
    for x in fractions:
        if not (0.0 <= x < 1.0):
            raise InvalidInputError("fractions must lie in [0, 1)")
    dev_cfg = replace(host_cfg, mode=AccessMode.DEVMEM)
    g_host = gemm_only_seconds(spec, host_cfg)
    g_dev = gemm_only_seconds(spec, dev_cfg)

    # penalty multiplier of this workload's non-GEMM mix under DevMem
    base_ns = pen_ns = 0.0
    for op in decompose(spec):
        if isinstance(op, NonGemmOp):
            base_ns += ngm.host_ns(op)
            pen_ns += ngm.devmem_penalty_ns(op, host_cfg)
    k_ratio = (base_ns + pen_ns) / base_ns if base_ns > 0 else 1.0

    rows = []
    for x in fractions:
        n_dev = x / (1.0 - x) * g_dev
        t_dev = g_dev + n_dev
        t_host = g_host + n_dev / k_ratio
        rows.append((x, t_dev / t_host))
    return rows


@dataclass
class CpuBaseline:
    """Single-core host running every phase; GEMM cost depends on whether the
    stationary operand streams through or fits the LLC."""

    ns_per_mac_cached: float = 0.5
    ns_per_mac_streaming: float = 2.5
    llc_bytes: int = 2 * 1024 * 1024

    def gemm_ns(self, op: GemmOp, dtype: DataType) -> float:
        macs = op.m * op.n * op.k * op.count
        operand = op.k * op.n * dtype.element_size
        per = self.ns_per_mac_cached if operand <= self.llc_bytes else self.ns_per_mac_streaming
        return macs * per


def cpu_end_to_end(spec: TransformerSpec, cpu: CpuBaseline | None = None,
                   ngm: NonGemmModel | None = None) -> WorkloadReport:
    """Host-only reference breakdown (the all-CPU donut of the runtime analysis)."""
    cpu = cpu or CpuBaseline()
    ngm = ngm or NonGemmModel()
    class_ns = {c.value: 0.0 for c in OpClass}
    for op in decompose(spec):
        if isinstance(op, GemmOp):
            class_ns[op.op_class.value] += cpu.gemm_ns(op, spec.dtype)
        else:
            class_ns[OpClass.NON_GEMM.value] += ngm.host_ns(op)
    total = sum(class_ns.values())
    return WorkloadReport(spec.name, total * 1e-9,
                          {k: v * 1e-9 for k, v in class_ns.items()}, [])
