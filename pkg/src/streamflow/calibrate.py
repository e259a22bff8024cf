"""Bounded grid-search calibration of the model's free scalars against the
reference deltas: packet-size penalties fix (header_bytes, packet_setup_cycles),
and the end-to-end latency triple fixes (control_scale, ngm_scale).

No stochastic optimizer: plain grids, deterministic tie-breaks (first best
wins in iteration order).
"""

from __future__ import annotations

from dataclasses import replace

from .config import dump_kv
from .errors import CalibrationError
from .link import LinkConfig, effective_bandwidth
from .memory import tech_preset
from .pipeline import SystemConfig, simulate_gemm
from .workload import (NonGemmModel, NonGemmOp, TransformerSpec, decompose,
                       end_to_end, model_preset)

PAYLOAD_GRID = (64, 128, 256, 512, 1024, 2048, 4096)

# paper-quoted anchors; the target fixture file can override
DEFAULT_TARGETS = {
    "packet.penalty_64": 0.12,
    "packet.penalty_4096_at_2gbs": 0.36,
    "vit_large.host_gbps_2": 2.98,
    "vit_large.host_gbps_8": 1.108,
    "vit_large.host_gbps_64": 0.98,
}

PACKET_RESIDUAL_LIMIT = 0.03   # 3 percentage points
VIT_RESIDUAL_LIMIT = 0.20      # 20% per point

_HEADER_GRID = (6.0, 8.0, 10.0, 10.66, 12.0, 14.0, 16.0, 20.0, 24.0)
_SETUP_GRID = (64.0, 90.0, 110.0, 125.0, 134.0, 145.0, 160.0, 180.0)
_CTRL_GRID = tuple(x / 100.0 for x in range(10, 155, 10))
_NGM_GRID = tuple(x / 4.0 for x in range(1, 33))

# host memory paired with each host-link rate ("appropriate memory controllers
# for each scenario"): a slow link keeps the baseline DDR3; faster links are
# provisioned so the controller can feed them
VIT_HOST_MEM = {2.0: "DDR3", 8.0: "DDR5", 64.0: "HBM2"}


def _with_knobs(base: SystemConfig, header: float, setup: float) -> SystemConfig:
    return replace(base, link=replace(base.link, header_bytes=header,
                                      packet_setup_cycles=setup))


def _packet_exec_time(cfg: SystemConfig, payload: int, dims: int) -> float:
    run = replace(cfg, link=replace(cfg.link, payload_bytes=payload))
    return simulate_gemm(dims, dims, dims, "int8", run).total_ns


def calibrate_packet(targets: dict, base: SystemConfig | None = None,
                     dims: int = 512) -> tuple[dict, dict]:
    """Fit header_bytes and packet_setup_cycles to the small/large packet
    execution-time penalties at the low-rate link.  Returns (knobs, residuals)."""
    t64 = targets.get("packet.penalty_64")
    t4096 = targets.get("packet.penalty_4096_at_2gbs")
    if t64 is None and t4096 is None:
        return {}, {}
    base = base or SystemConfig()
    slow = replace(base, link=LinkConfig.from_total_gbps(
        2.0, lanes=4, header_bytes=base.link.header_bytes,
        packet_setup_cycles=base.link.packet_setup_cycles,
        stall_fraction=base.link.stall_fraction,
        link_latency_ns=base.link.link_latency_ns))

    best = None
    for header in _HEADER_GRID:
        for setup in _SETUP_GRID:
            cfg = _with_knobs(slow, header, setup)
            # the optimum must sit at 256 B on the effective-bandwidth curve
            eff = [effective_bandwidth(cfg.link, p) for p in PAYLOAD_GRID]
            if eff.index(max(eff)) != PAYLOAD_GRID.index(256):
                continue
            t_256 = _packet_exec_time(cfg, 256, dims)
            pen64 = _packet_exec_time(cfg, 64, dims) / t_256 - 1.0
            pen4096 = _packet_exec_time(cfg, 4096, dims) / t_256 - 1.0
            resid = max(abs(pen64 - (t64 if t64 is not None else pen64)),
                        abs(pen4096 - (t4096 if t4096 is not None else pen4096)))
            if best is None or resid < best[0]:
                best = (resid, header, setup, pen64, pen4096)
    if best is None:
        raise CalibrationError("no packet knob candidate keeps the 256 B optimum")
    resid, header, setup, pen64, pen4096 = best
    knobs = {"link.header_bytes": header, "link.packet_setup_cycles": setup}
    residuals = {"packet.penalty_64": pen64, "packet.penalty_4096_at_2gbs": pen4096,
                 "packet.max_residual": resid}
    if resid > PACKET_RESIDUAL_LIMIT:
        raise CalibrationError(
            f"packet calibration residual {resid:.4f} exceeds {PACKET_RESIDUAL_LIMIT}; "
            f"best knobs {knobs}")
    return knobs, residuals


def vit_config(base: SystemConfig, gbps: float, link_knobs: dict | None = None) -> SystemConfig:
    kn = link_knobs or {}
    link = LinkConfig.from_total_gbps(
        gbps, lanes=4,
        header_bytes=kn.get("link.header_bytes", base.link.header_bytes),
        packet_setup_cycles=kn.get("link.packet_setup_cycles", base.link.packet_setup_cycles),
        stall_fraction=base.link.stall_fraction,
        link_latency_ns=base.link.link_latency_ns)
    return replace(base, link=link, host_mem=tech_preset(VIT_HOST_MEM[gbps]))


def _vit_gemm_seconds(spec: TransformerSpec, cfg: SystemConfig, scale: float) -> float:
    zero = NonGemmModel(host_ns_per_element={k: 0.0 for k in
                                             ("softmax", "layernorm", "activation", "transpose")})
    return end_to_end(spec, replace(cfg, control_scale=scale), zero).total_seconds


def calibrate_vit(targets: dict, base: SystemConfig | None = None,
                  link_knobs: dict | None = None) -> tuple[dict, dict]:
    """Fit control_scale and ngm_scale to the end-to-end latency triple."""
    points = {g: targets.get(f"vit_large.host_gbps_{int(g)}") for g in (2.0, 8.0, 64.0)}
    points = {g: t for g, t in points.items() if t is not None}
    if not points:
        return {}, {}
    base = base or SystemConfig()
    spec = model_preset("vit-large")
    ngm_base = NonGemmModel()
    ngm_ns = sum(ngm_base.host_ns(op) for op in decompose(spec)
                 if isinstance(op, NonGemmOp))

    gemm_s: dict[float, dict[float, float]] = {}
    for g in points:
        cfg = vit_config(base, g, link_knobs)
        gemm_s[g] = {s: _vit_gemm_seconds(spec, cfg, s) for s in _CTRL_GRID}

    best = None
    for s in _CTRL_GRID:
        for ngm in _NGM_GRID:
            resid = max(abs(gemm_s[g][s] + ngm * ngm_ns * 1e-9 - t) / t
                        for g, t in points.items())
            if best is None or resid < best[0]:
                best = (resid, s, ngm)
    resid, ctrl, ngm = best
    knobs = {"control_scale": ctrl, "ngm_scale": ngm}
    residuals = {f"vit_large.host_gbps_{int(g)}":
                 (gemm_s[g][ctrl] + ngm * ngm_ns * 1e-9 - t) / t
                 for g, t in points.items()}
    residuals["vit_large.max_residual"] = resid
    if resid > VIT_RESIDUAL_LIMIT:
        raise CalibrationError(
            f"latency-triple residual {resid:.4f} exceeds {VIT_RESIDUAL_LIMIT}; "
            f"best knobs {knobs}")
    return knobs, residuals


def calibrate(targets: dict, base: SystemConfig | None = None) -> tuple[dict, dict]:
    """Run every calibration the target set asks for; empty targets give
    identity knobs.  Returns (knobs, residuals)."""
    knobs: dict = {}
    residuals: dict = {}
    pk, pr = calibrate_packet(targets, base)
    knobs.update(pk)
    residuals.update(pr)
    vk, vr = calibrate_vit(targets, base, link_knobs=pk)
    knobs.update(vk)
    residuals.update(vr)
    return knobs, residuals


def knobs_text(knobs: dict, residuals: dict) -> str:
    lines = ["# calibrated model knobs"]
    for key in sorted(residuals):
        lines.append(f"# residual {key} = {residuals[key]:+.6f}")
    return "\n".join(lines) + "\n" + dump_kv(knobs)
