"""Acceptance gate: every criterion at its stated tolerance, one printed
pass/fail line each.  Run with ``pytest tests/test_acceptance.py -v -s``.

Calibration-dependent criteria share session-scoped fitted knobs, exactly as
the CLI's calibrate subcommand would produce them.
"""

import hashlib
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from streamflow.calibrate import calibrate_packet, calibrate_vit, vit_config
from streamflow.dtypes import DTYPES, INT32
from streamflow.gemm import Matrix, block_matrix_multiply, naive_gemm, pack_a, pack_b
from streamflow.link import DmaConfig, LinkConfig
from streamflow.memory import MemoryTech, tech_preset
from streamflow.pipeline import (SystemConfig, overlap_bound,
                                 overlap_bound_asymptote, roofline, simulate_gemm)
from streamflow.smmu import SmmuConfig, footprint_pages
from streamflow.systolic import ArrayConfig, tile_compute_cycles
from streamflow.workload import NonGemmModel, crossover_sweep, end_to_end, model_preset

from conftest import ideal_link, zero_overhead_config


def report(criterion: int, ok: bool, detail: str):
    print(f"ACCEPTANCE {criterion:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def packet_knobs():
    targets = {"packet.penalty_64": 0.12, "packet.penalty_4096_at_2gbs": 0.36}
    knobs, residuals = calibrate_packet(targets, dims=384)
    return knobs, residuals


@pytest.fixture(scope="session")
def vit_knobs(packet_knobs):
    targets = {"vit_large.host_gbps_2": 2.98, "vit_large.host_gbps_8": 1.108,
               "vit_large.host_gbps_64": 0.98}
    knobs, residuals = calibrate_vit(targets, link_knobs=packet_knobs[0])
    return knobs, residuals


def calibrated_config(packet_knobs, control_scale=None) -> SystemConfig:
    kn = packet_knobs[0]
    cfg = SystemConfig()
    link = replace(cfg.link, header_bytes=kn["link.header_bytes"],
                   packet_setup_cycles=kn["link.packet_setup_cycles"])
    if control_scale is not None:
        cfg = replace(cfg, control_scale=control_scale)
    return replace(cfg, link=link)


# -- 1 -----------------------------------------------------------------------

def test_criterion_1_gemm_correctness():
    rng = np.random.default_rng(2026)
    t0 = time.time()
    names = sorted(DTYPES)
    checked = 0
    for case in range(200):
        dt = DTYPES[names[case % len(names)]]
        # log-uniform dims up to 1024, non-multiples of W and L included
        m, k, n = (int(2 ** rng.uniform(0, 10)) + int(rng.integers(0, 3))
                   for _ in range(3))
        if case % 25 == 0:
            m = 1024  # pin the upper end
        if dt.is_integer:
            info = np.iinfo(dt.np_dtype)
            a = Matrix(rng.integers(info.min, info.max + 1, (m, k)), dt)
            b = Matrix(rng.integers(info.min, info.max + 1, (k, n)), dt)
        else:
            # exactly representable values: products/sums stay exact in the
            # fp32 accumulator, so the 4-ulp budget is decidable
            a = Matrix(rng.integers(-8, 8, (m, k)), dt)
            b = Matrix(rng.integers(-8, 8, (k, n)), dt)
        want = naive_gemm(a, b)
        got = block_matrix_multiply(pack_a(a), pack_b(b))
        if dt.is_integer:
            assert np.array_equal(want.data, got.data), f"case {case} {dt.name}"
        else:
            w = want.data.astype(np.float64)
            g = got.data.astype(np.float64)
            diff = np.abs(w - g)
            ulp = np.spacing(np.abs(want.data)).astype(np.float64)
            assert (diff <= 4.0 * ulp).all(), f"case {case} {dt.name}"
        checked += 1
    elapsed = time.time() - t0
    report(1, checked == 200 and elapsed < 120.0,
           f"200 randomized oracle comparisons in {elapsed:.1f}s (< 120s)")


# -- 2 -----------------------------------------------------------------------

def test_criterion_2_overlap_bound_exactness():
    asym = [overlap_bound_asymptote(16, 1e9, s) for s in (1, 2, 4)]
    ok = asym == [32e9, 64e9, 128e9]
    for s, a in zip((1, 2, 4), asym):
        ok = ok and abs(overlap_bound(16, 1e9, s, 1 << 30) - a) <= 1e-4 * a
    exact = overlap_bound(16, 1e9, 1, 256) == 8448e9 / 286
    report(2, ok and exact,
           f"asymptotes {[a / 1e9 for a in asym]} GB/s; L=256 bound == 8448e9/286")


# -- 3 -----------------------------------------------------------------------

def test_criterion_3_simulator_limits():
    t0 = time.time()
    cb = zero_overhead_config(dtype=INT32)
    rep = simulate_gemm(512, 512, 512, INT32, cb)
    closed = 32 * 32 * 8 * tile_compute_cycles(cb.array, 64)
    compute_err = abs(rep.total_cycles - closed) / closed

    io = zero_overhead_config(gbps=8.0, dtype=INT32, read_channels=1, clock_hz=1e13)
    rep2 = simulate_gemm(512, 512, 512, INT32, io)
    moved = rep2.link_read_bytes + rep2.link_write_bytes
    io_err = abs(rep2.total_ns - moved / 8e9 * 1e9) / (moved / 8e9 * 1e9)
    elapsed = time.time() - t0
    report(3, compute_err < 0.01 and io_err < 0.05 and elapsed < 10.0,
           f"compute-bound off by {compute_err:.2%} (<1%), io-bound by {io_err:.2%} "
           f"(<5%), {elapsed:.1f}s (<10s)")


# -- 4 -----------------------------------------------------------------------

def test_criterion_4_overlap_threshold():
    bound = overlap_bound(16, 1e9, 4, 64)
    base = zero_overhead_config(dtype=INT32, read_channels=1)
    base = replace(base, dma=replace(base.dma, skip_resident_tiles=False))
    rep = simulate_gemm(2048, 2048, 64, INT32, replace(base, link=ideal_link(bound / 1e9)))
    idle_at_bound = rep.steady_idle_cycles
    rep2 = simulate_gemm(2048, 2048, 64, INT32, replace(base, link=ideal_link(bound / 2e9)))
    predicted = rep2.link_read_bytes / (bound / 2) * 1e9
    transfer_err = abs(rep2.total_ns - predicted) / predicted
    report(4, idle_at_bound < 1.0 and rep2.steady_idle_cycles > 0.0 and transfer_err < 0.05,
           f"idle {idle_at_bound:.3f} cyc at bound (<1); at 0.5x idle "
           f"{rep2.steady_idle_cycles:.1f} cyc (>0), transfer-bound off {transfer_err:.2%}")


# -- 5 -----------------------------------------------------------------------

def test_criterion_5_packet_size_curve(packet_knobs):
    knobs, residuals = packet_knobs
    cfg = calibrated_config(packet_knobs)
    slow = replace(cfg, link=LinkConfig.from_total_gbps(
        2.0, lanes=4, header_bytes=knobs["link.header_bytes"],
        packet_setup_cycles=knobs["link.packet_setup_cycles"]))
    payloads = (64, 128, 256, 512, 1024, 2048, 4096)
    times = []
    for p in payloads:
        run = replace(slow, link=replace(slow.link, payload_bytes=p))
        times.append(simulate_gemm(2048, 2048, 2048, "int8", run).total_ns)
    t = dict(zip(payloads, times))
    best = payloads[times.index(min(times))]
    falling = [times[i] <= times[i - 1] for i in range(1, payloads.index(256) + 1)]
    rising = [times[i] >= times[i - 1] for i in range(payloads.index(256) + 1, len(payloads))]
    unimodal = all(falling) and all(rising)
    pen64 = t[64] / t[256] - 1.0
    pen4096 = t[4096] / t[256] - 1.0
    ok = (best == 256 and unimodal and 0.08 <= pen64 <= 0.16 and 0.25 <= pen4096 <= 0.45)
    report(5, ok, f"optimum at {best} B, unimodal={unimodal}, 64 B penalty "
                  f"{pen64:.1%} in [8%,16%], 4 KB penalty {pen4096:.1%} in [25%,45%]")


# -- 6 -----------------------------------------------------------------------

def test_criterion_6_pcie_scaling():
    base = SystemConfig()
    lo = replace(base, link=LinkConfig.from_total_gbps(2 * 2 / 8.0, lanes=2))
    hi = replace(base, link=LinkConfig.from_total_gbps(16 * 16 / 8.0, lanes=16))
    t_lo = simulate_gemm(2048, 2048, 2048, "int8", lo).total_ns
    t_hi = simulate_gemm(2048, 2048, 2048, "int8", hi).total_ns
    speedup = t_lo / t_hi
    report(6, 8.0 <= speedup <= 14.0,
           f"(2 lanes, 2 Gbps) -> (16 lanes, 16 Gbps) speedup {speedup:.2f}x in [8, 14]")


# -- 7 -----------------------------------------------------------------------

def test_criterion_7_memory_sensitivity(packet_knobs, vit_knobs):
    cfg = calibrated_config(packet_knobs, control_scale=vit_knobs[0]["control_scale"])

    def custom(bw, lat):
        return replace(cfg, host_mem=MemoryTech("custom", 2, 64, bw, 2000,
                                                fixed_latency_ns=lat))

    t_50 = simulate_gemm(2048, 2048, 2048, "int8", custom(50.0, 12.0)).total_ns
    t_256 = simulate_gemm(2048, 2048, 2048, "int8", custom(256.0, 12.0)).total_ns
    t_lat36 = simulate_gemm(2048, 2048, 2048, "int8", custom(50.0, 36.0)).total_ns
    bw_gain = (t_50 - t_256) / t_50
    lat_loss = (t_lat36 - t_50) / t_50
    report(7, 0.0 <= bw_gain <= 0.03 and 0.0 <= lat_loss <= 0.07,
           f"bandwidth 50->256 GB/s improves {bw_gain:.2%} (<=3%), latency 12->36 ns "
           f"degrades {lat_loss:.2%} (<=7%)")


# -- 8 -----------------------------------------------------------------------

def test_criterion_8_translation_trend():
    pages = footprint_pages(2048, 2048, 2048, INT32)
    cfg = SystemConfig()
    small = simulate_gemm(64, 64, 64, INT32, cfg)
    compulsory = small.translation.misses == footprint_pages(64, 64, 64, INT32)
    o1024 = simulate_gemm(1024, 1024, 1024, INT32, cfg).translation.overhead_fraction
    o2048 = simulate_gemm(2048, 2048, 2048, INT32, cfg).translation.overhead_fraction
    report(8, pages == 12288 and o2048 > o1024 and compulsory,
           f"footprint {pages} pages (=12288); overhead {o1024:.3f} -> {o2048:.3f} "
           f"rising; small-footprint misses compulsory-only={compulsory}")


# -- 9 -----------------------------------------------------------------------

def test_criterion_9_end_to_end_fixtures(packet_knobs, vit_knobs):
    knobs, _ = vit_knobs
    base = calibrated_config(packet_knobs, control_scale=knobs["control_scale"])
    ngm = NonGemmModel(ngm_scale=knobs["ngm_scale"])
    targets = {2.0: 2.98, 8.0: 1.108, 64.0: 0.98}
    spec_l = model_preset("vit-large")
    spec_b = model_preset("vit-base")
    lat_l, lat_b = {}, {}
    for gbps, target in targets.items():
        cfg = vit_config(base, gbps)
        lat_l[gbps] = end_to_end(spec_l, cfg, ngm).total_seconds
        lat_b[gbps] = end_to_end(spec_b, cfg, ngm).total_seconds
    residuals = {g: lat_l[g] / t - 1.0 for g, t in targets.items()}
    within = all(abs(r) <= 0.20 for r in residuals.values())
    fps_gain = lat_l[2.0] / lat_l[64.0]
    ratio_ok = all(lat_l[g] / lat_b[g] > 3.0 for g in targets)
    report(9, within and 2.4 <= fps_gain <= 3.6 and ratio_ok,
           f"latencies {[round(lat_l[g], 3) for g in (2.0, 8.0, 64.0)]}s vs "
           f"(2.98, 1.108, 0.98) +-20%, FPS gain {fps_gain:.2f}x in [2.4, 3.6], "
           f"base/large ratio > 3: {ratio_ok}")


# -- 10 ----------------------------------------------------------------------

def test_criterion_10_crossover():
    cfg = replace(SystemConfig(), link=LinkConfig.from_total_gbps(64.0, lanes=4),
                  control_scale=0.3)
    fractions = [0.05, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45]
    curve = dict(crossover_sweep(model_preset("vit-base"), cfg, fractions))
    devmem_wins_low = curve[0.05] < 1.0
    crossing = [f for f in fractions if 0.15 <= f <= 0.45 and curve[f] >= 1.0]
    report(10, devmem_wins_low and bool(crossing),
           f"DevMem ahead at 5% (ratio {curve[0.05]:.2f} < 1); host overtakes at "
           f"{crossing[0] if crossing else 'none'} in [0.15, 0.45]")


# -- 11 ----------------------------------------------------------------------

def test_criterion_11_determinism(tmp_path):
    digests = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        proc = subprocess.run(
            [sys.executable, "-m", "streamflow.cli", "sweep", "--preset",
             "overlap-threshold", "--out", str(out), "--seed", "11",
             "--set", "m=512", "--set", "n=512"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        digests.append(hashlib.sha256((out / "overlap-threshold.csv").read_bytes()).hexdigest())
    report(11, digests[0] == digests[1],
           f"preset re-run CSV hash {digests[0][:12]} == {digests[1][:12]}")


# -- 12 ----------------------------------------------------------------------

def test_criterion_12_roofline_flattens():
    pts = roofline(SystemConfig(), [2 ** i * 1e9 for i in range(2, 13)],
                   dims=(1024, 1024, 1024))
    times = [t for _, t in pts]
    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(times, times[1:]))
    below = (times[0] - times[1]) / times[0]
    above = (times[-2] - times[-1]) / times[-2]
    report(12, monotone and below >= 0.40 and above < 0.01,
           f"monotone={monotone}; 2x compute below roof: -{below:.1%} (>=40%), "
           f"beyond roof: -{above:.2%} (<1%)")
