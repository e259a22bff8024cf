"""Experiment harness: named presets reproducing the reference studies, sweep
execution (optionally parallel across points), and CSV/JSON/figure emission.

Preset definitions live in ``presets/experiments/*.cfg`` using the key-value
grammar (``STREAMFLOW_PRESET_DIR`` overrides the directory).  Keys prefixed
``system.`` override the SystemConfig; the rest parameterize the experiment.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import gemm, matrixio
from .calibrate import DEFAULT_TARGETS, calibrate, knobs_text
from .config import parse_kv, read_kv_file, system_config_from_mapping
from .dtypes import DTYPES, dtype_by_name
from .errors import ConfigError, InvalidInputError
from .link import LinkConfig
from .memory import tech_preset
from .pipeline import AccessMode, SystemConfig, config_hash, roofline, simulate_gemm
from .report import report_row, rows_to_csv, write_csv, write_json
from .workload import (CpuBaseline, NonGemmModel, cpu_end_to_end, crossover_sweep,
                       end_to_end, model_preset)

ULP_LIMIT = 4.0


@dataclass
class ExperimentConfig:
    kind: str                      # run | sweep | roofline | crossover | validate-gemm | calibrate
    name: str = "experiment"
    params: dict = field(default_factory=dict)
    system: dict = field(default_factory=dict)   # dotted SystemConfig overrides
    out_dir: str = "results"
    seed: int = 0
    jobs: int = 1
    knobs: dict = field(default_factory=dict)
    force: bool = False

    def base_config(self) -> SystemConfig:
        mapping = dict(self.system)
        ngm_scale = self.knobs.get("ngm_scale")
        merged = {**{k: v for k, v in self.knobs.items() if k != "ngm_scale"}, **mapping}
        cfg = system_config_from_mapping(merged)
        self._ngm_scale = ngm_scale if ngm_scale is not None else 1.0
        return cfg

    def non_gemm_model(self) -> NonGemmModel:
        return NonGemmModel(ngm_scale=getattr(self, "_ngm_scale", 1.0))


_VALID_KINDS = ("run", "sweep", "roofline", "crossover", "validate-gemm", "calibrate")


def preset_dir_override() -> str | None:
    return os.environ.get("STREAMFLOW_PRESET_DIR")


def preset_names() -> list[str]:
    override = preset_dir_override()
    if override:
        exp = os.path.join(override, "experiments")
        if os.path.isdir(exp):
            return sorted(f[:-4] for f in os.listdir(exp) if f.endswith(".cfg"))
    root = resources.files("streamflow.presets").joinpath("experiments")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> ExperimentConfig:
    override = preset_dir_override()
    text = None
    if override:
        path = os.path.join(override, "experiments", f"{name}.cfg")
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
    if text is None:
        res = resources.files("streamflow.presets").joinpath("experiments").joinpath(f"{name}.cfg")
        try:
            text = res.read_text()
        except FileNotFoundError:
            raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return experiment_from_mapping(parse_kv(text), name=name)


def experiment_from_mapping(mapping: dict, name: str = "experiment") -> ExperimentConfig:
    mapping = dict(mapping)
    kind = mapping.pop("kind", None)
    if kind not in _VALID_KINDS:
        raise ConfigError(f"experiment kind must be one of {_VALID_KINDS}, got {kind!r}")
    name = str(mapping.pop("name", name))
    system = {}
    params = {}
    for key, value in mapping.items():
        if key.startswith("system."):
            system[key[len("system."):]] = value
        else:
            params[key] = value
    exp = ExperimentConfig(kind=kind, name=name, params=params, system=system)
    if exp.kind == "sweep" and not exp.params.get("sweep"):
        raise ConfigError("sweep experiments need a 'sweep' axis")
    return exp


def _csv_list(value, conv=float) -> list:
    if isinstance(value, (int, float)):
        return [conv(value)]
    return [conv(v) for v in str(value).split(",") if v.strip()]


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# sweep point workers (module-level for pickling)
# ---------------------------------------------------------------------------

def _sim_point(args):
    m, n, k, dtype_name, cfg = args
    return simulate_gemm(m, n, k, dtype_name, cfg)


def _dims(params) -> tuple[int, int, int]:
    size = int(params.get("size", 2048))
    return (int(params.get("m", size)), int(params.get("n", size)),
            int(params.get("k", size)))


def _link_from_gbps(base: SystemConfig, gbps: float, lanes: int = 4) -> LinkConfig:
    return LinkConfig.from_total_gbps(
        gbps, lanes=lanes, header_bytes=base.link.header_bytes,
        packet_setup_cycles=base.link.packet_setup_cycles,
        stall_fraction=base.link.stall_fraction,
        link_latency_ns=base.link.link_latency_ns,
        payload_bytes=base.link.payload_bytes)


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

def _run_single(exp: ExperimentConfig):
    cfg = exp.base_config()
    m, n, k = _dims(exp.params)
    dtype = str(exp.params.get("dtype", "int8"))
    rep = simulate_gemm(m, n, k, dtype, cfg)
    rows = [report_row(rep, seed=exp.seed)]
    buckets = {name: [val] for name, val in rep.breakdown.as_dict().items()}
    figure = (f"{exp.name}.png", "breakdown", ([f"{m}x{n}x{k} {dtype}"], buckets,
                                               "latency breakdown"))
    return rows, [figure]


def _sweep_packet(exp: ExperimentConfig):
    cfg = exp.base_config()
    payloads = [int(p) for p in _csv_list(exp.params.get("payloads", "64,128,256,512,1024,2048,4096"), int)]
    links = _csv_list(exp.params.get("links_gbps", "2,8,64"))
    m, n, k = _dims(exp.params)
    dtype = str(exp.params.get("dtype", "int8"))
    points = []
    for gbps in links:
        link = _link_from_gbps(cfg, gbps)
        for p in payloads:
            points.append((m, n, k, dtype,
                           replace(cfg, link=replace(link, payload_bytes=p))))
    reps = _pmap(_sim_point, points, exp.jobs)
    rows, series = [], {}
    idx = 0
    for gbps in links:
        pts = []
        for p in payloads:
            rep = reps[idx]
            idx += 1
            rows.append({"payload_bytes": p, "link_GBps": gbps,
                         "exec_time_cycles": rep.total_cycles,
                         **report_row(rep, seed=exp.seed)})
            pts.append((p, rep.total_seconds * 1e3))
        series[f"{gbps} GB/s"] = pts
    figure = (f"{exp.name}.png", "line",
              (series, "payload (bytes)", "execution time (ms)",
               "packet-size sweep", True, True))
    return rows, [figure]


def _sweep_pcie(exp: ExperimentConfig):
    cfg = exp.base_config()
    configs = [s.strip() for s in str(exp.params.get("links", "2x2,4x4,8x8,16x16")).split(",")]
    m, n, k = _dims(exp.params)
    dtype = str(exp.params.get("dtype", "int8"))
    points = []
    parsed = []
    for item in configs:
        lanes, gtps = item.lower().split("x")
        lanes, gtps = int(lanes), float(gtps)
        parsed.append((lanes, gtps))
        points.append((m, n, k, dtype,
                       replace(cfg, link=_link_from_gbps(cfg, lanes * gtps / 8.0, lanes=lanes))))
    reps = _pmap(_sim_point, points, exp.jobs)
    base_t = reps[0].total_cycles
    rows = []
    pts = []
    for (lanes, gtps), rep in zip(parsed, reps):
        gbps = lanes * gtps / 8.0
        rows.append({"lanes": lanes, "gtps": gtps, "link_GBps": gbps,
                     "exec_time_cycles": rep.total_cycles,
                     "speedup_vs_min": base_t / rep.total_cycles,
                     **report_row(rep, seed=exp.seed)})
        pts.append((gbps, base_t / rep.total_cycles))
    figure = (f"{exp.name}.png", "line",
              ({"speedup": pts}, "link bandwidth (GB/s)", "speedup vs minimal link",
               "link scaling", True, False))
    return rows, [figure]


def _sweep_memtech(exp: ExperimentConfig):
    cfg = exp.base_config()
    techs = [t.strip().upper() for t in str(exp.params.get("techs", "DDR3,DDR4,DDR5,GDDR6,HBM2")).split(",")]
    m, n, k = _dims(exp.params)
    dtype = str(exp.params.get("dtype", "int8"))
    points, meta = [], []
    for tech in techs:
        for placement in ("host", "device"):
            if placement == "host":
                run = replace(cfg, mode=AccessMode.DM, host_mem=tech_preset(tech))
            else:
                run = replace(cfg, mode=AccessMode.DEVMEM, device_mem=tech_preset(tech))
            meta.append((tech, placement))
            points.append((m, n, k, dtype, run))
    reps = _pmap(_sim_point, points, exp.jobs)
    rows = []
    series = {"host": [], "device": []}
    for (tech, placement), rep in zip(meta, reps):
        rows.append({"tech": tech, "placement": placement,
                     "exec_time_cycles": rep.total_cycles,
                     **report_row(rep, seed=exp.seed)})
        series[placement].append(rep.total_seconds * 1e3)
    figure = (f"{exp.name}.png", "bars",
              (techs, series, "execution time (ms)", "memory technology and placement"))
    return rows, [figure]


def _sweep_translation(exp: ExperimentConfig):
    cfg = exp.base_config()
    sizes = [int(s) for s in _csv_list(exp.params.get("sizes", "64,128,256,512,1024,2048"), int)]
    dtype = str(exp.params.get("dtype", "int32"))
    points = [(s, s, s, dtype, cfg) for s in sizes]
    reps = _pmap(_sim_point, points, exp.jobs)
    rows, pts = [], []
    for s, rep in zip(sizes, reps):
        rows.append({"size": s, **report_row(rep, seed=exp.seed)})
        pts.append((rep.footprint_pages, 100.0 * rep.translation.overhead_fraction))
    figure = (f"{exp.name}.png", "line",
              ({"translation overhead": pts}, "memory footprint (pages)",
               "translation overhead (%)", "address-translation cost", True, False))
    return rows, [figure]


def _sweep_memsens(exp: ExperimentConfig):
    cfg = exp.base_config()
    bws = _csv_list(exp.params.get("bandwidths_gbps", "12.8,25.6,50,100,256"))
    lats = _csv_list(exp.params.get("latencies_ns", "4,12,36"))
    m, n, k = _dims(exp.params)
    dtype = str(exp.params.get("dtype", "int8"))
    points, meta = [], []
    for lat in lats:
        for bw in bws:
            tech = replace(tech_preset("DDR3"), name=f"custom-{bw}-{lat}",
                           bandwidth_gbps=bw, fixed_latency_ns=lat)
            meta.append((bw, lat))
            points.append((m, n, k, dtype, replace(cfg, host_mem=tech)))
    reps = _pmap(_sim_point, points, exp.jobs)
    rows, series = [], {}
    for (bw, lat), rep in zip(meta, reps):
        rows.append({"bandwidth_gbps": bw, "latency_ns": lat,
                     "exec_time_cycles": rep.total_cycles,
                     **report_row(rep, seed=exp.seed)})
        series.setdefault(f"{lat} ns", []).append((bw, rep.total_seconds * 1e3))
    figure = (f"{exp.name}.png", "line",
              (series, "memory bandwidth (GB/s)", "execution time (ms)",
               "memory bandwidth/latency sensitivity", True, False))
    return rows, [figure]


def _sweep_overlap(exp: ExperimentConfig):
    from .pipeline import overlap_bound
    cfg = exp.base_config()
    factors = _csv_list(exp.params.get("bw_factors", "1.0,0.5"))
    m, n, k = _dims(exp.params)
    dtype = str(exp.params.get("dtype", "int32"))
    dt = dtype_by_name(dtype)
    geo_l = 4096 // (16 * dt.element_size)
    bound = overlap_bound(cfg.array.width, cfg.array.clock_hz, dt.element_size, geo_l)
    rows, pts = [], []
    for f in factors:
        link = LinkConfig.from_total_gbps(bound * f / 1e9, lanes=16, header_bytes=0.0,
                                          packet_setup_cycles=0.0, stall_fraction=0.0,
                                          link_latency_ns=0.0, payload_bytes=4096)
        rep = simulate_gemm(m, n, k, dtype, replace(cfg, link=link))
        rows.append({"bw_factor": f, "link_GBps": bound * f / 1e9,
                     "steady_idle_cycles": rep.steady_idle_cycles,
                     **report_row(rep, seed=exp.seed)})
        pts.append((f, rep.steady_idle_cycles))
    figure = (f"{exp.name}.png", "line",
              ({"compute idle": pts}, "bandwidth / overlap bound",
               "steady-state idle (cycles/tile)", "double-buffering threshold",
               False, False))
    return rows, [figure]


def _sweep_size(exp: ExperimentConfig):
    cfg = exp.base_config()
    sizes = [int(s) for s in _csv_list(exp.params.get("sizes", "64,128,256,512,1024,2048"), int)]
    dtype = str(exp.params.get("dtype", "int8"))
    points = [(s, s, s, dtype, cfg) for s in sizes]
    reps = _pmap(_sim_point, points, exp.jobs)
    rows, pts = [], []
    for s, rep in zip(sizes, reps):
        gops = 2.0 * s ** 3 / rep.total_seconds / 1e9
        rows.append({"size": s, "sustained_gops": gops, **report_row(rep, seed=exp.seed)})
        pts.append((s, gops))
    figure = (f"{exp.name}.png", "line",
              ({"sustained": pts}, "matrix dimension", "GOPS",
               "GEMM throughput vs size", True, False))
    return rows, [figure]


def _sweep_configs(exp: ExperimentConfig):
    """End-to-end model latency under the four memory/interconnect scenarios."""
    from .calibrate import VIT_HOST_MEM, vit_config
    cfg = exp.base_config()
    ngm = exp.non_gemm_model()
    models = [m.strip() for m in str(exp.params.get("models", "vit-base,vit-large,vit-huge")).split(",")]
    host_links = _csv_list(exp.params.get("links_gbps", "2,8,64"))
    rows = []
    groups, series = [], {}
    for model in models:
        spec = model_preset(model)
        results = {}
        for gbps in host_links:
            run = vit_config(cfg, gbps)
            results[f"host-{int(gbps)}GBps"] = end_to_end(spec, run, ngm)
        dev = replace(cfg, mode=AccessMode.DEVMEM)
        results["devmem-hbm2"] = end_to_end(spec, dev, ngm)
        base_fps = results["devmem-hbm2"].fps
        groups.append(model)
        for label, rep in results.items():
            rows.append({"model": model, "config": label,
                         "normalized_throughput": rep.fps / base_fps,
                         "latency_ms": rep.total_seconds * 1e3,
                         "schema_version": 1, "config_hash": config_hash(cfg),
                         "seed": exp.seed})
            series.setdefault(label, []).append(rep.fps / base_fps)
    figure = (f"{exp.name}.png", "bars",
              (groups, series, "throughput vs DevMem", "memory placement and link scaling"))
    return rows, [figure]


def _sweep_classes(exp: ExperimentConfig):
    """Per-class runtime shares for the CPU baseline and the accelerator."""
    cfg = exp.base_config()
    ngm = exp.non_gemm_model()
    model = str(exp.params.get("model", "vit-base"))
    spec = model_preset(model)
    reports = {
        "cpu-single-core": cpu_end_to_end(spec, CpuBaseline(), ngm),
        "accelerator": end_to_end(spec, cfg, ngm),
    }
    rows = []
    labels = list(reports)
    buckets: dict[str, list[float]] = {}
    for label, rep in reports.items():
        for cls, pct in rep.class_percent.items():
            rows.append({"backend": label, "model": model, "op_class": cls,
                         "percent": pct, "total_seconds": rep.total_seconds,
                         "schema_version": 1, "config_hash": config_hash(cfg),
                         "seed": exp.seed})
            buckets.setdefault(cls, []).append(rep.class_seconds[cls])
    figure = (f"{exp.name}.png", "stacked", (labels, buckets, "runtime class breakdown"))
    return rows, [figure]


_SWEEPS = {
    "packet": _sweep_packet,
    "pcie": _sweep_pcie,
    "memtech": _sweep_memtech,
    "translation": _sweep_translation,
    "memsens": _sweep_memsens,
    "overlap": _sweep_overlap,
    "size": _sweep_size,
    "configs": _sweep_configs,
    "classes": _sweep_classes,
}


def _run_roofline(exp: ExperimentConfig):
    cfg = exp.base_config()
    gops = _csv_list(exp.params.get("gops", "4,8,16,32,64,128,256,512,1024,2048,4096"))
    m, n, k = _dims({**exp.params, "size": exp.params.get("size", 1024)})
    dtype = str(exp.params.get("dtype", "int8"))
    pts = roofline(cfg, [g * 1e9 for g in gops], dims=(m, n, k),
                   dtype=dtype_by_name(dtype))
    rows = [{"ideal_gops": g, "exec_time_seconds": t,
             "schema_version": 1, "config_hash": config_hash(cfg), "seed": exp.seed}
            for g, t in zip(gops, (t for _, t in pts))]
    figure = (f"{exp.name}.png", "line",
              ({"simulated": [(g, t * 1e3) for g, (_, t) in zip(gops, pts)]},
               "ideal compute (GOPS)", "execution time (ms)", "roofline view",
               True, True))
    return rows, [figure]


def _run_crossover(exp: ExperimentConfig):
    cfg = exp.base_config()
    ngm = exp.non_gemm_model()
    fractions = _csv_list(exp.params.get(
        "fractions", "0.0,0.02,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.6"))
    links = _csv_list(exp.params.get("links_gbps", "8,64"))
    model = str(exp.params.get("model", "vit-base"))
    spec = model_preset(model)
    rows, series = [], {}
    for gbps in links:
        run = replace(cfg, link=_link_from_gbps(cfg, gbps))
        curve = crossover_sweep(spec, run, fractions, ngm)
        pts = []
        for frac, ratio in curve:
            rows.append({"link_GBps": gbps, "non_gemm_fraction": frac,
                         "host_over_devmem": ratio, "model": model,
                         "schema_version": 1, "config_hash": config_hash(run),
                         "seed": exp.seed})
            pts.append((frac, ratio))
        series[f"host {gbps} GB/s"] = pts
    series["devmem"] = [(fractions[0], 1.0), (fractions[-1], 1.0)]
    figure = (f"{exp.name}.png", "line",
              (series, "non-GEMM fraction of DevMem runtime",
               "throughput vs DevMem", "host vs device memory crossover",
               False, False))
    return rows, [figure]


def _run_validate_gemm(exp: ExperimentConfig):
    rng = np.random.default_rng(exp.seed)
    cases = int(exp.params.get("cases", 50))
    max_dim = int(exp.params.get("max_dim", 384))
    dump_dir = exp.params.get("dump_fixtures")
    rows = []
    lines = []
    for dtype_name in sorted(DTYPES):
        dt = DTYPES[dtype_name]
        worst = 0.0
        ok = True
        for case in range(cases):
            m, k, n = (int(rng.integers(1, max_dim + 1)) for _ in range(3))
            a = gemm.Matrix(rng.integers(-8, 8, (m, k)), dt)
            b = gemm.Matrix(rng.integers(-8, 8, (k, n)), dt)
            if dump_dir and case == 0:
                matrixio.write_matrix(os.path.join(dump_dir, f"{dtype_name}_a.mfmx"), a)
                a = matrixio.read_matrix(os.path.join(dump_dir, f"{dtype_name}_a.mfmx"))
            want = gemm.naive_gemm(a, b)
            got = gemm.block_matrix_multiply(gemm.pack_a(a), gemm.pack_b(b))
            if dt.is_integer:
                exact = np.array_equal(want.data, got.data)
                ok = ok and exact
                worst = max(worst, 0.0 if exact else float("inf"))
            else:
                ulp = _max_ulp(want.data, got.data)
                worst = max(worst, ulp)
                ok = ok and ulp <= ULP_LIMIT
        status = "PASS" if ok else "FAIL"
        lines.append(f"{status} {dtype_name}: {cases} shapes, max ulp {worst:g}")
        rows.append({"dtype": dtype_name, "cases": cases, "max_ulp": worst,
                     "status": status, "seed": exp.seed, "schema_version": 1})
    return rows, [], lines


def _max_ulp(want: np.ndarray, got: np.ndarray) -> float:
    if want.shape != got.shape:
        return float("inf")
    w = want.astype(np.float64)
    g = got.astype(np.float64)
    diff = np.abs(w - g)
    if not diff.any():
        return 0.0
    ulp = np.spacing(np.abs(want)).astype(np.float64)
    return float((diff / ulp).max())


def _run_calibrate(exp: ExperimentConfig, out_dir: str):
    targets = dict(DEFAULT_TARGETS)
    target_file = exp.params.get("targets")
    if target_file:
        targets = read_kv_file(target_file)
    only = str(exp.params.get("fit", "all"))
    if only == "packet":
        targets = {k: v for k, v in targets.items() if k.startswith("packet.")}
    elif only == "vit":
        targets = {k: v for k, v in targets.items() if k.startswith("vit_large.")}
    base = exp.base_config()
    knobs, residuals = calibrate(targets, base)
    knob_path = os.path.join(out_dir, exp.params.get("knob_file", "calibrated.knobs"))
    if os.path.exists(knob_path) and not exp.force:
        raise ConfigError(f"{knob_path} exists; pass --force to overwrite")
    with open(knob_path, "w", encoding="utf-8") as fh:
        fh.write(knobs_text(knobs, residuals))
    rows = [{"knob": k, "value": v, "schema_version": 1, "seed": exp.seed}
            for k, v in sorted(knobs.items())]
    rows += [{"knob": f"residual.{k}", "value": v, "schema_version": 1, "seed": exp.seed}
             for k, v in sorted(residuals.items())]
    return rows, [], [f"wrote {knob_path}"]


def run_experiment(exp: ExperimentConfig) -> dict:
    """Execute one experiment; writes CSV/JSON (and figures) under out_dir.

    Returns {"rows": ..., "paths": ..., "lines": ...}.
    """
    os.makedirs(exp.out_dir, exist_ok=True)
    lines: list[str] = []
    figures = []
    if exp.kind == "run":
        rows, figures = _run_single(exp)
    elif exp.kind == "sweep":
        axis = str(exp.params.get("sweep"))
        if axis not in _SWEEPS:
            raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(_SWEEPS)}")
        rows, figures = _SWEEPS[axis](exp)
    elif exp.kind == "roofline":
        rows, figures = _run_roofline(exp)
    elif exp.kind == "crossover":
        rows, figures = _run_crossover(exp)
    elif exp.kind == "validate-gemm":
        rows, figures, lines = _run_validate_gemm(exp)
    elif exp.kind == "calibrate":
        rows, figures, lines = _run_calibrate(exp, exp.out_dir)
    else:
        raise ConfigError(f"unknown experiment kind {exp.kind!r}")

    paths = {}
    csv_path = os.path.join(exp.out_dir, f"{exp.name}.csv")
    write_csv(csv_path, rows)
    paths["csv"] = csv_path
    json_path = os.path.join(exp.out_dir, f"{exp.name}.json")
    write_json(json_path, {"name": exp.name, "kind": exp.kind, "seed": exp.seed,
                           "rows": rows})
    paths["json"] = json_path
    if figures and not exp.params.get("no_figures"):
        from . import plots
        for fname, style, args in figures:
            fig_path = os.path.join(exp.out_dir, fname)
            if style == "line":
                plots.line_series(fig_path, *args)
            elif style == "bars":
                plots.grouped_bars(fig_path, *args)
            elif style == "stacked":
                plots.stacked_breakdown(fig_path, *args)
            elif style == "breakdown":
                labels, buckets, title = args
                plots.stacked_breakdown(fig_path, labels, buckets, title)
            paths["figure"] = fig_path
    return {"rows": rows, "paths": paths, "lines": lines}
