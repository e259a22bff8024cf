"""Command-line harness: experiment presets, sweeps, calibration, and GEMM
validation, emitting CSV/JSON plus figures.

Exit codes: 0 ok, 1 validation failure, 2 config error, 3 invariant breach,
4 calibration non-convergence.
"""

from __future__ import annotations

import argparse
import sys

from .calibrate import DEFAULT_TARGETS
from .errors import CalibrationError, ConfigError, InvariantError, StreamflowError
from .experiments import (ExperimentConfig, experiment_from_mapping, load_preset,
                          preset_names, run_experiment)
from .config import parse_kv, read_kv_file


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="experiment config file (key = value)")
    p.add_argument("--preset", metavar="NAME", help="named experiment preset")
    p.add_argument("--out", metavar="DIR", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="parallel sweep points (results stay config-ordered)")
    p.add_argument("--knobs", metavar="PATH", help="calibrated knob file to apply")
    p.add_argument("--force", action="store_true", help="overwrite existing knob files")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one experiment/system key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="streamflow",
                                 description="accelerator system simulator harness")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, brief in (
        ("run", "simulate one GEMM and report its latency breakdown"),
        ("sweep", "run a parameter sweep experiment"),
        ("roofline", "execution time vs ideal compute throughput"),
        ("crossover", "host-vs-device-memory study over the non-GEMM share"),
        ("validate-gemm", "compare the blocked GEMM against the oracle"),
        ("calibrate", "fit model knobs to reference deltas"),
    ):
        p = sub.add_parser(name, help=brief)
        _add_common(p)
    lp = sub.add_parser("presets", help="list available experiment presets")
    lp.add_argument("--verbose", action="store_true")
    return ap


def _build_experiment(args, kind: str) -> ExperimentConfig:
    if args.preset:
        exp = load_preset(args.preset)
        if exp.kind != kind and not (kind == "sweep" and exp.kind == "sweep"):
            if exp.kind != kind:
                raise ConfigError(
                    f"preset {args.preset!r} is a {exp.kind!r} experiment, not {kind!r}")
    elif args.config:
        mapping = read_kv_file(args.config)
        mapping.setdefault("kind", kind)
        exp = experiment_from_mapping(mapping)
    else:
        exp = experiment_from_mapping({"kind": kind, "name": kind})
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides = parse_kv(item.replace("=", " = ", 1))
        for key, value in overrides.items():
            if key.startswith("system."):
                exp.system[key[len("system."):]] = value
            else:
                exp.params[key] = value
    exp.out_dir = args.out
    exp.seed = args.seed
    exp.jobs = args.jobs
    exp.force = args.force
    if args.knobs:
        exp.knobs = read_kv_file(args.knobs)
    return exp


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name in preset_names():
            print(name)
        if getattr(args, "verbose", False):
            print("\ncalibration targets:")
            for key, value in sorted(DEFAULT_TARGETS.items()):
                print(f"  {key} = {value}")
        return 0
    try:
        exp = _build_experiment(args, args.command)
        result = run_experiment(exp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 3
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 4
    except StreamflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in result["lines"]:
        print(line)
    for kind, path in sorted(result["paths"].items()):
        print(f"{kind}: {path}")
    if args.command == "validate-gemm":
        return 0 if all(r["status"] == "PASS" for r in result["rows"]) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
