"""Line-oriented key-value configuration grammar with dotted section keys.

    # comment
    link.lanes = 16
    link.total_gbps = 2.0      # aggregate shortcut, overrides lane rate
    host_mem.tech = DDR3
    mode = dm

Values parse as bool (true/false), int, float, then string, in that order.
The same grammar carries experiment presets and calibrated knob files, so
fixtures stay diff-friendly.
"""

from __future__ import annotations

from dataclasses import fields, replace

from .dtypes import dtype_by_name
from .errors import ConfigError
from .link import DmaConfig, LinkConfig
from .memory import LlcConfig, MemoryTech, tech_preset
from .pipeline import AccessMode, SystemConfig
from .smmu import SmmuConfig
from .systolic import ArrayConfig


def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def parse_kv(text: str) -> dict:
    """Parse the key-value grammar into a flat {dotted.key: value} mapping."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


def dump_kv(mapping: dict) -> str:
    lines = [f"{k} = {mapping[k]}" for k in sorted(mapping)]
    return "\n".join(lines) + "\n"


def read_kv_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv(fh.read())


_SECTIONS = {
    "array": (ArrayConfig, "array"),
    "link": (LinkConfig, "link"),
    "dma": (DmaConfig, "dma"),
    "smmu": (SmmuConfig, "smmu"),
    "llc": (LlcConfig, "llc"),
}
_TOP_KEYS = ("mode", "eta_io", "eta_sa", "c_drain", "control_scale")


def _build_memory(section: dict, default_name: str) -> MemoryTech:
    tech = tech_preset(section.pop("tech", default_name))
    if section:
        tech = replace(tech, name=section.pop("name", "custom"), **section)
    return tech


def system_config_from_mapping(mapping: dict, base: SystemConfig | None = None) -> SystemConfig:
    """Build a SystemConfig from a flat dotted-key mapping, over a base config."""
    base = base or SystemConfig()
    sections: dict[str, dict] = {}
    top: dict = {}
    for key, value in mapping.items():
        if "." in key:
            sec, leaf = key.split(".", 1)
            sections.setdefault(sec, {})[leaf] = value
        else:
            top[key] = value

    kw = {}
    for sec, (cls, attr) in _SECTIONS.items():
        overrides = sections.pop(sec, None)
        if not overrides:
            continue
        if sec == "array" and "dtype" in overrides:
            overrides["dtype"] = dtype_by_name(overrides["dtype"])
        if sec == "link" and "total_gbps" in overrides:
            total = overrides.pop("total_gbps")
            lanes = overrides.pop("lanes", 4)
            kw[attr] = LinkConfig.from_total_gbps(total, lanes=lanes, **overrides)
            continue
        valid = {f.name for f in fields(cls)}
        unknown = set(overrides) - valid
        if unknown:
            raise ConfigError(f"unknown {sec} keys: {sorted(unknown)}")
        kw[attr] = replace(getattr(base, attr), **overrides)

    for name, default in (("host_mem", "DDR3"), ("device_mem", "HBM2")):
        overrides = sections.pop(name, None)
        if overrides is not None:
            try:
                kw[name] = _build_memory(dict(overrides), default)
            except TypeError as exc:
                raise ConfigError(f"bad {name} keys: {exc}")

    if sections:
        raise ConfigError(f"unknown config sections: {sorted(sections)}")

    for key in list(top):
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    if "mode" in top:
        try:
            top["mode"] = AccessMode(str(top["mode"]).lower())
        except ValueError:
            raise ConfigError(f"unknown mode {top['mode']!r}")
    return replace(base, **kw, **top)


def system_config_from_text(text: str, base: SystemConfig | None = None) -> SystemConfig:
    return system_config_from_mapping(parse_kv(text), base)


def dump_system_config(cfg: SystemConfig) -> str:
    """Canonical flat dump of every parameter; the config-hash input."""
    out: dict = {}
    for sec, (cls, attr) in _SECTIONS.items():
        obj = getattr(cfg, attr)
        for f in fields(cls):
            v = getattr(obj, f.name)
            if sec == "array" and f.name == "dtype":
                v = v.name
            out[f"{sec}.{f.name}"] = v
    for name in ("host_mem", "device_mem"):
        tech = getattr(cfg, name)
        for f in fields(MemoryTech):
            out[f"{name}.{f.name}"] = getattr(tech, f.name)
    out["mode"] = cfg.mode.value
    out["eta_io"] = cfg.eta_io
    out["eta_sa"] = cfg.eta_sa
    out["c_drain"] = cfg.c_drain
    out["control_scale"] = cfg.control_scale
    return dump_kv(out)
