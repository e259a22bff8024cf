import pytest

from streamflow.config import (dump_kv, dump_system_config, parse_kv, parse_value,
                               system_config_from_mapping, system_config_from_text)
from streamflow.errors import ConfigError
from streamflow.pipeline import AccessMode, SystemConfig, config_hash


def test_parse_values():
    assert parse_value("16") == 16
    assert parse_value("0.5") == 0.5
    assert parse_value("true") is True
    assert parse_value("False") is False
    assert parse_value("DDR3") == "DDR3"


def test_parse_kv_grammar():
    text = """
    # comment line
    link.lanes = 16
    mode = dc           # trailing comment
    eta_io = 0.9
    """
    kv = parse_kv(text)
    assert kv == {"link.lanes": 16, "mode": "dc", "eta_io": 0.9}


def test_parse_kv_errors():
    with pytest.raises(ConfigError):
        parse_kv("just some words")
    with pytest.raises(ConfigError):
        parse_kv("= value")


def test_dump_kv_sorted_roundtrip():
    kv = {"b.two": 2, "a.one": 1.5, "flag": True}
    text = dump_kv(kv)
    assert text.splitlines()[0] == "a.one = 1.5"
    assert parse_kv(text) == kv


def test_system_config_from_text():
    cfg = system_config_from_text("""
        link.lanes = 8
        link.lane_rate_gtps = 16
        dma.read_channels = 1
        smmu.tlb_entries = 128
        mode = devmem
        eta_sa = 0.9
        host_mem.tech = DDR5
        array.dtype = fp16
    """)
    assert cfg.link.lanes == 8
    assert cfg.dma.read_channels == 1
    assert cfg.smmu.tlb_entries == 128
    assert cfg.mode is AccessMode.DEVMEM
    assert cfg.eta_sa == 0.9
    assert cfg.host_mem.name == "DDR5"
    assert cfg.array.dtype.name == "fp16"


def test_total_gbps_shortcut():
    cfg = system_config_from_text("link.total_gbps = 2.0\nlink.lanes = 4\n")
    from streamflow.link import raw_bandwidth
    assert raw_bandwidth(cfg.link) == pytest.approx(2e9)


def test_custom_memory_fields():
    cfg = system_config_from_text("""
        host_mem.tech = DDR3
        host_mem.name = lab-dimm
        host_mem.bandwidth_gbps = 50.0
        host_mem.fixed_latency_ns = 36.0
    """)
    assert cfg.host_mem.name == "lab-dimm"
    assert cfg.host_mem.bandwidth_gbps == 50.0
    assert cfg.host_mem.fixed_latency_ns == 36.0


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        system_config_from_text("link.warp_factor = 9")
    with pytest.raises(ConfigError):
        system_config_from_text("quantum.bits = 3")
    with pytest.raises(ConfigError):
        system_config_from_text("mode = hyperspace")


def test_dump_contains_every_knob():
    text = dump_system_config(SystemConfig())
    kv = parse_kv(text)
    for key in ("array.width", "link.header_bytes", "dma.inflight_tiles",
                "smmu.tlb_entries", "llc.size_bytes", "host_mem.bandwidth_gbps",
                "device_mem.bandwidth_gbps", "mode", "eta_io", "control_scale"):
        assert key in kv


def test_hash_roundtrip_stability():
    cfg = SystemConfig()
    rebuilt = system_config_from_text("link.lanes = 16")
    assert config_hash(cfg) == config_hash(rebuilt)
