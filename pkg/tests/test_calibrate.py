import pytest

from streamflow.calibrate import (PAYLOAD_GRID, calibrate, calibrate_packet,
                                  knobs_text)
from streamflow.config import parse_kv
from streamflow.link import LinkConfig, effective_bandwidth


def test_empty_targets_identity():
    knobs, residuals = calibrate({})
    assert knobs == {}
    assert residuals == {}


def test_packet_calibration_hits_anchors():
    targets = {"packet.penalty_64": 0.12, "packet.penalty_4096_at_2gbs": 0.36}
    knobs, residuals = calibrate_packet(targets, dims=384)
    assert residuals["packet.max_residual"] <= 0.03
    link = LinkConfig(header_bytes=knobs["link.header_bytes"],
                      packet_setup_cycles=knobs["link.packet_setup_cycles"])
    eff = [effective_bandwidth(link, p) for p in PAYLOAD_GRID]
    assert PAYLOAD_GRID[eff.index(max(eff))] == 256


def test_knobs_text_parses_back():
    text = knobs_text({"link.header_bytes": 14.0, "control_scale": 0.2},
                      {"packet.max_residual": 0.006})
    kv = parse_kv(text)
    assert kv == {"link.header_bytes": 14.0, "control_scale": 0.2}
    assert "# residual packet.max_residual" in text
