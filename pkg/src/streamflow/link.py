"""Parametric PCIe-like link with packet-size effects, plus DMA engine parameters.

The link serializes packets of (payload + header) wire bytes at the raw rate.
Packet setup is measured in link byte-times (the serializer clock moves one
byte per cycle); up to ``pipeline_depth`` setups overlap serialization.  A
packet whose wire size exceeds the pipeline-covered setup window stalls the
serializer for a fraction of the excess, which is what pushes very large
payloads off the efficiency optimum.  Read and write directions are
independent full-duplex channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError

_ALLOWED_LANES = (1, 2, 4, 8, 16)
ENCODING_128B130B = 128.0 / 130.0  # ~0.9846


@dataclass
class LinkConfig:
    lanes: int = 16
    lane_rate_gtps: float = 64.0          # GT/s per lane (Gen6 default)
    encoding_efficiency: float = ENCODING_128B130B
    max_payload: int = 4096               # bytes per packet
    header_bytes: float = 24.0            # per-packet framing overhead
    packet_setup_cycles: float = 64.0     # per-packet setup, in link byte-times
    pipeline_depth: int = 4               # packet setups in flight
    stall_fraction: float = 0.5           # serializer stall charge per excess wire byte
    link_latency_ns: float = 300.0        # one-way propagation
    payload_bytes: int = 256              # operating transaction size

    def __post_init__(self):
        if self.lanes not in _ALLOWED_LANES:
            raise InvalidInputError(f"lanes must be one of {_ALLOWED_LANES}")
        if self.lane_rate_gtps <= 0:
            raise InvalidInputError("lane rate must be positive")
        if not (64 <= self.max_payload <= 4096) or self.max_payload & (self.max_payload - 1):
            raise InvalidInputError("max_payload must be a power of two in [64, 4096]")
        if not (1 <= self.payload_bytes <= self.max_payload):
            raise InvalidInputError("payload_bytes out of range")

    @classmethod
    def from_total_gbps(cls, total_gb_per_s: float, lanes: int = 4, **kw) -> "LinkConfig":
        """Config from an aggregate GB/s figure (the paper's 'N lanes @ M Gbps' style,
        which quotes nominal totals); encoding is folded into the quoted rate."""
        kw.setdefault("encoding_efficiency", 1.0)
        lane_rate = total_gb_per_s * 8.0 / lanes / kw["encoding_efficiency"]
        return cls(lanes=lanes, lane_rate_gtps=lane_rate, **kw)


@dataclass
class DmaConfig:
    read_channels: int = 2
    write_channels: int = 2
    burst_bytes: int = 1024
    inflight_tiles: int = 4            # posted tile reads in flight per descriptor ring
    skip_resident_tiles: bool = True   # elide the DMA when the tile is already on chip
    descriptor_cycles: float = 120.0   # driver cycles to build + enqueue one descriptor
    doorbell_cycles: float = 60.0      # MMIO doorbell write
    interrupt_cycles: float = 200.0    # MSI completion handling

    def __post_init__(self):
        if self.read_channels < 1 or self.write_channels < 1:
            raise InvalidInputError("DMA needs at least one channel per direction")
        if not (1 <= self.burst_bytes <= 4096):
            raise InvalidInputError("burst_bytes must be in [1, 4096]")
        if self.inflight_tiles < 1:
            raise InvalidInputError("inflight_tiles must be >= 1")


def raw_bandwidth(link: LinkConfig) -> float:
    """Raw bytes/s per direction: lanes * lane rate * encoding / 8."""
    return link.lanes * link.lane_rate_gtps * 1e9 * link.encoding_efficiency / 8.0


def _stall_window_bytes(link: LinkConfig) -> float:
    return link.pipeline_depth * link.packet_setup_cycles


def _packet_wire_time_ns(link: LinkConfig, payload: float) -> float:
    """Serializer occupancy of one packet, stall charge included."""
    wire = payload + link.header_bytes
    excess = max(0.0, wire - _stall_window_bytes(link))
    return (wire + link.stall_fraction * excess) / raw_bandwidth(link) * 1e9


def effective_bandwidth(link: LinkConfig, payload: int) -> float:
    """Sustained bytes/s at a given transaction size; unimodal with an interior optimum."""
    if not (1 <= payload <= link.max_payload):
        raise InvalidInputError(f"payload {payload} outside [1, {link.max_payload}]")
    return payload / _packet_wire_time_ns(link, payload) * 1e9


def serialize_time_ns(link: LinkConfig, nbytes: int) -> float:
    """Occupancy of one direction for an nbytes transfer split into operating-size packets."""
    if nbytes < 1:
        raise InvalidInputError("transfer must move at least one byte")
    p = link.payload_bytes
    full, rem = divmod(nbytes, p)
    t = full * _packet_wire_time_ns(link, p)
    if rem:
        t += _packet_wire_time_ns(link, rem)
    return t


def packet_count(link: LinkConfig, nbytes: int) -> int:
    return math.ceil(nbytes / link.payload_bytes)


def transfer_time(nbytes: int, link: LinkConfig, dma: DmaConfig) -> float:
    """End-to-end latency in ns (cycles at the 1 GHz reference clock) of one DMA
    transfer: descriptor setup, one exposed packet setup, pipelined packet
    serialization, and link propagation."""
    if nbytes < 1:
        raise InvalidInputError("transfer must move at least one byte")
    setup_ns = link.packet_setup_cycles / raw_bandwidth(link) * 1e9
    return dma.descriptor_cycles + setup_ns + serialize_time_ns(link, nbytes) + link.link_latency_ns
