import numpy as np
import pytest

from streamflow.dtypes import DTYPES
from streamflow.link import DmaConfig, LinkConfig
from streamflow.memory import MemoryTech
from streamflow.pipeline import SystemConfig
from streamflow.smmu import SmmuConfig
from streamflow.systolic import ArrayConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def ideal_link(gbps: float, **kw) -> LinkConfig:
    kw.setdefault("header_bytes", 0.0)
    kw.setdefault("packet_setup_cycles", 0.0)
    kw.setdefault("stall_fraction", 0.0)
    kw.setdefault("link_latency_ns", 0.0)
    kw.setdefault("payload_bytes", 4096)
    return LinkConfig.from_total_gbps(gbps, lanes=16, **kw)


def zero_overhead_config(gbps: float = 1e6, dtype=None, read_channels: int = 2,
                         clock_hz: float = 1e9, skip_resident: bool = True) -> SystemConfig:
    """All side costs off: transfers and compute only."""
    from streamflow.dtypes import INT8
    return SystemConfig(
        array=ArrayConfig(clock_hz=clock_hz, dtype=dtype or INT8),
        link=ideal_link(gbps),
        dma=DmaConfig(descriptor_cycles=0, doorbell_cycles=0, interrupt_cycles=0,
                      read_channels=read_channels, skip_resident_tiles=skip_resident),
        smmu=SmmuConfig(ptw_base_cycles=0.0, ptw_memory_visits=0),
        host_mem=MemoryTech("ideal", 1, 64, 1e6, 1, fixed_latency_ns=0.0),
    )


def random_matrix(rng, rows, cols, dtype):
    """Random values that keep accumulator arithmetic exact for every dtype."""
    dt = DTYPES[dtype] if isinstance(dtype, str) else dtype
    if dt.is_integer:
        info = np.iinfo(dt.np_dtype)
        vals = rng.integers(info.min, info.max + 1, (rows, cols))
    else:
        vals = rng.integers(-8, 8, (rows, cols))
    from streamflow.gemm import Matrix
    return Matrix(vals, dt)
