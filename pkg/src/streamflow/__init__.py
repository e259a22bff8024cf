"""streamflow: performance simulator and functional blocked-GEMM library for a
page-streaming systolic-array accelerator attached over a parametric PCIe-like
link with DMA, SMMU translation, and configurable memory hierarchies."""

from .dtypes import (ARRAY_WIDTH, DTYPES, FP16, FP32, INT8, INT16, INT32,
                     PAGE_BYTES, DataType, TileGeometry, dtype_by_name, tile_geometry)
from .gemm import (Layout, Matrix, TileAccessTrace, TiledMatrix, TraceEvent,
                   block_matrix_multiply, multi_acc, naive_gemm, pack_a, pack_b,
                   trace_tile_accesses, unpack)
from .link import (DmaConfig, LinkConfig, effective_bandwidth, raw_bandwidth,
                   transfer_time)
from .memory import (Llc, LlcConfig, MemoryServer, MemoryTech, Placement,
                     llc_access, service_time, tech_preset)
from .pipeline import (AccessMode, LatencyBreakdown, SimReport, SystemConfig,
                       config_hash, overlap_bound, overlap_bound_asymptote,
                       roofline, simulate_gemm, srams_sensitivity)
from .smmu import (SmmuConfig, Tlb, TranslationStats, footprint_pages,
                   stats_report, translate)
from .systolic import ArrayConfig, peak_gops, sa_compute_tile, tile_compute_cycles
from .workload import (CpuBaseline, GemmOp, NonGemmModel, NonGemmOp, OpClass,
                       TransformerSpec, WorkloadReport, cpu_end_to_end,
                       crossover_sweep, decompose, end_to_end, gemm_flops,
                       gemm_flops_closed_form, model_preset)

__version__ = "0.1.0"
