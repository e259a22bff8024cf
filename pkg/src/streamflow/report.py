"""Deterministic CSV/JSON emission for simulation reports.

Every CSV carries a header row plus schema_version and config_hash columns;
floats are rendered with repr so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json

from .pipeline import SimReport

CSV_SCHEMA_VERSION = 1


def fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(rep: SimReport, **extra) -> dict:
    """Flatten one SimReport into the canonical CSV row."""
    st = rep.translation
    row = {
        "schema_version": CSV_SCHEMA_VERSION,
        "config_hash": rep.config_hash,
        "m": rep.m, "n": rep.n, "k": rep.k,
        "dtype": rep.dtype,
        "mode": rep.mode,
        "c_drain": rep.c_drain,
        "total_cycles": rep.total_cycles,
        "total_seconds": rep.total_seconds,
        "fetch_cycles": rep.breakdown.fetch,
        "link_txn_cycles": rep.breakdown.link_txn,
        "translation_cycles": rep.breakdown.translation,
        "llc_bus_cycles": rep.breakdown.llc_bus,
        "dram_cycles": rep.breakdown.dram,
        "compute_cycles": rep.breakdown.compute,
        "control_cycles": rep.breakdown.control,
        "footprint_pages": rep.footprint_pages,
        "tlb_lookups": st.lookups,
        "tlb_misses": st.misses,
        "ptw_count": st.walks,
        "ptw_mean_cycles": st.mean_ptw_cycles,
        "trans_overhead_pct": 100.0 * st.overhead_fraction,
        "packets": rep.packets,
        "descriptors": rep.descriptors,
        "interrupts": rep.interrupts,
        "link_read_bytes": rep.link_read_bytes,
        "link_write_bytes": rep.link_write_bytes,
        "mem_read_bytes": rep.mem_read_bytes,
        "mem_write_bytes": rep.mem_write_bytes,
        "llc_hits": rep.llc_hits,
        "llc_misses": rep.llc_misses,
        "eta_io_measured": rep.eta_io_measured,
        "eta_sa_measured": rep.eta_sa_measured,
        "steady_idle_cycles": rep.steady_idle_cycles,
        "mean_tile_transfer_cycles": rep.mean_tile_transfer_cycles,
    }
    row.update(extra)
    return row


def rows_to_csv(rows: list[dict]) -> str:
    """Render dict rows (front-extra columns first) to CSV text."""
    if not rows:
        return ""
    fieldnames = list(rows[0])
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: fmt(v) for k, v in row.items()})
    return buf.getvalue()


def write_csv(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def report_json(rep: SimReport) -> dict:
    d = report_row(rep)
    d["breakdown"] = rep.breakdown.as_dict()
    return d


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
