"""Matplotlib figure rendering for the report path; one PNG per experiment
alongside its CSV."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_GOLDEN = (math.sqrt(5) - 1.0) / 2.0
_FIGSIZE = (6.0, 6.0 * _GOLDEN)
_SAVE_KW = dict(dpi=120, bbox_inches="tight", metadata={"Software": None})


def _new_axes(xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _finish(fig, path):
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def line_series(path, series: dict[str, list[tuple[float, float]]], xlabel, ylabel,
                title, logx=False, logy=False):
    fig, ax = _new_axes(xlabel, ylabel, title)
    for label, pts in series.items():
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.plot(xs, ys, marker="o", markersize=3.5, label=label)
    if logx:
        ax.set_xscale("log", base=2)
    if logy:
        ax.set_yscale("log")
    if len(series) > 1:
        ax.legend(fontsize=8)
    _finish(fig, path)


def grouped_bars(path, groups: list[str], series: dict[str, list[float]], ylabel, title,
                 logy=False):
    fig, ax = _new_axes("", ylabel, title)
    n = len(series)
    width = 0.8 / max(1, n)
    for idx, (label, values) in enumerate(series.items()):
        xs = [g + idx * width for g in range(len(groups))]
        ax.bar(xs, values, width=width, label=label)
    ax.set_xticks([g + 0.4 - width / 2 for g in range(len(groups))])
    ax.set_xticklabels(groups, rotation=20, ha="right", fontsize=8)
    if logy:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    _finish(fig, path)


def stacked_breakdown(path, labels: list[str], buckets: dict[str, list[float]], title):
    """Stacked per-run latency buckets, normalized to percentages."""
    fig, ax = _new_axes("", "share of runtime (%)", title)
    totals = [sum(buckets[b][i] for b in buckets) for i in range(len(labels))]
    bottom = [0.0] * len(labels)
    xs = range(len(labels))
    for bucket, values in buckets.items():
        pct = [100.0 * v / t if t else 0.0 for v, t in zip(values, totals)]
        ax.bar(xs, pct, bottom=bottom, label=bucket)
        bottom = [b + p for b, p in zip(bottom, pct)]
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.legend(fontsize=7, ncol=2)
    _finish(fig, path)
