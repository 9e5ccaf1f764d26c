"""Benchmark execution and report rendering.

Runs each requested method over a suite of instances and renders the
results three ways: an aligned text table, versioned line-delimited
records carrying the same numbers, and matplotlib figures saved next to
the records.  Per-instance work uses independently derived RNG streams,
so the worker pool size never changes the numbers.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .core import Instance, InvalidArgument, Tour, random_instance
from .local_search import (
    InsertionVariant,
    LocalSearchConfig,
    combined_local_search,
    insertion_heuristic,
    plain_two_opt_baseline,
)
from .policy import DecodeMode, PolicyParams, sample_best
from .rng import RngStream
from .tsplib import KNOWN_OPTIMA, TsplibRecord, tsplib_length

RECORDS_VERSION = "tspkit-bench v1"

# Concorde mean tour lengths for uniform instances, used as fixed gap
# references for the random suites (no exact solver is bundled).
RANDOM_REFERENCE = {20: 3.830, 50: 5.691, 100: 7.761}

METHODS = (
    "random-insert",
    "nearest-insert",
    "farthest-insert",
    "2opt",
    "ls-only",
    "emagic",
    "emagic-s",
    "emagic-S",
)

_POLICY_METHODS = {"ls-only", "emagic", "emagic-s", "emagic-S"}


def default_thread_count() -> int:
    raw = os.environ.get("TSPKIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class BenchRow:
    method: str
    label: str
    count: int
    mean_length: float
    gap_pct: float | None
    gap_ref: str
    wall_s: float


@dataclass
class BenchReport:
    rows: list[BenchRow]

    def table(self, timings: bool = False) -> str:
        header = ["method", "instances", "mean length", "gap %", "gap vs"]
        if timings:
            header.append("time s")
        body = []
        for r in self.rows:
            cells = [
                r.method,
                f"{r.label} x{r.count}",
                _fmt_len(r.mean_length),
                _fmt_gap(r.gap_pct),
                r.gap_ref or "-",
            ]
            if timings:
                cells.append(_fmt_wall(r.wall_s))
            body.append(cells)
        widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
                  for i, h in enumerate(header)]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
            "  ".join("-" * w for w in widths),
        ]
        for cells in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
        return "\n".join(lines)

    def records(self, timings: bool = False) -> str:
        lines = [RECORDS_VERSION]
        for r in self.rows:
            fields = [
                r.method,
                r.label,
                str(r.count),
                _fmt_len(r.mean_length),
                _fmt_gap(r.gap_pct),
                r.gap_ref or "-",
            ]
            if timings:
                fields.append(_fmt_wall(r.wall_s))
            lines.append("|".join(fields))
        return "\n".join(lines)


def _fmt_len(x: float) -> str:
    return f"{x:.4f}"


def _fmt_gap(x: float | None) -> str:
    return "" if x is None else f"{x:.2f}"


def _fmt_wall(x: float) -> str:
    return f"{x:.3f}"


def solve_instance(
    method: str,
    instance: Instance,
    rng: RngStream,
    ls_config: LocalSearchConfig,
    params: PolicyParams | None = None,
) -> Tour:
    """One tour for one instance under a named benchmark method."""
    if method == "random-insert":
        return insertion_heuristic(instance, InsertionVariant.RANDOM, rng)
    if method == "nearest-insert":
        return insertion_heuristic(instance, InsertionVariant.NEAREST, rng)
    if method == "farthest-insert":
        return insertion_heuristic(instance, InsertionVariant.FARTHEST, rng)
    if method == "2opt":
        return plain_two_opt_baseline(instance, rng)
    if method in _POLICY_METHODS:
        if params is None:
            raise InvalidArgument(f"method {method!r} needs policy parameters")
        if method == "ls-only":
            return sample_best(instance, params, 1, ls_config, rng,
                               mode=DecodeMode.SAMPLE)
        k = {"emagic": 1, "emagic-s": 10, "emagic-S": 100}[method]
        return sample_best(instance, params, k, ls_config, rng)
    raise InvalidArgument(f"unknown method {method!r}")


def _run_many(
    method: str,
    instances: list[Instance],
    rng: RngStream,
    ls_config: LocalSearchConfig,
    params: PolicyParams | None,
    workers: int,
) -> list[Tour]:
    def one(i: int) -> Tour:
        return solve_instance(method, instances[i], rng.derive(i), ls_config, params)

    if workers <= 1:
        return [one(i) for i in range(len(instances))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(instances))))


def random_suite(name: str, count: int, rng: RngStream) -> list[Instance]:
    sizes = {"random20": 20, "random50": 50, "random100": 100}
    if name not in sizes:
        raise InvalidArgument(f"unknown suite {name!r}")
    if count < 1:
        raise InvalidArgument("suite instance count must be positive")
    n = sizes[name]
    return [random_instance(n, rng.derive(i)) for i in range(count)]


def bench_random_suite(
    suite: str,
    methods: list[str],
    count: int,
    rng: RngStream,
    ls_config: LocalSearchConfig,
    params: PolicyParams | None = None,
    workers: int | None = None,
) -> BenchReport:
    instances = random_suite(suite, count, rng.derive(0))
    n = instances[0].n
    ref = RANDOM_REFERENCE.get(n)
    workers = default_thread_count() if workers is None else workers
    rows = []
    for m, method in enumerate(methods):
        t0 = time.perf_counter()
        tours = _run_many(method, instances, rng.derive(1, m), ls_config, params, workers)
        wall = time.perf_counter() - t0
        mean_len = float(np.mean([t.length for t in tours]))
        gap = None if ref is None else 100.0 * (mean_len - ref) / ref
        rows.append(BenchRow(method, suite, count, mean_len, gap,
                             "reference" if ref is not None else "", wall))
    return BenchReport(rows)


def bench_tsplib_suite(
    items: list[tuple[TsplibRecord, Instance]],
    methods: list[str],
    rng: RngStream,
    ls_config: LocalSearchConfig,
    params: PolicyParams | None = None,
    workers: int | None = None,
) -> BenchReport:
    """One row per (method, instance); gaps use the integer TSPLIB length
    convention against known optima, solving happens on normalized coords."""
    workers = default_thread_count() if workers is None else workers
    rows = []
    for m, method in enumerate(methods):
        for i, (record, instance) in enumerate(items):
            t0 = time.perf_counter()
            tour = _run_many(method, [instance], rng.derive(1, m, i),
                             ls_config, params, workers)[0]
            wall = time.perf_counter() - t0
            int_len = tsplib_length(record, tour)
            opt = KNOWN_OPTIMA.get(record.name)
            gap = None if opt is None else 100.0 * (int_len - opt) / opt
            rows.append(BenchRow(method, record.name, 1, float(int_len), gap,
                                 "optimal" if opt is not None else "", wall))
    return BenchReport(rows)


def save_bench_figure(report: BenchReport, path: str | Path) -> None:
    """Grouped bar chart of mean tour length per method and suite."""
    labels = sorted({r.label for r in report.rows})
    methods = list(dict.fromkeys(r.method for r in report.rows))
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(methods) * len(labels) / 2, 4))
    width = 0.8 / max(1, len(labels))
    x = np.arange(len(methods))
    lookup = {(r.method, r.label): r.mean_length for r in report.rows}
    for j, label in enumerate(labels):
        vals = [lookup.get((m, label), np.nan) for m in methods]
        ax.bar(x + j * width, vals, width, label=label)
    ax.set_xticks(x + width * (len(labels) - 1) / 2)
    ax.set_xticklabels(methods, rotation=30, ha="right")
    ax.set_ylabel("mean tour length")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_tour_figure(instance: Instance, tour: Tour, path: str | Path,
                     title: str = "") -> None:
    """Closed tour over the city scatter."""
    order = np.concatenate([tour.order, tour.order[:1]])
    pts = instance.coords[order]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(pts[:, 0], pts[:, 1], "-", color="tab:blue", lw=1)
    ax.scatter(instance.coords[:, 0], instance.coords[:, 1], s=14,
               color="tab:red", zorder=3)
    if title:
        ax.set_title(title)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
