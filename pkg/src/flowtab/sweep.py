"""Batch experiment runner: multi-seed simulation sweeps with analytic columns.

A sweep evaluates the first/threshold algorithms over a threshold series
and the sampling algorithm over a probability series, for every seed,
over one generated population per seed (the population depends only on
(seed, flow_count), so it is shared across all cells of that seed).
Cells are merged into per-parameter means and standard deviations, with
the analytic value alongside.  Output is byte-identical for identical
specs regardless of the worker count.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import multiprocessing
import numpy as np

from .algorithms import AlgorithmSpec, DegenerateError, aggregate_batch, evaluate_batch
from .analytic import AnalyticReport, analytic_for_spec
from .generator import GeneratorConfig, generate_arrays, read_flow_csv
from .model import TrafficModel

__all__ = [
    "SweepSpec",
    "SweepCell",
    "SweepResult",
    "run_sweep",
    "emit_table",
    "default_thresholds",
    "default_probabilities",
]

_SAMPLING_TAG = {"uniform": 2, "size-scaled": 3}


def default_thresholds(axis: str) -> tuple[float, ...]:
    """Powers of two: 1..2^21 packets, or 64..2^30 bytes."""
    if axis == "length":
        return tuple(float(2 ** k) for k in range(0, 22))
    return tuple(float(2 ** k) for k in range(6, 31))


def default_probabilities(axis: str) -> tuple[float, ...]:
    """Halving series 1, 0.5, ... matching the length of the threshold series."""
    count = 22 if axis == "length" else 25
    return tuple(0.5 ** k for k in range(count))


@dataclass(frozen=True)
class SweepSpec:
    model: TrafficModel
    axis: str = "length"
    algorithms: tuple[str, ...] = ("first", "threshold", "sampling")
    thresholds: tuple[float, ...] = ()
    probabilities: tuple[float, ...] = ()
    seeds: tuple[int, ...] = (1,)
    flow_count: int = 1_000_000
    duration_model: str = "equal"
    joint_coupling: str = "comonotone"
    min_packet: int = 64
    jobs: int = 1
    population_csv: str | None = None

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError("sweep requires at least one seed")
        bad = [a for a in self.algorithms if a not in ("first", "threshold", "sampling")]
        if bad:
            raise ValueError(f"unknown algorithm(s) {bad}")
        needs_thresholds = any(a in self.algorithms for a in ("first", "threshold"))
        if needs_thresholds and not self.thresholds:
            object.__setattr__(self, "thresholds", default_thresholds(self.axis))
        if "sampling" in self.algorithms and not self.probabilities:
            object.__setattr__(self, "probabilities", default_probabilities(self.axis))
        if not self.thresholds and not self.probabilities:
            raise ValueError("sweep requires a non-empty parameter series")

    def cells(self) -> list[AlgorithmSpec]:
        out = []
        for kind in self.algorithms:
            if kind in ("first", "threshold"):
                out.extend(AlgorithmSpec(kind, self.axis, threshold=t) for t in self.thresholds)
            else:
                out.extend(
                    AlgorithmSpec(kind, self.axis, probability=p) for p in self.probabilities
                )
        return out


@dataclass(frozen=True)
class SweepCell:
    kind: str
    parameter: float
    mean: tuple[float, float, float]  # coverage %, ops reduction, occ reduction
    std: tuple[float, float, float]
    analytic: AnalyticReport
    per_seed: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class SweepResult:
    axis: str
    algorithms: tuple[str, ...]
    seeds: tuple[int, ...]
    flow_count: int
    cells: tuple[SweepCell, ...]

    def cell(self, kind: str, parameter: float) -> SweepCell:
        for c in self.cells:
            if c.kind == kind and c.parameter == parameter:
                return c
        raise KeyError((kind, parameter))

    def series(self, kind: str) -> list[SweepCell]:
        return [c for c in self.cells if c.kind == kind]


def _sampling_rng(seed: int, spec: AlgorithmSpec) -> np.random.Generator:
    # value-derived spawn key: identical (seed, mode, p) cells draw identically
    bits = int(np.float64(spec.probability).view(np.uint64))
    key = (_SAMPLING_TAG[spec.sampling_mode], bits >> 32, bits & 0xFFFFFFFF)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def _metrics_tuple(lengths, sizes, spec, seed, duration_model, s_max) -> tuple[float, float, float]:
    rng = _sampling_rng(seed, spec) if spec.kind == "sampling" else None
    created, covered, occ = evaluate_batch(lengths, sizes, spec, rng=rng, s_max=s_max)
    try:
        rep = aggregate_batch(lengths, sizes, created, covered, occ, duration_model)
    except DegenerateError:
        return (0.0, math.inf, math.inf)
    return (rep.coverage_pct, rep.operations_reduction, rep.occupancy_reduction)


def _run_seed(spec: SweepSpec, seed: int) -> list[tuple[float, float, float]]:
    if spec.population_csv is not None:
        lengths, sizes = read_flow_csv(spec.population_csv)
    else:
        config = GeneratorConfig(
            seed=seed,
            flow_count=spec.flow_count,
            joint_coupling=spec.joint_coupling,
            min_packet=spec.min_packet,
        )
        lengths, sizes = generate_arrays(spec.model, config)
    s_max = spec.model.max_packet_size
    return [
        _metrics_tuple(lengths, sizes, cell, seed, spec.duration_model, s_max)
        for cell in spec.cells()
    ]


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if any(math.isinf(v) for v in values):
        return math.inf, math.nan
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, std


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Run the full sweep; deterministic for a given spec (seeds explicit)."""
    cells = spec.cells()
    if spec.jobs > 1 and len(spec.seeds) > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=spec.jobs, mp_context=ctx) as pool:
            per_seed = list(pool.map(_run_seed, [spec] * len(spec.seeds), spec.seeds))
    else:
        per_seed = [_run_seed(spec, seed) for seed in spec.seeds]

    out = []
    for i, cell in enumerate(cells):
        rows = [per_seed[j][i] for j in range(len(spec.seeds))]
        cov_m, cov_s = _mean_std([r[0] for r in rows])
        ops_m, ops_s = _mean_std([r[1] for r in rows])
        occ_m, occ_s = _mean_std([r[2] for r in rows])
        try:
            ana = analytic_for_spec(spec.model, cell)
        except DegenerateError:
            ana = AnalyticReport(0.0, math.inf, math.inf, 0.0)
        parameter = cell.threshold if cell.kind in ("first", "threshold") else cell.probability
        out.append(
            SweepCell(
                kind=cell.kind,
                parameter=float(parameter),
                mean=(cov_m, ops_m, occ_m),
                std=(cov_s, ops_s, occ_s),
                analytic=ana,
                per_seed=tuple(rows),
            )
        )
    return SweepResult(
        axis=spec.axis,
        algorithms=tuple(spec.algorithms),
        seeds=tuple(spec.seeds),
        flow_count=spec.flow_count,
        cells=tuple(out),
    )


# -- rendering ----------------------------------------------------------------


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.2f}"


def _fmt_param(kind: str, value: float) -> str:
    if kind == "sampling":
        return f"{value:.2e}"
    return f"{value:g}"


def emit_table(result: SweepResult, fmt: str) -> str:
    """Render a sweep as csv, markdown, or plotdata.

    csv / markdown mirror the reference layout: a threshold-parameter block
    with the first and threshold algorithm metrics side by side, then a
    probability block with the sampling metrics.  plotdata emits
    (algorithm, coverage, occ_reduction) rows for curve plotting.
    """
    if fmt not in ("csv", "markdown", "plotdata"):
        raise ValueError(f"unknown table format {fmt!r}")
    first = result.series("first")
    thr = result.series("threshold")
    smp = result.series("sampling")

    if fmt == "plotdata":
        lines = ["algorithm,coverage,occ_reduction"]
        for series in (first, thr, smp):
            for c in series:
                lines.append(f"{c.kind},{_fmt(c.mean[0])},{_fmt(c.mean[2])}")
        return "\n".join(lines) + "\n"

    header: list[str] = []
    if first or thr:
        header.append("param")
        if first:
            header += ["first_cov", "first_ops", "first_occ"]
        if thr:
            header += ["thr_cov", "thr_ops", "thr_occ"]
    if smp:
        header += ["prob", "smp_cov", "smp_ops", "smp_occ"]

    n_rows = max(len(first), len(thr), len(smp))
    rows: list[list[str]] = []
    for i in range(n_rows):
        row: list[str] = []
        if first or thr:
            tcell = (first or thr)[i] if i < len(first or thr) else None
            row.append(_fmt_param("threshold", tcell.parameter) if tcell else "")
            for series in (first, thr):
                if series:
                    if i < len(series):
                        c = series[i]
                        row += [_fmt(c.mean[0]), _fmt(c.mean[1]), _fmt(c.mean[2])]
                    else:
                        row += ["", "", ""]
        if smp:
            if i < len(smp):
                c = smp[i]
                row += [_fmt_param("sampling", c.parameter), _fmt(c.mean[0]), _fmt(c.mean[1]), _fmt(c.mean[2])]
            else:
                row += ["", "", "", ""]
        rows.append(row)

    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in rows:
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    # markdown
    buf = io.StringIO()
    buf.write("| " + " | ".join(header) + " |\n")
    buf.write("|" + "|".join("---" for _ in header) + "|\n")
    for row in rows:
        buf.write("| " + " | ".join(row) + " |\n")
    return buf.getvalue()
