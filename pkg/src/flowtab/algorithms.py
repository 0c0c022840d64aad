"""Per-flow evaluation of the first / threshold / sampling algorithms.

Each evaluator returns a FlowOutcome relative to the reactive baseline
(every flow gets an entry at its first packet).  Occupancy uses the
equal-flow-duration model by default: a flow's entry occupies the table
for the fraction of the flow's packets from the triggering packet
onward.  ``aggregate`` folds outcomes into the three report metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .generator import FlowRecord, packetize
from .model import DEFAULT_MAX_PACKET

__all__ = [
    "DegenerateError",
    "AlgorithmSpec",
    "FlowOutcome",
    "PathProfile",
    "MetricsReport",
    "eval_first",
    "eval_threshold",
    "eval_sampling",
    "p_total",
    "p_eff_paths",
    "p_eff_avg",
    "aggregate",
    "evaluate_batch",
    "aggregate_batch",
]

ALGORITHM_KINDS = ("first", "threshold", "sampling")
AXES = ("length", "size")
SAMPLING_MODES = ("uniform", "size-scaled")
DURATION_MODELS = ("equal", "proportional")


class DegenerateError(ValueError):
    """No flow created an entry; reductions are unbounded."""


@dataclass(frozen=True)
class AlgorithmSpec:
    """Which algorithm to run and with what parameter.

    ``threshold`` is packets (length axis) or bytes (size axis) and applies
    to the first/threshold kinds; ``probability`` applies to sampling.
    ``sampling_mode`` defaults to uniform on the length axis and
    size-scaled on the size axis.
    """

    kind: str
    axis: str = "length"
    threshold: float | None = None
    probability: float | None = None
    sampling_mode: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ALGORITHM_KINDS:
            raise ValueError(f"unknown algorithm kind {self.kind!r}")
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}")
        if self.kind in ("first", "threshold"):
            if self.threshold is None or self.threshold < 0:
                raise ValueError(f"{self.kind} requires threshold >= 0")
        else:
            if self.probability is None or not (0.0 < self.probability <= 1.0):
                raise ValueError("sampling requires probability in (0, 1]")
            mode = self.sampling_mode or ("size-scaled" if self.axis == "size" else "uniform")
            if mode not in SAMPLING_MODES:
                raise ValueError(f"unknown sampling_mode {mode!r}")
            if mode == "size-scaled" and self.axis != "size":
                raise ValueError("size-scaled sampling requires axis='size'")
            object.__setattr__(self, "sampling_mode", mode)


@dataclass(frozen=True)
class FlowOutcome:
    entry_created: bool
    covered_bytes: int
    occupancy_fraction: float
    flow_bytes: int
    flow_packets: int

    def __post_init__(self) -> None:
        if not self.entry_created and (self.covered_bytes or self.occupancy_fraction):
            raise ValueError("uncreated entry cannot cover traffic or occupy the table")
        if self.covered_bytes > self.flow_bytes or self.occupancy_fraction > 1.0:
            raise ValueError("outcome exceeds the flow it belongs to")


@dataclass(frozen=True)
class PathProfile:
    """Per-path routing probabilities with per-switch sampling probabilities."""

    paths: tuple[tuple[float, tuple[float, ...]], ...]

    def __post_init__(self) -> None:
        total = math.fsum(p for p, _ in self.paths)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"path probabilities sum to {total!r}, expected 1")
        for p, switch_ps in self.paths:
            if not (0.0 <= p <= 1.0) or any(not (0.0 <= q <= 1.0) for q in switch_ps):
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class MetricsReport:
    coverage_pct: float
    operations_reduction: float
    occupancy_reduction: float
    flow_count: int
    entries_created: int


def eval_first(flow: FlowRecord, spec: AlgorithmSpec) -> FlowOutcome:
    """Oracle classification at the first packet: entry iff the flow's final
    length/size strictly exceeds the threshold; covered from packet one."""
    if spec.kind != "first":
        raise ValueError("spec.kind must be 'first'")
    value = flow.length if spec.axis == "length" else flow.size
    if value > spec.threshold:
        return FlowOutcome(True, flow.size, 1.0, flow.size, flow.length)
    return FlowOutcome(False, 0, 0.0, flow.size, flow.length)


def eval_threshold(flow: FlowRecord, spec: AlgorithmSpec,
                   max_packet_size: int = DEFAULT_MAX_PACKET) -> FlowOutcome:
    """Per-flow counter: the entry is created at the first packet whose
    arrival pushes the counter (packets or cumulative bytes) above the
    threshold; that packet and all later ones are covered."""
    if spec.kind != "threshold":
        raise ValueError("spec.kind must be 'threshold'")
    sizes = packetize(flow, max_packet_size)
    counter = 0.0
    for i, pkt in enumerate(sizes):
        counter += 1 if spec.axis == "length" else pkt
        if counter > spec.threshold:
            covered = sum(sizes[i:])
            occupancy = (flow.length - i) / flow.length
            return FlowOutcome(True, covered, occupancy, flow.size, flow.length)
    return FlowOutcome(False, 0, 0.0, flow.size, flow.length)


def eval_sampling(flow: FlowRecord, spec: AlgorithmSpec, rng: np.random.Generator,
                  max_packet_size: int = DEFAULT_MAX_PACKET,
                  s_max: int | None = None) -> FlowOutcome:
    """Random per-packet sampling until the first success creates the entry.

    Uniform mode samples every packet with probability p; size-scaled mode
    with p * packet_size / s_max.  Deterministic given the RNG state.
    """
    if spec.kind != "sampling":
        raise ValueError("spec.kind must be 'sampling'")
    p = spec.probability
    s_max = s_max if s_max is not None else max_packet_size
    sizes = packetize(flow, max_packet_size)
    for i, pkt in enumerate(sizes):
        if spec.sampling_mode == "size-scaled":
            if pkt > s_max:
                raise ValueError(f"packet of {pkt} bytes exceeds s_max={s_max}")
            p_i = p * pkt / s_max
        else:
            p_i = p
        if rng.random() < p_i:
            covered = sum(sizes[i:])
            occupancy = (flow.length - i) / flow.length
            return FlowOutcome(True, covered, occupancy, flow.size, flow.length)
    return FlowOutcome(False, 0, 0.0, flow.size, flow.length)


def p_total(p: float, n: float) -> float:
    """Probability that an n-packet flow has an entry under per-packet
    sampling with probability p: 1 - (1 - p)^n, computed stably."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0 or p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-p))


def p_eff_paths(profile: PathProfile) -> float:
    """Effective sampling probability when every switch on the path samples
    independently, averaged over path choice."""
    total = 0.0
    for path_p, switch_ps in profile.paths:
        miss = math.fsum(math.log1p(-q) for q in switch_ps if q < 1.0)
        hit = 1.0 if any(q >= 1.0 for q in switch_ps) else -math.expm1(miss)
        total += path_p * hit
    return total


def p_eff_avg(p: float, l_avg: float) -> float:
    """Effective sampling probability for an average path of l_avg switches."""
    if l_avg < 1:
        raise ValueError("l_avg must be >= 1")
    return p_total(p, l_avg)


def aggregate(outcomes: Iterable[FlowOutcome], duration_model: str = "equal") -> MetricsReport:
    """Fold per-flow outcomes into coverage and reduction factors.

    Raises DegenerateError when no entry was created (coverage 0, both
    reductions unbounded).
    """
    if duration_model not in DURATION_MODELS:
        raise ValueError(f"unknown duration_model {duration_model!r}")
    n = 0
    entries = 0
    covered = 0
    total_bytes = 0
    occ = 0.0
    total_packets = 0
    occ_packets = 0.0
    for o in outcomes:
        n += 1
        total_bytes += o.flow_bytes
        total_packets += o.flow_packets
        if o.entry_created:
            entries += 1
            covered += o.covered_bytes
            occ += o.occupancy_fraction
            occ_packets += o.occupancy_fraction * o.flow_packets
    if n == 0:
        raise ValueError("aggregate requires a non-empty outcome stream")
    if entries == 0:
        raise DegenerateError("no flow created an entry; reductions are infinite")
    coverage = 100.0 * covered / total_bytes
    ops = n / entries
    if duration_model == "equal":
        occ_reduction = n / occ
    else:
        occ_reduction = total_packets / occ_packets
    return MetricsReport(coverage, ops, occ_reduction, n, entries)


# -- vectorized batch evaluation ----------------------------------------------
#
# The sweep engine evaluates populations as numpy arrays.  Packet layout
# follows even-split packetization: base = size // length bytes per packet
# with the remainder on the last packet, so prefix byte sums and per-packet
# sampling probabilities have closed forms.  The sampling evaluator draws
# the index of the first sampled packet directly from its exact law
# (geometric over the leading equal-size packets, with the differing last
# packet handled separately), which is distribution-identical to the
# per-packet Bernoulli loop in eval_sampling.


def _first_batch(lengths: np.ndarray, sizes: np.ndarray, spec: AlgorithmSpec):
    value = lengths if spec.axis == "length" else sizes
    created = value > spec.threshold
    covered = np.where(created, sizes, 0)
    occ = created.astype(float)
    return created, covered.astype(np.int64), occ


def _threshold_batch(lengths: np.ndarray, sizes: np.ndarray, spec: AlgorithmSpec):
    T = spec.threshold
    base = sizes // lengths
    if spec.axis == "length":
        created = lengths > T
        trigger = np.full_like(lengths, int(math.floor(T)) + 1)
    else:
        created = sizes > T
        trigger = np.minimum(np.floor(T / base).astype(np.int64) + 1, lengths)
    trigger = np.where(created, trigger, 0)
    covered = np.where(created, sizes - (trigger - 1) * base, 0)
    occ = np.where(created, (lengths - trigger + 1) / lengths, 0.0)
    return created, covered.astype(np.int64), occ


def _sampling_batch(lengths: np.ndarray, sizes: np.ndarray, spec: AlgorithmSpec,
                    rng: np.random.Generator, s_max: int):
    p = spec.probability
    base = sizes // lengths
    rem = sizes - base * lengths
    u = np.maximum(rng.random(len(lengths)), 2.0 ** -53)
    if spec.sampling_mode == "uniform":
        if p == 1.0:
            trigger = np.ones_like(lengths)
        else:
            # first success of a Bernoulli(p) sequence, truncated to the flow
            k = np.floor(np.log(u) / math.log1p(-p)).astype(np.int64) + 1
            trigger = np.where(k <= lengths, k, 0)
    else:
        p_lead = p * base / s_max
        last = np.minimum(base + rem, s_max)  # even-split spreads an oversized remainder
        p_last = p * last / s_max
        log_q = np.log1p(-np.minimum(p_lead, 1.0))
        n_lead = lengths - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.floor(np.log(u) / log_q).astype(np.int64) + 1
        k = np.where(p_lead >= 1.0, 1, k)
        surv_lead = np.exp(n_lead * log_q)  # P(no success among leading packets)
        in_lead = k <= n_lead
        # conditional on surviving the leading packets, u / surv_lead is
        # again uniform and decides the differing last packet
        u_last = np.where(surv_lead > 0, u / np.maximum(surv_lead, 1e-300), 1.0)
        last_hit = (~in_lead) & (u_last >= 1.0 - p_last)
        trigger = np.where(in_lead, k, np.where(last_hit, lengths, 0))
    created = trigger > 0
    tr = np.where(created, trigger, 1)
    covered = np.where(created, sizes - (tr - 1) * base, 0)
    occ = np.where(created, (lengths - tr + 1) / lengths, 0.0)
    return created, covered.astype(np.int64), occ


def evaluate_batch(lengths: np.ndarray, sizes: np.ndarray, spec: AlgorithmSpec,
                   rng: np.random.Generator | None = None,
                   s_max: int = DEFAULT_MAX_PACKET):
    """Vectorized per-flow outcomes: (created, covered_bytes, occupancy_fraction)."""
    if spec.kind == "first":
        return _first_batch(lengths, sizes, spec)
    if spec.kind == "threshold":
        return _threshold_batch(lengths, sizes, spec)
    if rng is None:
        raise ValueError("sampling evaluation requires an RNG")
    return _sampling_batch(lengths, sizes, spec, rng, s_max)


def aggregate_batch(lengths: np.ndarray, sizes: np.ndarray, created: np.ndarray,
                    covered: np.ndarray, occ: np.ndarray,
                    duration_model: str = "equal") -> MetricsReport:
    """aggregate() over array-shaped outcomes."""
    if duration_model not in DURATION_MODELS:
        raise ValueError(f"unknown duration_model {duration_model!r}")
    n = len(lengths)
    entries = int(np.count_nonzero(created))
    if n == 0:
        raise ValueError("aggregate requires a non-empty population")
    if entries == 0:
        raise DegenerateError("no flow created an entry; reductions are infinite")
    coverage = 100.0 * float(covered.sum()) / float(sizes.sum())
    ops = n / entries
    if duration_model == "equal":
        occ_reduction = n / float(occ.sum())
    else:
        occ_reduction = float(lengths.sum()) / float((occ * lengths).sum())
    return MetricsReport(coverage, ops, occ_reduction, n, entries)
