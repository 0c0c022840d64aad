from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowtab.algorithms import (
    AlgorithmSpec,
    DegenerateError,
    FlowOutcome,
    MetricsReport,
    PathProfile,
    aggregate,
    aggregate_batch,
    eval_first,
    eval_sampling,
    eval_threshold,
    evaluate_batch,
    p_eff_avg,
    p_eff_paths,
    p_total,
)
from flowtab.generator import FlowRecord


def outcomes(lengths, sizes, spec, rng=None):
    return aggregate_batch(lengths, sizes, *evaluate_batch(lengths, sizes, spec, rng=rng))


# -- eval_first ---------------------------------------------------------------


def test_first_covers_whole_flow():
    spec = AlgorithmSpec("first", "length", threshold=1)
    out = eval_first(FlowRecord(10, 1000), spec)
    assert out == FlowOutcome(True, 1000, 1.0, 1000, 10)


def test_first_threshold_is_strict():
    spec = AlgorithmSpec("first", "length", threshold=1)
    assert not eval_first(FlowRecord(1, 100), spec).entry_created


def test_first_zero_threshold_covers_everything(toy_population):
    lengths, sizes = toy_population
    rep = outcomes(lengths, sizes, AlgorithmSpec("first", "length", threshold=0))
    assert rep.coverage_pct == 100.0
    assert rep.operations_reduction == 1.0


# -- eval_threshold -------------------------------------------------------------


def test_threshold_length_trace():
    spec = AlgorithmSpec("threshold", "length", threshold=1)
    out = eval_threshold(FlowRecord(10, 1000), spec)
    assert out.entry_created and out.covered_bytes == 900
    assert out.occupancy_fraction == pytest.approx(0.9)


def test_threshold_never_triggers_on_short_flow():
    spec = AlgorithmSpec("threshold", "length", threshold=1)
    out = eval_threshold(FlowRecord(1, 100), spec)
    assert not out.entry_created and out.covered_bytes == 0


def test_threshold_size_hand_trace():
    spec = AlgorithmSpec("threshold", "size", threshold=50)
    out = eval_threshold(FlowRecord(4, 100), spec)
    assert out.entry_created
    assert out.covered_bytes == 50
    assert out.occupancy_fraction == pytest.approx(0.5)


# -- eval_sampling ---------------------------------------------------------------


def test_sampling_p_one_covers_first_packet():
    spec = AlgorithmSpec("sampling", "length", probability=1.0)
    rng = np.random.default_rng(0)
    out = eval_sampling(FlowRecord(7, 700), spec, rng)
    assert out.entry_created and out.covered_bytes == 700
    assert out.occupancy_fraction == 1.0


def test_sampling_creation_frequency_matches_p_total():
    spec = AlgorithmSpec("sampling", "length", probability=0.05)
    rng = np.random.default_rng(1)
    n = 20_000
    hits = sum(
        eval_sampling(FlowRecord(10, 1000), spec, rng).entry_created for _ in range(n)
    )
    expect = p_total(0.05, 10)
    sigma = math.sqrt(expect * (1 - expect) / n)
    assert hits / n == pytest.approx(expect, abs=4 * sigma)


def test_size_scaled_full_packet_always_sampled():
    # leading packet of exactly s_max has scaled probability 1
    spec = AlgorithmSpec("sampling", "size", probability=1.0)
    flow = FlowRecord(2, 2277, "last-remainder")  # packets [1518, 759]
    rng = np.random.default_rng(2)
    out = eval_sampling(flow, spec, rng)
    assert out.entry_created and out.covered_bytes == 2277
    assert out.occupancy_fraction == 1.0


def test_size_scaled_rejects_oversized_packet():
    spec = AlgorithmSpec("sampling", "size", probability=0.5)
    with pytest.raises(ValueError, match="s_max"):
        eval_sampling(FlowRecord(1, 900), spec, np.random.default_rng(0), s_max=512)


def test_spec_validation():
    with pytest.raises(ValueError):
        AlgorithmSpec("first", "length")  # missing threshold
    with pytest.raises(ValueError):
        AlgorithmSpec("sampling", "length", probability=0.0)
    with pytest.raises(ValueError):
        AlgorithmSpec("sampling", "length", probability=0.5, sampling_mode="size-scaled")
    assert AlgorithmSpec("sampling", "size", probability=0.5).sampling_mode == "size-scaled"


# -- probability helpers -----------------------------------------------------------


def test_p_total_values():
    assert p_total(0.5, 2) == pytest.approx(0.75, abs=1e-15)
    assert p_total(1.0, 5) == 1.0
    assert p_total(0.0, 10) == 0.0
    assert p_total(0.3, 0) == 0.0


def test_p_total_against_high_precision():
    mpmath.mp.dps = 60
    for p in (1e-9, 1e-6, 1e-3, 0.1, 0.5, 0.999):
        for n in (1, 10, 1000, 10 ** 6, 10 ** 9):
            want = float(1 - (1 - mpmath.mpf(p)) ** n)
            assert p_total(p, n) == pytest.approx(want, rel=1e-9)


@settings(max_examples=150, deadline=None)
@given(
    p=st.floats(min_value=0.0, max_value=1.0),
    n=st.integers(min_value=0, max_value=10 ** 9),
)
def test_p_total_stays_in_unit_interval(p, n):
    v = p_total(p, n)
    assert 0.0 <= v <= 1.0
    if n >= 1:
        assert v >= p_total(p, n - 1) - 1e-15


def test_p_eff_paths():
    single = PathProfile(paths=((1.0, (0.3,)),))
    assert p_eff_paths(single) == pytest.approx(0.3, abs=1e-15)
    three = PathProfile(paths=((1.0, (0.1, 0.1, 0.1)),))
    assert p_eff_paths(three) == pytest.approx(1 - 0.9 ** 3, abs=1e-15)
    two = PathProfile(paths=((0.5, (0.1,)), (0.5, (0.2,))))
    assert p_eff_paths(two) == pytest.approx(0.15, abs=1e-15)
    with pytest.raises(ValueError):
        PathProfile(paths=((0.7, (0.1,)),))


def test_p_eff_avg():
    assert p_eff_avg(0.1, 3) == pytest.approx(1 - 0.9 ** 3, abs=1e-15)
    assert p_eff_avg(0.37, 1) == pytest.approx(0.37, abs=1e-15)
    assert p_eff_avg(0.0, 5) == 0.0


# -- aggregate -------------------------------------------------------------------


def test_aggregate_toy_first(toy_population):
    lengths, sizes = toy_population
    rep = outcomes(lengths, sizes, AlgorithmSpec("first", "length", threshold=1))
    assert rep.coverage_pct == pytest.approx(100 * 1000 / 1100, abs=1e-12)
    assert rep.operations_reduction == 2.0
    assert rep.occupancy_reduction == 2.0


def test_aggregate_toy_threshold(toy_population):
    lengths, sizes = toy_population
    rep = outcomes(lengths, sizes, AlgorithmSpec("threshold", "length", threshold=1))
    assert rep.coverage_pct == pytest.approx(100 * 900 / 1100, abs=1e-12)
    assert rep.operations_reduction == 2.0
    assert rep.occupancy_reduction == pytest.approx(1 / (0.5 * 0.9), rel=1e-12)


def test_aggregate_sampling_p_one_is_baseline(toy_population):
    lengths, sizes = toy_population
    rng = np.random.default_rng(0)
    rep = outcomes(lengths, sizes, AlgorithmSpec("sampling", "length", probability=1.0), rng)
    assert rep == MetricsReport(100.0, 1.0, 1.0, 1000, 1000)


def test_aggregate_degenerate(toy_population):
    lengths, sizes = toy_population
    with pytest.raises(DegenerateError):
        outcomes(lengths, sizes, AlgorithmSpec("first", "length", threshold=100))
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_scalar_stream_matches_batch(toy_population):
    lengths, sizes = toy_population
    spec = AlgorithmSpec("threshold", "length", threshold=2)
    stream = (eval_threshold(FlowRecord(int(l), int(s)), spec) for l, s in zip(lengths, sizes))
    rep = aggregate(stream)
    batch = outcomes(lengths, sizes, spec)
    assert rep.coverage_pct == batch.coverage_pct
    assert rep.operations_reduction == batch.operations_reduction
    assert rep.entries_created == batch.entries_created
    # occupancy sums accumulate in different orders between the two paths
    assert rep.occupancy_reduction == pytest.approx(batch.occupancy_reduction, rel=1e-12)


def test_aggregate_proportional_duration(toy_population):
    lengths, sizes = toy_population
    spec = AlgorithmSpec("first", "length", threshold=1)
    created, covered, occ = evaluate_batch(lengths, sizes, spec)
    rep = aggregate_batch(lengths, sizes, created, covered, occ, "proportional")
    # long flows occupy for their whole (length-proportional) lifetime
    assert rep.occupancy_reduction == pytest.approx(5500 / 5000, rel=1e-12)
    assert rep.operations_reduction == 2.0


# -- batch vs scalar equivalence ----------------------------------------------------


def random_flows(n=300, seed=8):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(1, 200, size=n)
    per_packet = rng.integers(64, 1400, size=n)
    sizes = lengths * per_packet + rng.integers(0, lengths)
    return lengths.astype(np.int64), sizes.astype(np.int64)


@pytest.mark.parametrize(
    "spec",
    [
        AlgorithmSpec("first", "length", threshold=17),
        AlgorithmSpec("first", "size", threshold=30_000),
        AlgorithmSpec("threshold", "length", threshold=17),
        AlgorithmSpec("threshold", "size", threshold=30_000),
    ],
)
def test_batch_matches_scalar_evaluators(spec):
    lengths, sizes = random_flows()
    created, covered, occ = evaluate_batch(lengths, sizes, spec)
    evaluator = eval_first if spec.kind == "first" else eval_threshold
    for i in range(len(lengths)):
        out = evaluator(FlowRecord(int(lengths[i]), int(sizes[i])), spec)
        assert out.entry_created == bool(created[i])
        assert out.covered_bytes == covered[i]
        assert out.occupancy_fraction == pytest.approx(occ[i], abs=1e-12)


def test_batch_sampling_matches_scalar_law():
    # same distribution, different draw order: compare creation rate and
    # mean occupancy of the constant-shape population
    lengths = np.full(40_000, 6, dtype=np.int64)
    sizes = np.full(40_000, 1800, dtype=np.int64)
    for spec in (
        AlgorithmSpec("sampling", "length", probability=0.2),
        AlgorithmSpec("sampling", "size", probability=0.4),
    ):
        created, _, occ = evaluate_batch(lengths, sizes, spec, rng=np.random.default_rng(3))
        rng = np.random.default_rng(4)
        flow = FlowRecord(6, 1800)
        scalar = [eval_sampling(flow, spec, rng) for _ in range(40_000)]
        rate_b = created.mean()
        rate_s = np.mean([o.entry_created for o in scalar])
        sigma = math.sqrt(rate_s * (1 - rate_s) / 40_000)
        assert rate_b == pytest.approx(rate_s, abs=5 * sigma)
        occ_b = occ.sum() / created.sum()
        occ_s = np.mean([o.occupancy_fraction for o in scalar if o.entry_created])
        assert occ_b == pytest.approx(occ_s, abs=0.01)


# -- structural invariants -----------------------------------------------------------


def test_first_and_threshold_share_entry_set():
    lengths, sizes = random_flows(seed=12)
    for axis, T in (("length", 9), ("size", 20_000)):
        first = outcomes(lengths, sizes, AlgorithmSpec("first", axis, threshold=T))
        thr = outcomes(lengths, sizes, AlgorithmSpec("threshold", axis, threshold=T))
        assert first.operations_reduction == thr.operations_reduction  # bit-exact
        assert first.operations_reduction == first.occupancy_reduction
        assert thr.occupancy_reduction >= thr.operations_reduction


def test_sampling_occupancy_exceeds_operations():
    lengths, sizes = random_flows(seed=13)
    rep = outcomes(
        lengths, sizes,
        AlgorithmSpec("sampling", "length", probability=0.05),
        np.random.default_rng(5),
    )
    assert rep.occupancy_reduction >= rep.operations_reduction
