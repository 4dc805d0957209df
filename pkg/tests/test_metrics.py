from __future__ import annotations

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import stats

from mdrrsim.metrics import (
    all_flow_metrics,
    delay_and_jitter,
    fairness_index,
    rfc3550_jitter,
    spearman,
    station_throughput,
    throughput,
    windowed,
)
from mdrrsim.scenario import load_scenario
from mdrrsim.sim import run


def test_throughput_definition():
    times = [1.0] * 5000
    sizes = [240] * 5000
    assert throughput(times, sizes, (0.0, 100.0)) == 96000.0


def test_throughput_empty():
    assert throughput([], [], (0.0, 10.0)) == 0.0


def test_throughput_window_is_half_open():
    assert throughput([0.0, 1.0], [1, 1], (0.0, 1.0)) == 8.0


def test_constant_delay_has_no_jitter():
    assert delay_and_jitter([0.0, 0.02, 0.04], [0.005, 0.025, 0.045]) == pytest.approx((0.005, 0.0))


def test_perfect_cbr_has_no_jitter():
    _, jitter = delay_and_jitter([0, 0, 0, 0], [0, 20, 40, 60])
    assert jitter == 0


def test_uneven_gaps_jitter():
    # gaps 20, 25, 15 ms around a 20 ms mean: (0 + 5 + 5) / 3
    _, jitter = delay_and_jitter([0, 0, 0, 0], [0.0, 0.020, 0.045, 0.060])
    assert jitter == pytest.approx(10 / 3 * 1e-3, rel=1e-9)


def test_too_few_deliveries_is_not_zero():
    assert delay_and_jitter([], []) == (None, None)
    delay, jitter = delay_and_jitter([0.0], [0.01])
    assert delay == 0.01 and jitter is None
    assert rfc3550_jitter([0.0], [0.01]) is None


def test_rfc3550_zero_for_constant_transit():
    assert rfc3550_jitter([0, 1, 2, 3], [5, 6, 7, 8]) == 0.0


def test_fairness_examples():
    assert fairness_index([100, 100, 100]) == 1.0
    assert fairness_index([100, 0]) == 0.5
    # 800^2 / (5 * 130000)
    assert fairness_index([200, 150, 150, 150, 150]) == pytest.approx(640000 / 650000, rel=1e-12)
    assert fairness_index([200, 150, 150, 150, 150]) == pytest.approx(0.9846, abs=5e-5)


@pytest.mark.parametrize("bad", [[], [0, 0], [1, -1]])
def test_fairness_rejects_undefined(bad):
    with pytest.raises(ValueError):
        fairness_index(bad)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=10), st.floats(1e-3, 1e3))
def test_fairness_scale_invariant(values, k):
    assume(sum(values) > 1e-3)
    assert fairness_index([k * v for v in values]) == pytest.approx(fairness_index(values), rel=1e-9)


@given(st.lists(st.integers(0, 10**6), min_size=3, max_size=10))
def test_jitter_nonnegative_and_zero_iff_equal_gaps(gaps):
    times = [0]
    for g in gaps:
        times.append(times[-1] + g)
    _, jitter = delay_and_jitter([0] * len(times), times)
    assert jitter >= 0
    assert (jitter == 0) == (len(set(gaps)) == 1)


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=3, max_size=20))
def test_spearman_matches_scipy(pairs):
    x, y = zip(*pairs)
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-9)


def test_station_throughput_is_sum_of_flows():
    result = run(load_scenario("rr_fig6", ["sim.duration_s=1.0"]))
    total = sum(m.throughput_bps for m in all_flow_metrics(result))
    assert station_throughput(result, "MS_0") == pytest.approx(total)


def test_windowed_sums_to_cumulative():
    result = run(load_scenario("paper_sec7", ["sim.duration_s=3.0"]))
    samples = windowed(result, 1.0)
    assert len(samples) == 3 * 6
    for m in all_flow_metrics(result):
        per = [s for s in samples if s.flow_id == m.flow_id]
        assert sum(s.delivered_packets for s in per) == m.delivered_packets
        assert sum(s.throughput_bps for s in per) / 3 == pytest.approx(m.throughput_bps)
