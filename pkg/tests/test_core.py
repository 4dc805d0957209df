from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdrrsim.core import (
    TICKS_PER_SECOND,
    ConfigurationError,
    FrameConfig,
    Packet,
    PriorityClass,
    QoSParams,
    ServiceClass,
    ServiceFlow,
    bytes_to_symbols,
    seconds_to_ticks,
    ticks_to_seconds,
)


def _flow(capacity=3):
    return ServiceFlow("f", "s", QoSParams(ServiceClass.RTPS, 384000, 120000, 0.03), capacity=capacity)


def test_bytes_to_symbols_exact_fit():
    assert bytes_to_symbols(100, 800) == 1


def test_bytes_to_symbols_one_byte():
    assert bytes_to_symbols(1, 800) == 1


def test_bytes_to_symbols_mtu_at_1152():
    # 12000 / 1152 = 10.416..., long division oracle
    assert 10 * 1152 < 12000 <= 11 * 1152
    assert bytes_to_symbols(1500, 1152) == 11


def test_bytes_to_symbols_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        bytes_to_symbols(10, 0)


@given(st.integers(1, 10_000), st.integers(1, 20_000))
def test_bytes_to_symbols_is_smallest_sufficient(size, bps):
    n = bytes_to_symbols(size, bps)
    assert n * bps >= size * 8
    assert (n - 1) * bps < size * 8


def test_zero_byte_packet_rejected():
    with pytest.raises(ValueError):
        Packet(0, "f", 0, 0)


def test_dequeue_before_creation_rejected():
    p = Packet(0, "f", 10, 500)
    with pytest.raises(ValueError):
        p.mark_dequeued(499)
    p.mark_dequeued(500)
    assert p.dequeued_at == 500 / TICKS_PER_SECOND


def test_tail_drop_counts():
    flow = _flow(capacity=2)
    results = [flow.enqueue(Packet(i, "f", 10, i)) for i in range(4)]
    assert results == [True, True, False, False]
    assert (flow.generated, flow.drops, len(flow)) == (4, 2, 2)
    assert flow.dequeue().id == 0
    assert flow.delivered == 1


def test_qos_min_above_max_rejected():
    with pytest.raises(ConfigurationError):
        QoSParams(ServiceClass.RTPS, 100, 200, 0.03)


def test_service_class_priorities():
    assert ServiceClass.RTPS.priority is PriorityClass.HIGH
    assert ServiceClass.NRTPS.priority is PriorityClass.HIGH
    assert ServiceClass.BE.priority is PriorityClass.LOW
    assert not ServiceClass.UGS.scheduled
    assert not ServiceClass.ERTPS.scheduled
    assert ServiceClass.parse("rtps") is ServiceClass.RTPS


def test_frame_timing_converts_exactly():
    frame = FrameConfig()
    assert frame.frame_ticks == 500_000
    assert seconds_to_ticks(102.86e-6) == 10286
    assert frame.max_symbols_per_frame == 48
    assert frame.total_system_capacity_sps == Fraction(4200)


def test_frame_rejects_too_many_symbols():
    with pytest.raises(ConfigurationError):
        FrameConfig(symbols_per_frame=49)


def test_tick_roundtrip():
    assert ticks_to_seconds(seconds_to_ticks(0.02)) == 0.02
    assert seconds_to_ticks(Fraction(1, 3)) == math.floor(TICKS_PER_SECOND / 3 + 0.5)


@given(st.integers(1, 5000), st.integers(1, 5000), st.integers(1, 20_000), st.integers(1, 20_000))
def test_symbol_cost_monotone(size_a, size_b, bps_a, bps_b):
    small, large = sorted((size_a, size_b))
    slow, fast = sorted((bps_a, bps_b))
    assert bytes_to_symbols(small, slow) <= bytes_to_symbols(large, slow)
    assert bytes_to_symbols(small, fast) <= bytes_to_symbols(small, slow)
