from __future__ import annotations

import itertools
import logging

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mdrrsim.amc import ChannelParams, distance_for_cinr
from mdrrsim.core import TICKS_PER_SECOND, ConfigurationError, QoSParams, ServiceClass
from mdrrsim.metrics import station_throughput
from mdrrsim.scenario import load_scenario
from mdrrsim.sim import (
    EventKind,
    FlowConfig,
    Pattern,
    SimConfig,
    Simulation,
    StationConfig,
    TrafficSource,
    generate_traffic,
    iter_arrivals,
    offered_load,
    run,
)

VOICE = TrafficSource("v", 96000.0, 240)


def voice_flow(fid, cls=ServiceClass.RTPS, **kw):
    return FlowConfig(fid, QoSParams(cls, 384000.0, 120000.0, 0.03), TrafficSource(fid, 96000.0, 240, **kw))


def test_cbr_spacing_is_20ms():
    events = generate_traffic(VOICE, (0.0, 1.0))
    assert len(events) == 50
    gaps = {b.time - a.time for a, b in zip(events, events[1:])}
    # 240 B * 8 / 96 kbps = 20 ms
    assert gaps == {240 * 8 * TICKS_PER_SECOND // 96000}
    assert all(e.kind is EventKind.PACKET_ARRIVAL for e in events)


def test_cbr_bits_over_100s():
    events = generate_traffic(VOICE, (0.0, 100.0))
    assert sum(e.payload[1] * 8 for e in events) == 9_600_000


def test_variable_traffic_is_seeded():
    src = TrafficSource("x", 50000.0, 0, Pattern.VARIABLE, (64, 512, 1500))
    a = generate_traffic(src, (0.0, 5.0), seed=9)
    b = generate_traffic(src, (0.0, 5.0), seed=9)
    c = generate_traffic(src, (0.0, 5.0), seed=10)
    assert a == b
    assert [e.payload for e in a] != [e.payload for e in c]


def test_arrivals_respect_start_and_stop():
    src = TrafficSource("x", 96000.0, 240, start_s=0.1, stop_s=0.2)
    ticks = [t for t, _ in iter_arrivals(src, 10 * TICKS_PER_SECOND)]
    assert ticks[0] == seconds(0.1)
    assert ticks[-1] < seconds(0.2)
    assert len(ticks) == 5


def seconds(s):
    return round(s * TICKS_PER_SECOND)


def test_no_flows_gives_zero_counters():
    result = run(SimConfig(stations=(StationConfig("a", 100.0),), duration_s=1.0))
    assert result.flows == {}
    assert len(result.frames) == 200
    assert all(f.packets == 0 and f.symbols_used == 0 for f in result.frames)


def test_exact_capacity_loses_at_most_one_frame():
    # QPSK 1/2 carries 96 B per symbol; 21 symbols per 5 ms frame.
    distance = distance_for_cinr(4.0, ChannelParams())
    rate = 21 * 96 * 8 * 200
    flow = FlowConfig("f", QoSParams(ServiceClass.BE, 1e7, 0.0, 1.0), TrafficSource("f", rate, 96), queue_capacity=10**6)
    sim = Simulation(SimConfig(stations=(StationConfig("a", distance, (flow,)),), duration_s=2.0))
    rec = sim.run().flows["f"]
    assert rec.dropped == 0
    assert rec.generated - rec.delivered <= 21
    assert sim.conservation_holds()


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(0, 2 * TICKS_PER_SECOND), min_size=1, max_size=5))
def test_conservation_at_any_instant(stops):
    cfg = load_scenario("overload_fairness", ["sim.duration_s=2.0"])
    sim = Simulation(cfg)
    for tick in sorted(stops):
        sim.run_until(tick)
        assert sim.conservation_holds()
        for fid, rec in sim.records.items():
            assert rec.generated == rec.delivered + rec.dropped + len(sim.flows[fid])


def test_same_seed_same_result():
    cfg = load_scenario("paper_sec7", ["sim.duration_s=2.0", "channel.noise_sigma_db=2.0", "sim.random_phase=true"])
    a, b = run(cfg), run(cfg)
    assert a.flows == b.flows
    assert a.frames == b.frames
    assert a.weights == b.weights


def test_different_seed_changes_noisy_run():
    base = ["sim.duration_s=2.0", "channel.noise_sigma_db=2.0"]
    a = run(load_scenario("paper_sec7", base + ["sim.seed=1"]))
    b = run(load_scenario("paper_sec7", base + ["sim.seed=2"]))
    assert a.cinr != b.cinr


def test_weights_change_only_after_reports():
    cfg = load_scenario("paper_sec7", ["sim.duration_s=1.0", "channel.noise_sigma_db=3.0"])
    result = run(cfg)
    period = cfg.channel.cqich_period_frames
    assert len({w.frame for w in result.weights}) > 5
    for w in result.weights:
        assert w.frame == 0 or (w.frame - 1) % period == 0


def test_first_frame_uses_basic_weight():
    result = run(load_scenario("paper_sec7", ["sim.duration_s=0.01"]))
    first = [w for w in result.weights if w.frame == 0]
    assert all(w.reported_cinr_db is None and w.profile == 0 for w in first)


def test_delivery_stamped_at_frame_end():
    result = run(load_scenario("paper_sec7", ["sim.duration_s=1.0"]))
    frame_ticks = result.config.frame.frame_ticks
    for rec in result.flows.values():
        assert all(d % frame_ticks == 0 for d in rec.delivered_ticks)
        assert all(d > c for c, d in zip(rec.created_ticks, rec.delivered_ticks))


def test_grant_based_flows_are_not_scheduled(caplog):
    cfg = SimConfig(stations=(StationConfig("a", 100.0, (voice_flow("u", ServiceClass.UGS), voice_flow("r"))),), duration_s=1.0)
    with caplog.at_level(logging.WARNING):
        result = run(cfg)
    assert "not scheduled" in caplog.text
    assert result.flows["u"].delivered == 0
    assert result.flows["u"].generated == 50
    assert result.flows["r"].delivered > 0


def test_validate_rejects_packet_above_mtu():
    flow = FlowConfig("f", QoSParams(ServiceClass.BE, 1e6, 0.0, 1.0), TrafficSource("f", 1e5, 1600))
    with pytest.raises(ConfigurationError, match="flows.f.packet_bytes"):
        SimConfig(stations=(StationConfig("a", 100.0, (flow,)),)).validate()


def test_offered_load_of_voice_scenario():
    cfg = load_scenario("paper_sec7")
    # 1920 bits per packet against 768 x efficiency bits per symbol:
    # 64-QAM 2/3 3072, 16-QAM 3/4 2304, 16-QAM 1/2 1536, QPSK 3/4 1152
    per_packet = {"MS_0": 1, "MS_1": 1, "MS_2": 2, "MS_3": 2, "MS_4": 1, "MS_5": 2}
    expected = sum(50 * n for n in per_packet.values()) / 4200
    assert offered_load(cfg) == pytest.approx(expected)


def test_voice_scenario_full_length():
    result = run(load_scenario("paper_sec7"))
    assert result.duration_s == 100.0
    for st in result.config.stations:
        assert station_throughput(result, st.station_id) == pytest.approx(96000, abs=1920)


@given(st.floats(1000.0, 5e6), st.integers(40, 1500), st.integers(0, 500), st.integers(10, 200))
def test_cbr_rate_within_one_packet_over_any_window(rate, size, start, n):
    src = TrafficSource("x", rate, size)
    window = list(itertools.islice(iter_arrivals(src, 10**12), start, start + n + 1))
    assume(len(window) == n + 1)
    span = (window[-1][0] - window[0][0]) / TICKS_PER_SECOND
    bits = n * size * 8
    assert abs(bits - rate * span) <= size * 8


def test_fifo_budget_and_ceiling():
    cfg = load_scenario("overload_fairness", ["sim.duration_s=2.0"])
    result = run(cfg)
    for frame in result.frames:
        assert frame.symbols_used <= cfg.frame.symbols_per_frame
    for fc in cfg.flows:
        rec = result.flows[fc.flow_id]
        assert rec.delivered_ticks == sorted(rec.delivered_ticks)
        assert rec.created_ticks == sorted(rec.created_ticks)
        assert rec.delivered_bits <= rec.generated * fc.source.packet_bytes * 8


def test_cqich_reports_lag_by_at_most_period():
    cfg = load_scenario("paper_sec7", ["sim.duration_s=1.0"])
    frames = sorted({c.frame for c in run(cfg).cinr})
    assert frames[0] == 0
    assert {b - a for a, b in zip(frames, frames[1:])} == {cfg.channel.cqich_period_frames}
