"""Throughput, delay, jitter, loss and fairness from simulation results."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import TICKS_PER_SECOND
from .sim import FlowRecord, SimResult


@dataclass(frozen=True)
class FlowMetrics:
    flow_id: str
    station_id: str
    service_class: str
    scheduled: bool
    generated_packets: int
    delivered_packets: int
    dropped_packets: int
    queued_packets: int
    delivered_bits: int
    throughput_bps: float
    mean_delay_s: Optional[float]
    jitter_s: Optional[float]
    rfc3550_jitter_s: Optional[float]
    loss_ratio: float


def throughput(times_s: Sequence[float], sizes_bytes: Sequence[int], window: tuple[float, float]) -> float:
    """Bits delivered in the half-open window (start, end] divided by its length."""
    start, end = window
    if not end > start:
        raise ValueError("window must have positive length")
    bits = sum(8 * s for t, s in zip(times_s, sizes_bytes) if start < t <= end)
    return bits / (end - start)


def delay_and_jitter(
    created_s: Sequence[float], delivered_s: Sequence[float]
) -> tuple[Optional[float], Optional[float]]:
    """Mean delay and mean absolute deviation of inter-delivery gaps.

    Either value is None when there are too few deliveries to define it
    (one for delay, two for jitter).
    """
    if len(created_s) != len(delivered_s):
        raise ValueError("created and delivered sequences differ in length")
    if not delivered_s:
        return None, None
    mean_delay = sum(d - c for c, d in zip(created_s, delivered_s)) / len(delivered_s)
    if len(delivered_s) < 2:
        return mean_delay, None
    gaps = [b - a for a, b in zip(delivered_s, delivered_s[1:])]
    mean_gap = sum(gaps) / len(gaps)
    jitter = sum(abs(g - mean_gap) for g in gaps) / len(gaps)
    return mean_delay, jitter


def rfc3550_jitter(created_s: Sequence[float], delivered_s: Sequence[float]) -> Optional[float]:
    """Smoothed interarrival jitter estimator (gain 1/16)."""
    if len(delivered_s) < 2:
        return None
    j = 0.0
    for i in range(1, len(delivered_s)):
        d = (delivered_s[i] - delivered_s[i - 1]) - (created_s[i] - created_s[i - 1])
        j += (abs(d) - j) / 16.0
    return j


def fairness_index(values: Sequence[float]) -> float:
    """Jain's index, (sum v)^2 / (n * sum v^2)."""
    if not values:
        raise ValueError("fairness index of an empty vector is undefined")
    if any(v < 0 for v in values):
        raise ValueError("throughputs must be >= 0")
    squares = sum(v * v for v in values)
    if squares == 0:
        raise ValueError("fairness index of an all-zero vector is undefined")
    return sum(values) ** 2 / (len(values) * squares)


def _ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need two equally long sequences with at least two points")
    rx, ry = _ranks(x), _ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    if vx == 0 or vy == 0:
        raise ValueError("rank correlation undefined for a constant sequence")
    return cov / math.sqrt(vx * vy)


def _seconds(ticks: Sequence[int]) -> list[float]:
    return [t / TICKS_PER_SECOND for t in ticks]


def _scaled(ticks: Optional[float]) -> Optional[float]:
    return None if ticks is None else ticks / TICKS_PER_SECOND


def flow_metrics(record: FlowRecord, duration_s: float) -> FlowMetrics:
    # Work in integer ticks so equal gaps give exactly zero jitter.
    delay, jitter = delay_and_jitter(record.created_ticks, record.delivered_ticks)
    rfc = rfc3550_jitter(record.created_ticks, record.delivered_ticks)
    finished = record.delivered + record.dropped
    return FlowMetrics(
        flow_id=record.flow_id,
        station_id=record.station_id,
        service_class=record.service_class,
        scheduled=record.scheduled,
        generated_packets=record.generated,
        delivered_packets=record.delivered,
        dropped_packets=record.dropped,
        queued_packets=record.queued,
        delivered_bits=record.delivered_bits,
        throughput_bps=throughput(_seconds(record.delivered_ticks), record.sizes, (0.0, duration_s)),
        mean_delay_s=_scaled(delay),
        jitter_s=_scaled(jitter),
        rfc3550_jitter_s=_scaled(rfc),
        loss_ratio=record.dropped / finished if finished else 0.0,
    )


def all_flow_metrics(result: SimResult) -> list[FlowMetrics]:
    return [flow_metrics(rec, result.duration_s) for rec in result.flows.values()]


def station_throughput(result: SimResult, station_id: str) -> float:
    return sum(flow_metrics(r, result.duration_s).throughput_bps for r in result.station_flows(station_id))


def station_mean_delay(result: SimResult, station_id: str) -> Optional[float]:
    """Packet-weighted mean delay over all flows of a station."""
    total = 0
    count = 0
    for rec in result.station_flows(station_id):
        total += sum(d - c for c, d in zip(rec.created_ticks, rec.delivered_ticks))
        count += rec.delivered
    return total / count / TICKS_PER_SECOND if count else None


@dataclass(frozen=True)
class WindowSample:
    start_s: float
    end_s: float
    flow_id: str
    throughput_bps: float
    delivered_packets: int
    mean_delay_s: Optional[float]


def windowed(result: SimResult, window_s: float = 1.0) -> list[WindowSample]:
    """Tumbling-window throughput and delay for every flow."""
    if not window_s > 0:
        raise ValueError("window_s must be > 0")
    width = round(window_s * TICKS_PER_SECOND)
    n = -(-result.duration_ticks // width)
    buckets = {}
    for rec in result.flows.values():
        per = [[0, 0, 0] for _ in range(n)]  # bytes, packets, summed delay ticks
        for c, d, s in zip(rec.created_ticks, rec.delivered_ticks, rec.sizes):
            k = min(max((d - 1) // width, 0), n - 1)  # windows are (start, end]
            per[k][0] += s
            per[k][1] += 1
            per[k][2] += d - c
        buckets[rec.flow_id] = per
    out = []
    for k in range(n):
        start = k * width / TICKS_PER_SECOND
        end = min((k + 1) * width, result.duration_ticks) / TICKS_PER_SECOND
        for fid, per in buckets.items():
            nbytes, packets, delay = per[k]
            mean_delay = delay / packets / TICKS_PER_SECOND if packets else None
            out.append(WindowSample(start, end, fid, 8 * nbytes / (end - start), packets, mean_delay))
    return out
