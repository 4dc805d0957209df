"""Domain types shared by the scheduler, channel model and simulator."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Deque, Optional, Union

# Internal clock resolution: 1 tick = 10 ns, so 5 ms and 102.86 us are exact.
TICKS_PER_SECOND = 100_000_000

Number = Union[int, float, Fraction]


class ConfigurationError(ValueError):
    """A configuration value violates a model constraint."""


def seconds_to_ticks(seconds: Number) -> int:
    """Round a time in seconds to the nearest tick (half up)."""
    return math.floor(Fraction(seconds) * TICKS_PER_SECOND + Fraction(1, 2))


def ticks_to_seconds(ticks: int) -> float:
    return ticks / TICKS_PER_SECOND


class ServiceClass(Enum):
    UGS = "UGS"
    ERTPS = "ertPS"
    RTPS = "rtPS"
    NRTPS = "nrtPS"
    BE = "BE"

    @classmethod
    def parse(cls, text: str) -> "ServiceClass":
        for member in cls:
            if member.value.lower() == text.lower():
                return member
        raise ValueError(f"unknown service class {text!r}")

    @property
    def priority(self) -> Optional["PriorityClass"]:
        """Scheduling class, or None for grant-based classes the scheduler does not serve."""
        return _PRIORITY.get(self)

    @property
    def scheduled(self) -> bool:
        return self in _PRIORITY


class PriorityClass(Enum):
    HIGH = "high"
    LOW = "low"


_PRIORITY = {
    ServiceClass.RTPS: PriorityClass.HIGH,
    ServiceClass.NRTPS: PriorityClass.HIGH,
    ServiceClass.BE: PriorityClass.LOW,
}


@dataclass(slots=True)
class Packet:
    id: int
    flow_id: str
    size_bytes: int
    created_tick: int
    dequeued_tick: Optional[int] = None

    def __post_init__(self) -> None:
        if self.size_bytes < 1:
            raise ValueError(f"packet size must be >= 1 byte, got {self.size_bytes}")

    @property
    def created_at(self) -> float:
        return ticks_to_seconds(self.created_tick)

    @property
    def dequeued_at(self) -> Optional[float]:
        if self.dequeued_tick is None:
            return None
        return ticks_to_seconds(self.dequeued_tick)

    def mark_dequeued(self, tick: int) -> None:
        if tick < self.created_tick:
            raise ValueError(
                f"packet {self.id} dequeued at tick {tick} before creation at {self.created_tick}"
            )
        self.dequeued_tick = tick


@dataclass(frozen=True)
class QoSParams:
    service_class: ServiceClass
    max_sustained_rate_bps: float
    min_reserved_rate_bps: float
    max_latency_s: float

    def __post_init__(self) -> None:
        if self.min_reserved_rate_bps < 0:
            raise ConfigurationError("min_reserved_rate_bps must be >= 0")
        if self.min_reserved_rate_bps > self.max_sustained_rate_bps:
            raise ConfigurationError(
                f"min_reserved_rate_bps ({self.min_reserved_rate_bps}) exceeds "
                f"max_sustained_rate_bps ({self.max_sustained_rate_bps})"
            )
        if not self.max_latency_s > 0:
            raise ConfigurationError("max_latency_s must be > 0")


@dataclass(eq=False)
class ServiceFlow:
    """Tail-drop FIFO of packets plus the flow's QoS contract."""

    flow_id: str
    station_id: str
    qos: QoSParams
    capacity: int = 100
    queue: Deque[Packet] = field(default_factory=deque)
    drops: int = 0
    generated: int = 0
    delivered: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigurationError(f"flow {self.flow_id}: queue capacity must be >= 1")

    def enqueue(self, packet: Packet) -> bool:
        """Append a packet; returns False (and counts a drop) when the queue is full."""
        self.generated += 1
        if len(self.queue) >= self.capacity:
            self.drops += 1
            return False
        self.queue.append(packet)
        return True

    def dequeue(self) -> Packet:
        self.delivered += 1
        return self.queue.popleft()

    def __len__(self) -> int:
        return len(self.queue)


@dataclass(eq=False)
class MobileStation:
    station_id: str
    distance_m: float
    cinr_db: float
    profile: int = 0
    flows: list[ServiceFlow] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.distance_m > 0:
            raise ConfigurationError(f"station {self.station_id}: distance_m must be > 0")
        if not math.isfinite(self.cinr_db):
            raise ConfigurationError(f"station {self.station_id}: cinr_db must be finite")


@dataclass(frozen=True)
class FrameConfig:
    frame_duration_s: float = 0.005
    symbols_per_frame: int = 21
    data_subcarriers: int = 768
    mtu_bytes: int = 1500
    symbol_duration_s: float = 102.86e-6

    def __post_init__(self) -> None:
        if not self.frame_duration_s > 0:
            raise ConfigurationError("frame duration must be > 0")
        if self.symbols_per_frame < 1:
            raise ConfigurationError("symbols_per_frame must be >= 1")
        if self.data_subcarriers < 1:
            raise ConfigurationError("data_subcarriers must be >= 1")
        if self.mtu_bytes < 1:
            raise ConfigurationError("mtu_bytes must be >= 1")
        if not self.symbol_duration_s > 0:
            raise ConfigurationError("symbol duration must be > 0")
        if self.symbols_per_frame > self.max_symbols_per_frame:
            raise ConfigurationError(
                f"symbols_per_frame {self.symbols_per_frame} exceeds the "
                f"{self.max_symbols_per_frame} symbols that fit in one frame"
            )

    @property
    def max_symbols_per_frame(self) -> int:
        return math.floor(seconds_to_ticks(self.frame_duration_s) / seconds_to_ticks(self.symbol_duration_s))

    @property
    def frame_ticks(self) -> int:
        return seconds_to_ticks(self.frame_duration_s)

    @property
    def total_system_capacity_sps(self) -> Fraction:
        """Uplink symbols per second; derived, never set independently."""
        return Fraction(self.symbols_per_frame * TICKS_PER_SECOND, self.frame_ticks)


def bytes_to_symbols(size_bytes: int, bits_per_symbol: Number) -> int:
    """Symbols needed to carry ``size_bytes`` at ``bits_per_symbol`` effective bits.

    ``bits_per_symbol`` is modulation bits x coding rate x data subcarriers, see
    :meth:`mdrrsim.amc.BurstProfile.bits_per_symbol`.
    """
    if not bits_per_symbol > 0:
        raise ValueError("bits_per_symbol must be > 0")
    return math.ceil(Fraction(size_bytes * 8) / Fraction(bits_per_symbol))
