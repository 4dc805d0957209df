"""Frame-based discrete-event simulator for the uplink scheduler."""

from __future__ import annotations

import heapq
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from typing import Any, Iterator, Optional

from .amc import (
    DEFAULT_UL_PROFILES,
    ChannelParams,
    ChannelState,
    ProfileSet,
    cinr_from_distance,
    cqich_report,
    select_profile,
    steady_profile,
)
from .core import (
    TICKS_PER_SECOND,
    ConfigurationError,
    FrameConfig,
    MobileStation,
    Packet,
    PriorityClass,
    QoSParams,
    ServiceFlow,
    bytes_to_symbols,
    seconds_to_ticks,
)
from .disciplines import (
    DeficitQueue,
    Discipline,
    DrrMode,
    FrameBudget,
    PriorityMode,
    Scheduler,
    mdrr_quantum,
    weight_basic,
    weight_cinr,
)

log = logging.getLogger(__name__)


class WeightFormula(Enum):
    BASIC = "basic"
    CINR = "cinr"


class Pattern(Enum):
    CBR = "cbr"
    VARIABLE = "variable"


@dataclass(frozen=True)
class TrafficSource:
    flow_id: str
    rate_bps: float
    packet_bytes: int
    pattern: Pattern = Pattern.CBR
    sizes: tuple[int, ...] = ()
    start_s: float = 0.0
    stop_s: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(self.sizes))
        if self.pattern is Pattern.VARIABLE and not self.sizes:
            raise ConfigurationError(f"flows.{self.flow_id}.sizes: variable pattern needs at least one size")

    @property
    def max_packet_bytes(self) -> int:
        return max(self.sizes) if self.pattern is Pattern.VARIABLE else self.packet_bytes

    @property
    def mean_packet_bytes(self) -> float:
        if self.pattern is Pattern.VARIABLE:
            return sum(self.sizes) / len(self.sizes)
        return float(self.packet_bytes)


@dataclass(frozen=True)
class FlowConfig:
    flow_id: str
    qos: QoSParams
    source: TrafficSource
    queue_capacity: int = 100
    wrr_weight: int = 1
    class_name: str = ""


@dataclass(frozen=True)
class StationConfig:
    station_id: str
    distance_m: float
    flows: tuple[FlowConfig, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "flows", tuple(self.flows))


@dataclass(frozen=True)
class SchedulerConfig:
    discipline: Discipline = Discipline.MDRR
    priority_mode: PriorityMode = PriorityMode.STRICT
    drr_mode: DrrMode = DrrMode.CLASSIC
    weight_formula: WeightFormula = WeightFormula.CINR
    low_discipline: Discipline = Discipline.RR
    drr_quantum_bytes: Optional[int] = None


@dataclass(frozen=True)
class SimConfig:
    stations: tuple[StationConfig, ...]
    frame: FrameConfig = FrameConfig()
    channel: ChannelParams = ChannelParams()
    profiles: ProfileSet = DEFAULT_UL_PROFILES
    scheduler: SchedulerConfig = SchedulerConfig()
    duration_s: float = 100.0
    seed: int = 1
    load_factor: float = 1.0
    random_phase: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "stations", tuple(self.stations))

    @property
    def flows(self) -> list[FlowConfig]:
        return [f for s in self.stations for f in s.flows]

    def validate(self) -> None:
        """Raise ConfigurationError naming the offending key on any inconsistency."""
        frame = self.frame
        if seconds_to_ticks(self.duration_s) < frame.frame_ticks:
            raise ConfigurationError("sim.duration_s: must cover at least one frame")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("sim.seed: must be a 64-bit unsigned integer")
        if not self.load_factor > 0:
            raise ConfigurationError("sim.load_factor: must be > 0")
        sched = self.scheduler
        if sched.drr_quantum_bytes is not None and sched.drr_quantum_bytes < 0:
            raise ConfigurationError("scheduler.drr_quantum_bytes: must be >= 0")
        seen_stations: set[str] = set()
        seen_flows: set[str] = set()
        tsc = frame.total_system_capacity_sps
        robust_bps = self.profiles[0].bits_per_symbol(frame.data_subcarriers)
        for station in self.stations:
            if station.station_id in seen_stations:
                raise ConfigurationError(f"stations.{station.station_id}: duplicate station id")
            seen_stations.add(station.station_id)
            if not station.distance_m > 0:
                raise ConfigurationError(f"stations.{station.station_id}.distance_m: must be > 0")
            for flow in station.flows:
                key = f"flows.{flow.flow_id}"
                if flow.flow_id in seen_flows:
                    raise ConfigurationError(f"{key}: flow assigned more than once")
                seen_flows.add(flow.flow_id)
                src = flow.source
                if not src.rate_bps > 0:
                    raise ConfigurationError(f"{key}.rate_bps: must be > 0")
                sizes = src.sizes if src.pattern is Pattern.VARIABLE else (src.packet_bytes,)
                if min(sizes) < 1:
                    raise ConfigurationError(f"{key}.packet_bytes: packets must be >= 1 byte")
                if src.max_packet_bytes > frame.mtu_bytes:
                    raise ConfigurationError(
                        f"{key}.packet_bytes: {src.max_packet_bytes} B exceeds frame.mtu_bytes {frame.mtu_bytes}"
                    )
                need = bytes_to_symbols(src.max_packet_bytes, robust_bps)
                if need > frame.symbols_per_frame:
                    raise ConfigurationError(
                        f"{key}.packet_bytes: a {src.max_packet_bytes} B packet needs {need} symbols at "
                        f"{self.profiles[0].name}, more than frame.symbols_per_frame {frame.symbols_per_frame}"
                    )
                if src.stop_s is not None and src.stop_s < src.start_s:
                    raise ConfigurationError(f"{key}.stop_s: must not precede start_s")
                if src.start_s < 0:
                    raise ConfigurationError(f"{key}.start_s: must be >= 0")
                if flow.queue_capacity < 1:
                    raise ConfigurationError(f"{key}.queue_capacity: must be >= 1")
                if sched.discipline is Discipline.WRR and flow.wrr_weight < 1:
                    raise ConfigurationError(f"{key}.wrr_weight: WRR weights must be integers >= 1")
                mtmr = Fraction(flow.qos.min_reserved_rate_bps) / robust_bps
                if mtmr > tsc:
                    raise ConfigurationError(
                        f"{key}.min_reserved: {flow.qos.min_reserved_rate_bps:g} bps needs "
                        f"{float(mtmr):.1f} symbols/s at {self.profiles[0].name}, exceeding the total "
                        f"system capacity of {float(tsc):g} symbols/s"
                    )


class EventKind(IntEnum):
    # Order breaks ties between events at the same tick.
    FRAME_START = 0
    CQICH_REPORT = 1
    PACKET_ARRIVAL = 2
    SIM_END = 3


@dataclass(order=True, frozen=True)
class Event:
    time: int
    kind: EventKind
    seq: int
    payload: Any = field(default=None, compare=False)


def iter_arrivals(
    source: TrafficSource,
    end_tick: int,
    *,
    rate_bps: Optional[float] = None,
    rng: Optional[random.Random] = None,
    phase_ticks: int = 0,
) -> Iterator[tuple[int, int]]:
    """Yield ``(tick, size_bytes)`` arrivals in ``[start, min(stop, end))``.

    Arrival k happens once the bits of packets 0..k-1 have been emitted at
    ``rate_bps``, so the long-run rate is exact and any window is off by at
    most one packet.
    """
    rate = Fraction(rate_bps if rate_bps is not None else source.rate_bps)
    if not rate > 0:
        raise ValueError("rate must be > 0")
    start = seconds_to_ticks(source.start_s) + phase_ticks
    stop = end_tick if source.stop_s is None else min(end_tick, seconds_to_ticks(source.stop_s))
    if source.pattern is Pattern.VARIABLE and rng is None:
        raise ValueError("variable-size traffic needs a seeded rng")
    bits_sent = 0
    while True:
        tick = start + math.floor(bits_sent * TICKS_PER_SECOND / rate + Fraction(1, 2))
        if tick >= stop:
            return
        size = rng.choice(source.sizes) if source.pattern is Pattern.VARIABLE else source.packet_bytes
        yield tick, size
        bits_sent += size * 8


def generate_traffic(
    source: TrafficSource,
    window: tuple[float, float],
    *,
    seed: int = 0,
    rate_bps: Optional[float] = None,
) -> list[Event]:
    """Arrival events of ``source`` between ``window[0]`` and ``window[1]`` seconds."""
    lo, hi = (seconds_to_ticks(w) for w in window)
    rng = random.Random(f"{seed}/traffic/{source.flow_id}")
    events = []
    for seq, (tick, size) in enumerate(iter_arrivals(source, hi, rate_bps=rate_bps, rng=rng)):
        if tick >= lo:
            events.append(Event(tick, EventKind.PACKET_ARRIVAL, seq, (source.flow_id, size)))
    return events


@dataclass
class FlowRecord:
    flow_id: str
    station_id: str
    service_class: str
    scheduled: bool
    packet_bits: float
    generated: int = 0
    dropped: int = 0
    queued: int = 0
    created_ticks: list[int] = field(default_factory=list)
    delivered_ticks: list[int] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)

    @property
    def delivered(self) -> int:
        return len(self.delivered_ticks)

    @property
    def delivered_bits(self) -> int:
        return 8 * sum(self.sizes)


@dataclass(frozen=True)
class FrameSample:
    index: int
    start_tick: int
    symbols_budget: int
    symbols_used: int
    packets: int
    bytes: int
    backlog: int


@dataclass(frozen=True)
class WeightSample:
    frame: int
    flow_id: str
    station_id: str
    reported_cinr_db: Optional[float]
    profile: int
    weight: float
    quantum: int


@dataclass(frozen=True)
class CinrSample:
    frame: int
    station_id: str
    cinr_db: float
    profile: int


@dataclass
class SimResult:
    config: SimConfig
    duration_ticks: int
    flows: dict[str, FlowRecord]
    frames: list[FrameSample]
    weights: list[WeightSample]
    cinr: list[CinrSample]
    stalls: list[str]

    @property
    def duration_s(self) -> float:
        return self.duration_ticks / TICKS_PER_SECOND

    def station_flows(self, station_id: str) -> list[FlowRecord]:
        return [f for f in self.flows.values() if f.station_id == station_id]

    def mean_cinr(self, station_id: str) -> Optional[float]:
        values = [c.cinr_db for c in self.cinr if c.station_id == station_id]
        return sum(values) / len(values) if values else None

    def final_profile(self, station_id: str) -> int:
        values = [c.profile for c in self.cinr if c.station_id == station_id]
        return values[-1] if values else 0


class Simulation:
    """One simulation run. ``run()`` processes every event; ``run_until`` stops early."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.frame = config.frame
        self.frame_ticks = config.frame.frame_ticks
        self.end_tick = seconds_to_ticks(config.duration_s)
        self.now = 0
        self._heap: list[Event] = []
        self._seq = 0
        self._packet_ids = 0
        self._tsc = config.frame.total_system_capacity_sps
        self._cost_cache: dict[tuple[int, int], int] = {}

        self.stations: dict[str, MobileStation] = {}
        self.channels: dict[str, ChannelState] = {}
        self._channel_rng: dict[str, random.Random] = {}
        self.flows: dict[str, ServiceFlow] = {}
        self.records: dict[str, FlowRecord] = {}
        self._flow_cfg: dict[str, FlowConfig] = {}
        self._sources: dict[str, Iterator[tuple[int, int]]] = {}

        high: list[DeficitQueue] = []
        low: list[DeficitQueue] = []
        self.queues: list[DeficitQueue] = []
        quantum = config.scheduler.drr_quantum_bytes
        if quantum is None:
            quantum = config.frame.mtu_bytes
        qid = 0
        unsupported = []
        for st in config.stations:
            rng = random.Random(f"{config.seed}/channel/{st.station_id}")
            cinr = cinr_from_distance(st.distance_m, config.channel, rng)
            station = MobileStation(st.station_id, st.distance_m, cinr, profile=0)
            self.stations[st.station_id] = station
            self.channels[st.station_id] = ChannelState(st.station_id, cinr, config.channel.cqich_period_frames)
            self._channel_rng[st.station_id] = rng
            for fc in st.flows:
                flow = ServiceFlow(fc.flow_id, st.station_id, fc.qos, capacity=fc.queue_capacity)
                station.flows.append(flow)
                self.flows[fc.flow_id] = flow
                self._flow_cfg[fc.flow_id] = fc
                cls = fc.qos.service_class
                self.records[fc.flow_id] = FlowRecord(
                    fc.flow_id, st.station_id, cls.value, cls.scheduled, fc.source.mean_packet_bytes * 8
                )
                if not cls.scheduled:
                    unsupported.append(fc.flow_id)
                else:
                    q = DeficitQueue(qid, flow, quantum_bytes=quantum, weight=fc.wrr_weight)
                    qid += 1
                    self.queues.append(q)
                    (high if cls.priority is PriorityClass.HIGH else low).append(q)
        if unsupported:
            log.warning("flows %s use grant-based classes and are not scheduled", ", ".join(unsupported))
        sc = config.scheduler
        self.scheduler = Scheduler(
            high,
            low,
            discipline=sc.discipline,
            priority_mode=sc.priority_mode,
            drr_mode=sc.drr_mode,
            low_discipline=sc.low_discipline,
        )
        self.frames: list[FrameSample] = []
        self.weights: list[WeightSample] = []
        self.cinr: list[CinrSample] = []
        self._last_weight: dict[str, tuple] = {}
        self._init_events()

    # -- events -------------------------------------------------------------

    def _push(self, time: int, kind: EventKind, payload: Any = None) -> None:
        heapq.heappush(self._heap, Event(time, kind, self._seq, payload))
        self._seq += 1

    def _init_events(self) -> None:
        cfg = self.config
        for fc in cfg.flows:
            rate = fc.source.rate_bps * cfg.load_factor
            rng = random.Random(f"{cfg.seed}/traffic/{fc.flow_id}")
            phase = 0
            if cfg.random_phase:
                interval = fc.source.mean_packet_bytes * 8 / rate
                phase = math.floor(rng.random() * interval * TICKS_PER_SECOND)
            it = iter_arrivals(fc.source, self.end_tick, rate_bps=rate, rng=rng, phase_ticks=phase)
            self._sources[fc.flow_id] = it
            self._next_arrival(fc.flow_id)
        self._push(0, EventKind.FRAME_START, 0)
        self._push(self.end_tick, EventKind.SIM_END)

    def _next_arrival(self, flow_id: str) -> None:
        nxt = next(self._sources[flow_id], None)
        if nxt is not None:
            self._push(nxt[0], EventKind.PACKET_ARRIVAL, (flow_id, nxt[1]))

    def run_until(self, tick: int) -> None:
        """Process every event with time <= ``tick``."""
        while self._heap and self._heap[0].time <= tick:
            ev = heapq.heappop(self._heap)
            self.now = ev.time
            if ev.kind is EventKind.PACKET_ARRIVAL:
                self._on_arrival(*ev.payload)
            elif ev.kind is EventKind.FRAME_START:
                self._on_frame(ev.payload)
            elif ev.kind is EventKind.CQICH_REPORT:
                self._on_cqich(ev.payload)
            else:
                self._heap.clear()

    def run(self) -> SimResult:
        self.run_until(self.end_tick)
        return self.result()

    # -- handlers -----------------------------------------------------------

    def _on_arrival(self, flow_id: str, size: int) -> None:
        packet = Packet(self._packet_ids, flow_id, size, self.now)
        self._packet_ids += 1
        flow = self.flows[flow_id]
        rec = self.records[flow_id]
        rec.generated += 1
        if not flow.enqueue(packet):
            rec.dropped += 1
        self._next_arrival(flow_id)

    def _packet_cost(self, packet: Packet) -> int:
        station = self.stations[self.flows[packet.flow_id].station_id]
        key = (packet.size_bytes, station.profile)
        cost = self._cost_cache.get(key)
        if cost is None:
            bps = self.config.profiles[station.profile].bits_per_symbol(self.frame.data_subcarriers)
            cost = self._cost_cache[key] = bytes_to_symbols(packet.size_bytes, bps)
        return cost

    def _update_weights(self, frame_index: int) -> None:
        cfg = self.config
        use_cinr = cfg.scheduler.weight_formula is WeightFormula.CINR
        mdrr = cfg.scheduler.discipline is Discipline.MDRR
        for q in self.queues:
            flow = q.flow
            station = self.stations[flow.station_id]
            reported = self.channels[flow.station_id].reported_cinr_db
            bps = cfg.profiles[station.profile].bits_per_symbol(self.frame.data_subcarriers)
            mtmr = Fraction(flow.qos.min_reserved_rate_bps) / bps
            if use_cinr and reported is not None:
                w = weight_cinr(mtmr, self._tsc, reported)
            else:
                w = weight_basic(mtmr, self._tsc)
            quantum = mdrr_quantum(w, self.frame.mtu_bytes)
            if mdrr:
                q.weight = w
                q.quantum_bytes = quantum
            state = (reported, station.profile, w, quantum)
            if self._last_weight.get(flow.flow_id) != state:
                self._last_weight[flow.flow_id] = state
                self.weights.append(
                    WeightSample(frame_index, flow.flow_id, flow.station_id, reported, station.profile, w, quantum)
                )

    def _on_frame(self, index: int) -> None:
        cfg = self.config
        if cfg.channel.noise_sigma_db > 0:
            for sid, station in self.stations.items():
                cinr = cinr_from_distance(station.distance_m, cfg.channel, self._channel_rng[sid])
                station.cinr_db = cinr
                self.channels[sid].cinr_db = cinr
        self._update_weights(index)
        budget = FrameBudget(self.frame.symbols_per_frame, self._packet_cost)
        served = self.scheduler.schedule_frame(budget)
        end = self.now + self.frame_ticks
        nbytes = 0
        for q, packet in served:
            packet.mark_dequeued(end)
            rec = self.records[packet.flow_id]
            rec.created_ticks.append(packet.created_tick)
            rec.delivered_ticks.append(end)
            rec.sizes.append(packet.size_bytes)
            nbytes += packet.size_bytes
        backlog = sum(len(f) for f in self.flows.values())
        self.frames.append(
            FrameSample(index, self.now, self.frame.symbols_per_frame, budget.used, len(served), nbytes, backlog)
        )
        if index % cfg.channel.cqich_period_frames == 0:
            self._push(self.now, EventKind.CQICH_REPORT, index)
        if end + self.frame_ticks <= self.end_tick:
            self._push(end, EventKind.FRAME_START, index + 1)

    def _on_cqich(self, frame_index: int) -> None:
        for sid, station in self.stations.items():
            reported = cqich_report(self.channels[sid], frame_index)
            station.profile = select_profile(station.profile, reported, self.config.profiles)
            self.cinr.append(CinrSample(frame_index, sid, reported, station.profile))

    # -- results ------------------------------------------------------------

    def conservation_holds(self) -> bool:
        for fid, flow in self.flows.items():
            rec = self.records[fid]
            if rec.generated != len(flow) + rec.delivered + rec.dropped:
                return False
        return True

    def result(self) -> SimResult:
        for fid, flow in self.flows.items():
            self.records[fid].queued = len(flow)
        return SimResult(
            config=self.config,
            duration_ticks=self.end_tick,
            flows=self.records,
            frames=self.frames,
            weights=self.weights,
            cinr=self.cinr,
            stalls=self.scheduler.stalls,
        )


def run(config: SimConfig) -> SimResult:
    return Simulation(config).run()


def offered_load(config: SimConfig) -> float:
    """Offered symbols per second over total system capacity, at noiseless steady-state profiles."""
    frame = config.frame
    total = 0.0
    for st in config.stations:
        cinr = cinr_from_distance(st.distance_m, ChannelParams(
            config.channel.reference_cinr_db,
            config.channel.reference_distance_m,
            config.channel.pathloss_exponent,
        ))
        profile = config.profiles[steady_profile(cinr, config.profiles)]
        bps = profile.bits_per_symbol(frame.data_subcarriers)
        for fc in st.flows:
            if not fc.qos.service_class.scheduled:
                continue
            src = fc.source
            sizes = src.sizes if src.pattern is Pattern.VARIABLE else (src.packet_bytes,)
            mean_symbols = sum(bytes_to_symbols(s, bps) for s in sizes) / len(sizes)
            packets_per_s = src.rate_bps * config.load_factor / (src.mean_packet_bytes * 8)
            total += packets_per_s * mean_symbols
    return total / float(frame.total_system_capacity_sps)
