"""Queue disciplines: RR, WRR, DRR and the class-based MDRR scheduler.

Each discipline is a small policy object over an ordered list of
:class:`DeficitQueue`. Policies expose ``peek()`` (which queue's head packet
goes next; stable until ``served()`` is called) and ``served()``, so a frame
scheduler can stop when the head packet no longer fits the frame budget and
resume from exactly the same point in the next frame.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Union

from .core import ConfigurationError, Number, Packet, QoSParams, ServiceClass, ServiceFlow

log = logging.getLogger(__name__)

# Extra weight for good channels: zero at 12 dB, full 3.5 units at 34 dB, each unit worth 3 weight points.
CINR_FLOOR_DB = 12.0
CINR_SPAN_DB = 22.0
CINR_MAX_UNITS = 3.5
CINR_UNIT_WEIGHT = 3.0

# Quantum bytes granted per weight percent.
QUANTUM_BYTES_PER_WEIGHT = 512


class Discipline(Enum):
    RR = "RR"
    WRR = "WRR"
    DRR = "DRR"
    MDRR = "MDRR"


class PriorityMode(Enum):
    ALTERNATE = "alternate"
    STRICT = "strict"


class DrrMode(Enum):
    CLASSIC = "classic"  # serve only while deficit covers the head packet
    SERVE_FIRST = "serve_first"  # serve the head, keep going while the deficit stays >= 0


@dataclass(eq=False)
class DeficitQueue:
    queue_id: Union[int, str]
    flow: ServiceFlow
    quantum_bytes: int = 0
    deficit_bytes: int = 0
    weight: Number = 0

    @property
    def backlog(self) -> deque:
        return self.flow.queue

    @property
    def head(self) -> Optional[Packet]:
        return self.flow.queue[0] if self.flow.queue else None

    def pop(self) -> Packet:
        return self.flow.dequeue()

    @classmethod
    def from_sizes(
        cls,
        queue_id: Union[int, str],
        sizes: Iterable[int],
        *,
        quantum_bytes: int = 0,
        weight: Number = 0,
        service_class: ServiceClass = ServiceClass.RTPS,
    ) -> "DeficitQueue":
        """Standalone queue preloaded with packets of the given sizes."""
        sizes = list(sizes)
        qos = QoSParams(service_class, 1e9, 0.0, 1.0)
        flow = ServiceFlow(str(queue_id), str(queue_id), qos, capacity=max(len(sizes), 1))
        for i, size in enumerate(sizes):
            flow.enqueue(Packet(i, str(queue_id), size, 0))
        return cls(queue_id, flow, quantum_bytes=quantum_bytes, weight=weight)


def _unit_cost(packet: Packet) -> int:
    return 1


@dataclass
class FrameBudget:
    """Symbols left in the current frame and the symbol cost of each packet."""

    remaining: int
    cost: Callable[[Packet], int] = _unit_cost
    used: int = 0

    def fits(self, packet: Packet) -> bool:
        return self.cost(packet) <= self.remaining

    def consume(self, packet: Packet) -> int:
        symbols = self.cost(packet)
        if symbols > self.remaining:
            raise ValueError("packet does not fit the remaining frame budget")
        self.remaining -= symbols
        self.used += symbols
        return symbols


class _Ring:
    def __init__(self, queues: Sequence[DeficitQueue]):
        self.queues = list(queues)
        self.pointer = 0
        self.visits = 0
        self._pos = {id(q): i for i, q in enumerate(self.queues)}

    @property
    def has_backlog(self) -> bool:
        return any(q.backlog for q in self.queues)

    def position(self, queue: DeficitQueue) -> int:
        return self._pos[id(queue)]

    def _advance_from(self, index: int) -> None:
        self.pointer = (index + 1) % len(self.queues)
        self.visits += 1

    def _scan(self) -> Optional[DeficitQueue]:
        n = len(self.queues)
        for k in range(n):
            i = (self.pointer + k) % n
            if self.queues[i].backlog:
                self.pointer = i
                return self.queues[i]
        return None


class RoundRobin(_Ring):
    """One packet per visit to each backlogged queue."""

    visit_open = False

    def peek(self) -> Optional[DeficitQueue]:
        return self._scan()

    def served(self, queue: DeficitQueue, packet: Packet) -> None:
        self._advance_from(self.position(queue))


class WeightedRoundRobin(_Ring):
    """Up to ``weight`` packets per visit."""

    def __init__(self, queues: Sequence[DeficitQueue]):
        super().__init__(queues)
        for q in self.queues:
            if q.weight != int(q.weight) or q.weight < 1:
                raise ConfigurationError(f"WRR weight of queue {q.queue_id} must be an integer >= 1, got {q.weight}")
        self._count = 0

    @property
    def visit_open(self) -> bool:
        return self._count > 0

    def peek(self) -> Optional[DeficitQueue]:
        return self._scan()

    def served(self, queue: DeficitQueue, packet: Packet) -> None:
        self._count += 1
        if self._count >= int(queue.weight) or not queue.backlog:
            self._count = 0
            self._advance_from(self.position(queue))


class DeficitRoundRobin(_Ring):
    """Deficit round robin with a per-visit quantum and deficit reset on empty queues."""

    def __init__(self, queues: Sequence[DeficitQueue], mode: DrrMode = DrrMode.CLASSIC):
        super().__init__(queues)
        self.mode = mode
        self.stalls: list[str] = []
        self._open = False
        self._may_serve = False
        self._oversize_seen: set[int] = set()

    @property
    def visit_open(self) -> bool:
        return self._open

    def _servable(self, q: DeficitQueue) -> bool:
        if not q.backlog:
            return False
        if self.mode is DrrMode.CLASSIC:
            return q.deficit_bytes >= q.backlog[0].size_bytes
        return self._may_serve

    def _close(self, q: DeficitQueue) -> None:
        if not q.backlog:
            q.deficit_bytes = 0
        elif self.mode is DrrMode.CLASSIC and q.backlog[0].size_bytes > q.quantum_bytes:
            head = q.backlog[0]
            if head.id not in self._oversize_seen:
                self._oversize_seen.add(head.id)
                self.stalls.append(
                    f"queue {q.queue_id}: packet {head.id} ({head.size_bytes} B) exceeds "
                    f"quantum {q.quantum_bytes} B and needs several rounds"
                )
        self._open = False
        self._advance_from(self.pointer)

    def step(self) -> Optional[DeficitQueue]:
        """Advance the state machine by one decision.

        Returns the queue to serve next, or None after moving the pointer on.
        """
        q = self.queues[self.pointer]
        if not self._open:
            if not q.backlog:
                self._advance_from(self.pointer)
                return None
            q.deficit_bytes += q.quantum_bytes
            self._open = True
            if self.mode is DrrMode.SERVE_FIRST:
                self._may_serve = q.deficit_bytes > 0
        if self._servable(q):
            return q
        self._close(q)
        return None

    def peek(self) -> Optional[DeficitQueue]:
        if not self.queues or not self.has_backlog:
            return None
        n = len(self.queues)
        idle = 0
        while True:
            before = self.visits
            q = self.step()
            if q is not None:
                return q
            if self.visits != before:
                idle += 1
                if idle % n == 0 and not any(x.backlog and x.quantum_bytes > 0 for x in self.queues):
                    msg = "all backlogged queues have a zero quantum; nothing can be served"
                    if not self.stalls or self.stalls[-1] != msg:
                        self.stalls.append(msg)
                        log.warning(msg)
                    return None

    def served(self, queue: DeficitQueue, packet: Packet) -> None:
        queue.deficit_bytes -= packet.size_bytes
        if self.mode is DrrMode.SERVE_FIRST:
            self._may_serve = queue.deficit_bytes >= 0 and bool(queue.backlog)
        if not self._servable(queue):
            self._close(queue)


Policy = Union[RoundRobin, WeightedRoundRobin, DeficitRoundRobin]


def make_policy(discipline: Discipline, queues: Sequence[DeficitQueue], drr_mode: DrrMode = DrrMode.CLASSIC) -> Policy:
    if discipline is Discipline.RR:
        return RoundRobin(queues)
    if discipline is Discipline.WRR:
        return WeightedRoundRobin(queues)
    return DeficitRoundRobin(queues, drr_mode)


@dataclass
class Decision:
    queue: DeficitQueue
    packet: Packet
    policy: Policy
    high_backlogged: bool = False


class Scheduler:
    """Per-frame uplink scheduler.

    With ``Discipline.MDRR`` the HIGH class (rtPS/nrtPS) runs deficit round
    robin and the LOW class (BE) runs ``low_discipline``; the two classes are
    combined by strict priority or by alternating one HIGH visit with one LOW
    visit. Any other discipline serves every queue in a single ring.
    """

    def __init__(
        self,
        high: Sequence[DeficitQueue],
        low: Sequence[DeficitQueue] = (),
        *,
        discipline: Discipline = Discipline.MDRR,
        priority_mode: PriorityMode = PriorityMode.STRICT,
        drr_mode: DrrMode = DrrMode.CLASSIC,
        low_discipline: Discipline = Discipline.RR,
    ):
        self.discipline = discipline
        self.priority_mode = priority_mode
        self.drr_mode = drr_mode
        if discipline is Discipline.MDRR:
            if low_discipline not in (Discipline.RR, Discipline.MDRR):
                raise ConfigurationError("LOW class must use RR or MDRR")
            low_kind = Discipline.DRR if low_discipline is Discipline.MDRR else Discipline.RR
            self.high: Policy = DeficitRoundRobin(high, drr_mode)
            self.low: Optional[Policy] = make_policy(low_kind, low, drr_mode)
        else:
            self.high = make_policy(discipline, [*high, *low], drr_mode)
            self.low = None
        self._turn_high = True
        self.history: list[Decision] = []
        self.record_history = False

    @property
    def queues(self) -> list[DeficitQueue]:
        out = list(self.high.queues)
        if self.low is not None:
            out += self.low.queues
        return out

    @property
    def stalls(self) -> list[str]:
        out: list[str] = []
        for policy in (self.high, self.low):
            out += getattr(policy, "stalls", [])
        return out

    def select(self) -> Optional[tuple[Policy, DeficitQueue]]:
        if self.low is None:
            q = self.high.peek()
            return (self.high, q) if q is not None else None
        if self.priority_mode is PriorityMode.STRICT:
            order = (self.high, self.low)
        else:
            order = (self.high, self.low) if self._turn_high else (self.low, self.high)
        for policy in order:
            q = policy.peek()
            if q is not None:
                self._turn_high = policy is self.high
                return policy, q
        return None

    def _after_serve(self, policy: Policy) -> None:
        if self.low is not None and not policy.visit_open:
            self._turn_high = policy is self.low

    def schedule_frame(self, budget: FrameBudget) -> list[tuple[DeficitQueue, Packet]]:
        """Serve packets until every queue is idle or the next head packet does not fit."""
        served = []
        while True:
            choice = self.select()
            if choice is None:
                break
            policy, queue = choice
            packet = queue.head
            if not budget.fits(packet):
                break
            if self.record_history:
                high_busy = self.low is not None and self.high.has_backlog
                self.history.append(Decision(queue, packet, policy, high_busy))
            queue.pop()
            budget.consume(packet)
            policy.served(queue, packet)
            self._after_serve(policy)
            served.append((queue, packet))
        return served


def rr_select(rr: RoundRobin) -> Optional[Union[int, str]]:
    """Next backlogged queue at or after the pointer; the caller dequeues one packet."""
    q = rr.peek()
    if q is None:
        return None
    rr._advance_from(rr.position(q))
    return q.queue_id


def wrr_select(wrr: WeightedRoundRobin) -> Optional[tuple[Union[int, str], int]]:
    """Next backlogged queue and how many packets to take from it this visit."""
    q = wrr.peek()
    if q is None:
        return None
    count = min(int(q.weight), len(q.backlog))
    wrr._count = 0
    wrr._advance_from(wrr.position(q))
    return q.queue_id, count


def drr_round(drr: DeficitRoundRobin, budget: FrameBudget) -> list[tuple[Union[int, str], Packet]]:
    """One pass of the pointer over every queue, bounded by the frame budget."""
    out = []
    target = drr.visits + len(drr.queues)
    while drr.visits < target and drr.has_backlog:
        q = drr.step()
        if q is None:
            continue
        packet = q.head
        if not budget.fits(packet):
            break
        q.pop()
        budget.consume(packet)
        drr.served(q, packet)
        out.append((q.queue_id, packet))
    return out


def mdrr_schedule(scheduler: Scheduler, budget: FrameBudget) -> list[tuple[Union[int, str], Packet]]:
    return [(q.queue_id, p) for q, p in scheduler.schedule_frame(budget)]


def mdrr_quantum(weight: Number, mtu_bytes: int) -> int:
    """Quantum in bytes: the MTU plus 512 bytes per weight percent, rounded half up."""
    if weight < 0:
        raise ValueError("weight must be >= 0")
    if mtu_bytes <= 0:
        raise ValueError("mtu_bytes must be > 0")
    exact = mtu_bytes + QUANTUM_BYTES_PER_WEIGHT * Fraction(weight)
    return math.floor(exact + Fraction(1, 2))


def weight_basic(mtmr_sps: Number, tsc_sps: Number) -> float:
    """Reserved symbol rate as a percentage of total system capacity."""
    if not tsc_sps > 0:
        raise ConfigurationError("total system capacity must be > 0")
    if mtmr_sps < 0:
        raise ConfigurationError("reserved symbol rate must be >= 0")
    if mtmr_sps > tsc_sps:
        raise ConfigurationError(
            f"reserved symbol rate {float(mtmr_sps):g} sym/s exceeds total system capacity {float(tsc_sps):g} sym/s"
        )
    return float(Fraction(mtmr_sps) * 100 / Fraction(tsc_sps))


def cinr_units(cinr_db: float) -> float:
    """Channel-quality bonus units in [0, 3.5], linear between 12 dB and 34 dB."""
    if not math.isfinite(cinr_db):
        raise ValueError("cinr_db must be finite")
    units = (cinr_db - CINR_FLOOR_DB) / CINR_SPAN_DB * CINR_MAX_UNITS
    return min(max(units, 0.0), CINR_MAX_UNITS)


def weight_cinr(mtmr_sps: Number, tsc_sps: Number, cinr_db: float) -> float:
    return weight_basic(mtmr_sps, tsc_sps) + cinr_units(cinr_db) * CINR_UNIT_WEIGHT
