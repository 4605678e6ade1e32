"""Deterministic discrete-event kernel and the pseudo-random sources.

Time is kept in integer nanoseconds.  Events that fire at the same instant
are ordered by a global, monotonically increasing sequence number so that a
run is fully reproducible from its configuration and seed.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional


class EventKind(str, Enum):
    REQUEST_ARRIVAL = "request-arrival"
    FLASH_OP_COMPLETE = "flash-op-complete"
    TRANSFER_COMPLETE = "transfer-complete"
    SCOUT_STEP = "scout-step"
    CONTROLLER_IDLE = "controller-idle"
    GC_TRIGGER = "gc-trigger"


class SchedulingError(RuntimeError):
    """An event was scheduled in the past."""


@dataclass(order=True)
class SimEvent:
    fire_time: int
    sequence: int = 0
    kind: EventKind = field(default=EventKind.REQUEST_ARRIVAL, compare=False)
    payload: Any = field(default=None, compare=False)
    action: Optional[Callable[[], None]] = field(default=None, compare=False, repr=False)
    cancelled: bool = field(default=False, compare=False, repr=False)


@dataclass
class SimClock:
    now: int = 0

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise SchedulingError(f"clock would move backwards: {t} < {self.now}")
        self.now = t


class EventQueue:
    """Min-heap of events keyed on ``(fire_time, sequence)``."""

    def __init__(self) -> None:
        self.clock = SimClock()
        self._heap: list[SimEvent] = []
        self._seq = 0
        self.processed = 0

    def __len__(self) -> int:
        return len(self._heap)

    @property
    def now(self) -> int:
        return self.clock.now

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.fire_time < self.clock.now:
            raise SchedulingError(
                f"event {event.kind.value} at t={event.fire_time} is before now={self.clock.now}"
            )
        event.sequence = self._seq
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def at(self, t: int, kind: EventKind, action: Callable[[], None], payload: Any = None) -> SimEvent:
        return self.schedule(SimEvent(int(t), kind=kind, payload=payload, action=action))

    def after(self, delay: int, kind: EventKind, action: Callable[[], None], payload: Any = None) -> SimEvent:
        return self.at(self.clock.now + int(delay), kind, action, payload)

    def advance(self) -> Optional[SimEvent]:
        """Pop the next live event and move the clock to it; ``None`` when drained."""
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.clock.advance_to(ev.fire_time)
            self.processed += 1
            return ev
        return None

    def run(self, until: Optional[int] = None) -> int:
        while self._heap:
            if until is not None and self._heap[0].fire_time > until:
                break
            ev = self.advance()
            if ev is None:
                break
            if ev.action is not None:
                ev.action()
        return self.clock.now


class Lfsr2:
    """Two-bit Fibonacci LFSR with feedback polynomial x^2 + x + 1.

    The successor cycles 1 -> 3 -> 2 -> 1; state 0 is unreachable.
    """

    __slots__ = ("state",)

    def __init__(self, state: int = 1) -> None:
        if state not in (1, 2, 3):
            raise ValueError(f"LFSR state must be 1, 2 or 3, got {state}")
        self.state = state

    @classmethod
    def seeded(cls, seed: int, router_id: int) -> "Lfsr2":
        return cls(((seed ^ router_id) % 3) + 1)

    def step(self) -> int:
        s = self.state
        feedback = ((s >> 1) ^ s) & 1
        self.state = ((s << 1) | feedback) & 0b11
        return self.state


def lfsr_pick(lfsr: Lfsr2, n_choices: int) -> int:
    if not 2 <= n_choices <= 4:
        raise ValueError(f"n_choices must be in 2..4, got {n_choices}")
    return (lfsr.step() - 1) % n_choices
