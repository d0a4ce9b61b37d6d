"""Discrete-event engine: integer-nanosecond clock, event queue, run loop.

All timestamps are plain ``int`` nanoseconds since scenario start. A 125 us
PON frame is 125_000 ns exactly, so no drift accumulates over long runs.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, NamedTuple

NS = 1
US = 1_000
MS = 1_000_000
SECOND = 1_000_000_000

DEFAULT_FRAME_PERIOD = 125 * US


class SchedulingError(RuntimeError):
    """An event was scheduled before the current clock."""


class EventKind(Enum):
    FRAME_TICK = "frame-tick"
    MAC_AGE_SCAN = "mac-age-scan"
    TRAIN_MOVE = "train-move"
    SCENARIO_END = "scenario-end"


class Event(NamedTuple):
    """A scheduled occurrence; ``(at, seq)`` is unique per queue and orders events."""

    at: int
    seq: int
    kind: EventKind
    payload: Any = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    end_time: int = SECOND
    frame_period: int = DEFAULT_FRAME_PERIOD

    def __post_init__(self):
        if self.frame_period <= 0:
            raise ValueError("frame_period must be positive")
        if self.end_time <= 0:
            raise ValueError("end_time must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def frame_count(self) -> int:
        return self.end_time // self.frame_period


class EventQueue:
    """Min-heap of events keyed on (at, seq).

    ``seq`` comes from a single per-queue counter, so events sharing a
    timestamp come out in the order they were scheduled.
    """

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, at: int, kind: EventKind, payload: Any = None) -> Event:
        if at < self.now:
            raise SchedulingError(
                f"cannot schedule {kind.value} at {at} ns; clock is at {self.now} ns"
            )
        event = Event(at, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def peek(self) -> Event | None:
        return self._heap[0] if self._heap else None

    def next_event(self) -> Event | None:
        if not self._heap:
            return None
        event = heapq.heappop(self._heap)
        self.now = event.at
        return event


Handler = Callable[[Event], None]


class Kernel:
    """Single-threaded run loop dispatching events to per-kind handlers.

    The loop stops after a SCENARIO_END event has been handled or when
    nothing is left to do, whichever comes first.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.queue = EventQueue()
        self.handlers: dict[EventKind, Handler] = {}
        self.processed = 0
        self.last_time = 0
        self._stopped = False
        self._timer: tuple[int, int, EventKind] | None = None

    @property
    def now(self) -> int:
        return self.queue.now

    def on(self, kind: EventKind, handler: Handler) -> None:
        self.handlers[kind] = handler

    def schedule(self, at: int, kind: EventKind, payload: Any = None) -> Event:
        return self.queue.schedule(at, kind, payload)

    def every(self, period: int, kind: EventKind, start: int = 0) -> None:
        """Fire ``kind`` at ``start``, ``start + period``, ... without queueing each one.

        A periodic event runs after every queued event sharing its timestamp.
        Its ``seq`` is -1 and its payload is the occurrence count.
        """
        if period <= 0:
            raise ValueError("period must be positive")
        if start < self.now:
            raise SchedulingError(f"cannot start a timer at {start} ns; clock is at {self.now} ns")
        self._timer = (start, period, kind)

    def stop(self) -> None:
        self._stopped = True

    def run(self) -> int:
        """Process events until stopped; returns the number handled."""
        queue = self.queue
        heap = queue._heap
        handlers = self.handlers
        tick_at, period, tick_kind = self._timer or (None, 0, None)
        tick_handler = handlers.get(tick_kind) if tick_kind else None
        count = 0
        while not self._stopped:
            if tick_at is not None and (not heap or tick_at < heap[0].at):
                queue.now = self.last_time = tick_at
                if tick_handler is not None:
                    tick_handler(Event(tick_at, -1, tick_kind, count))
                count += 1
                self.processed += 1
                tick_at += period
                continue
            event = queue.next_event()
            if event is None:
                break
            # heap order guarantees this; kept as a cheap tripwire
            if event.at < self.last_time:
                raise SchedulingError("clock went backwards")
            self.last_time = event.at
            handler = handlers.get(event.kind)
            if handler is not None:
                handler(event)
            self.processed += 1
            if event.kind is EventKind.SCENARIO_END:
                break
        if self._timer is not None:
            self._timer = (tick_at, period, tick_kind)
        return self.processed
