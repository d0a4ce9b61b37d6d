"""Constant-bit-rate datagram streams."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterator


class Direction(Enum):
    DOWNSTREAM = "downstream"
    UPSTREAM = "upstream"


@dataclass(frozen=True)
class FlowSpec:
    name: str
    direction: Direction
    packet_bytes: int
    rate: int  # bit/s
    jitter: float = 0.0  # fraction of the nominal gap, uniform +/-
    tcont: str | None = None
    start: int = 0  # ns

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.packet_bytes < 64:
            out.append(f"flow {self.name}: packet size must be >= 64 bytes")
        if self.rate <= 0:
            out.append(f"flow {self.name}: rate must be positive")
        # beyond half a gap, jittered packets could overtake each other
        if not 0.0 <= self.jitter < 0.5:
            out.append(f"flow {self.name}: jitter must be in [0, 0.5)")
        if self.direction is Direction.UPSTREAM and not self.tcont:
            out.append(f"flow {self.name}: upstream flows need a tcont")
        if self.start < 0:
            out.append(f"flow {self.name}: start must be >= 0")
        return out

    @property
    def gap_ns(self) -> float:
        return self.packet_bytes * 8 * 1e9 / self.rate

    def nominal_arrival(self, seq: int) -> int:
        # exact integer arithmetic, no drift over long runs
        return self.start + seq * self.packet_bytes * 8 * 10**9 // self.rate


class PacketSource:
    """Arrival times of one flow, handed out in time windows.

    Randomness (the jitter) comes from a generator seeded with the run seed
    and the flow's position in the scenario, so every flow is reproducible on
    its own.
    """

    def __init__(self, flow: FlowSpec, seed: int, index: int = 0):
        self.flow = flow
        self.rng = random.Random(f"{seed}:{index}:{flow.name}")
        self.next_seq = 0
        self._last = flow.start
        self._next_time = self._arrival(0)

    def _arrival(self, seq: int) -> int:
        t = self.flow.nominal_arrival(seq)
        if self.flow.jitter:
            half = self.flow.jitter * self.flow.gap_ns
            t += round(self.rng.uniform(-half, half))
            # rounding can tie or invert neighbours by a nanosecond
            t = max(t, self._last)
        self._last = t
        return t

    def take_until(self, t_end: int) -> tuple[int, list[int]]:
        """Packets arriving strictly before ``t_end``: (first seq, arrival times)."""
        first = self.next_seq
        if self._next_time >= t_end:
            return first, []
        flow = self.flow
        if not flow.jitter:
            # nominal arrival of seq s is start + floor(s * B / rate) with B in bit-ns
            b = flow.packet_bytes * 8 * 10**9
            start, rate = flow.start, flow.rate
            stop = -(-(t_end - start) * rate // b)
            times = [start + s * b // rate for s in range(first, stop)]
            self.next_seq = stop
            self._next_time = self._last = start + stop * b // rate
            return first, times
        times = []
        t = self._next_time
        while t < t_end:
            times.append(t)
            self.next_seq += 1
            t = self._arrival(self.next_seq)
        self._next_time = t
        return first, times


def generate(flow: FlowSpec, seed: int, until: int, index: int = 0) -> Iterator[int]:
    """Arrival times (ns) of ``flow`` before ``until``."""
    source = PacketSource(flow, seed, index)
    _, times = source.take_until(until)
    yield from times
