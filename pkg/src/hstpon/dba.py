"""Upstream dynamic bandwidth allocation over T-CONT profiles.

Each frame is filled in three passes: fixed bandwidth (granted whether or not
anything is queued), assured bandwidth up to the queued demand, then the
remaining capacity shared out, weighted by each T-CONT's non-assured
headroom, up to its maximum bandwidth.

Per-frame byte quotas come from the cumulative entitlement
``ceil((n + 1) * q) - ceil(n * q)`` with ``q = bw * frame_period / 8``, so a
150 Mb/s fixed allocation alternates 2344/2344/2344/2343 bytes and averages
2343.75 exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .kernel import DEFAULT_FRAME_PERIOD
from .pon import OltState, burst_duration

_BITS_NS = 8 * 10**9  # bits per byte * ns per second


class DbaConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TContProfile:
    alloc_id: int
    tcont_type: int
    fixed_bw: int = 0
    assured_bw: int = 0
    max_bw: int = 0
    owner_onu: int = 0
    name: str = ""

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise DbaConfigError("; ".join(errors))

    def problems(self) -> list[str]:
        label = self.name or f"alloc {self.alloc_id}"
        out = []
        if self.tcont_type not in (1, 2, 3, 4):
            out.append(f"{label}: T-CONT type must be 1-4, got {self.tcont_type}")
        if min(self.fixed_bw, self.assured_bw, self.max_bw) < 0:
            out.append(f"{label}: bandwidths must be >= 0")
        if not self.fixed_bw <= self.assured_bw <= self.max_bw:
            out.append(f"{label}: need fixed <= assured <= max bandwidth")
        if self.tcont_type == 1 and not self.fixed_bw == self.assured_bw == self.max_bw:
            out.append(f"{label}: type 1 carries fixed bandwidth only")
        if self.tcont_type == 2 and self.fixed_bw <= 0:
            out.append(f"{label}: type 2 needs a positive fixed bandwidth")
        if self.tcont_type == 4 and (self.fixed_bw or self.assured_bw):
            out.append(f"{label}: type 4 is best effort (fixed = assured = 0)")
        return out


def frame_quota(bw: int, frame_index: int, frame_period: int = DEFAULT_FRAME_PERIOD) -> int:
    """Bytes of ``bw`` owed in frame ``frame_index`` (cumulative-ceil rounding)."""
    num = bw * frame_period
    return -(-(frame_index + 1) * num // _BITS_NS) + (-frame_index * num // _BITS_NS)


@dataclass(frozen=True)
class GrantEntry:
    alloc_id: int
    start_offset: int  # ns from the start of the upstream frame
    grant_bytes: int
    duration: int


@dataclass
class GrantTable:
    frame_index: int
    entries: list[GrantEntry] = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return sum(e.grant_bytes for e in self.entries)

    def by_alloc(self) -> dict[int, int]:
        return {e.alloc_id: e.grant_bytes for e in self.entries}


def fixed_capacity_problems(
    profiles: list[TContProfile], olt: OltState, frame_period: int = DEFAULT_FRAME_PERIOD
) -> list[str]:
    """Configuration check: can the fixed allocations always fit in a frame?"""
    fixed = [p for p in profiles if p.fixed_bw > 0]
    total_bw = sum(p.fixed_bw for p in fixed)
    if total_bw > olt.upstream_rate:
        return [
            f"dba: sum of fixed bandwidth {total_bw} bit/s exceeds upstream capacity "
            f"{olt.upstream_rate} bit/s"
        ]
    worst = sum(-(-p.fixed_bw * frame_period // _BITS_NS) for p in fixed)
    if worst * _BITS_NS > _budget_ns(len(fixed), olt, frame_period) * olt.upstream_rate:
        return [
            f"dba: fixed allocations ({worst} B/frame) leave no room for burst guard times"
        ]
    return []


def _budget_ns(entries: int, olt: OltState, frame_period: int) -> int:
    # +1 ns per burst absorbs the ceil() on each burst duration
    return frame_period - entries * (olt.guard_time + 1)


def grant_frame(
    profiles: list[TContProfile],
    demands: list[int],
    olt: OltState,
    frame_index: int = 0,
    frame_period: int = DEFAULT_FRAME_PERIOD,
) -> GrantTable:
    """Compute the upstream grant table for one frame.

    ``demands[i]`` is the number of bytes queued on ``profiles[i]``.
    """
    return DbaScheduler(profiles, olt, frame_period).grant_table(demands, frame_index)


class DbaScheduler:
    """Per-frame grant computation for a fixed set of T-CONT profiles.

    Holds what does not change between frames (sort order, quota numerators)
    and memoizes burst layouts, so a run can call it every frame cheaply.
    """

    _PERIOD_CACHE_LIMIT = 4096

    def __init__(self, profiles: list[TContProfile], olt: OltState, frame_period: int = DEFAULT_FRAME_PERIOD):
        self.profiles = list(profiles)
        self.olt = olt
        self.frame_period = frame_period
        self.rate = olt.upstream_rate
        self.guard = olt.guard_time
        n = len(self.profiles)
        self.order = sorted(range(n), key=lambda i: self.profiles[i].alloc_id)
        self._fixed = [p.fixed_bw * frame_period for p in self.profiles]
        self._assured = [p.assured_bw * frame_period for p in self.profiles]
        self._max = [p.max_bw * frame_period for p in self.profiles]
        self._weight = [max(p.max_bw - p.assured_bw, 1) for p in self.profiles]
        self._wants_assured = [p.assured_bw > p.fixed_bw for p in self.profiles]
        self._wants_shared = [p.max_bw > p.assured_bw for p in self.profiles]
        # with fixed bandwidth only, grants ignore demand and repeat with the quota period
        self._fixed_only = not any(self._wants_assured) and not any(self._wants_shared)
        period = 1
        for num in self._fixed:
            if num:
                q = _BITS_NS // math.gcd(num, _BITS_NS)
                period = period * q // math.gcd(period, q)
        self._period = period if period <= self._PERIOD_CACHE_LIMIT else 0
        self._by_phase: dict[int, list[tuple[int, int, int, int]]] = {}
        self._layouts: dict[tuple[int, ...], list[tuple[int, int, int, int]]] = {}
        self._capacity = [
            _budget_ns(k, olt, frame_period) * self.rate // _BITS_NS for k in range(n + 1)
        ]

    @property
    def fixed_only(self) -> bool:
        """True when grants never depend on demand."""
        return self._fixed_only

    def grant(self, demands: list[int] | None, frame_index: int) -> list[tuple[int, int, int, int]]:
        """Entries as ``(profile index, start offset ns, bytes, duration ns)`` in alloc-id order.

        ``demands`` may be None for a fixed-only profile set.
        """
        if self._fixed_only and self._period:
            phase = frame_index % self._period
            entries = self._by_phase.get(phase)
            if entries is None:
                entries = self._layout(self._grants(demands, frame_index))
                self._by_phase[phase] = entries
            return entries
        return self._layout(self._grants(demands, frame_index))

    def grant_table(self, demands: list[int], frame_index: int) -> GrantTable:
        if len(demands) != len(self.profiles):
            raise ValueError("one demand per profile")
        table = GrantTable(frame_index)
        for i, offset, nbytes, dur in self.grant(demands, frame_index):
            table.entries.append(GrantEntry(self.profiles[i].alloc_id, offset, nbytes, dur))
        return table

    @staticmethod
    def _quota(num: int, frame_index: int) -> int:
        return -(-(frame_index + 1) * num // _BITS_NS) + (-frame_index * num // _BITS_NS)

    def _grants(self, demands: list[int], frame_index: int) -> list[int]:
        n = len(self.profiles)
        if n == 0:
            return []
        cap = self._capacity
        quota = self._quota
        grants = [0] * n
        has_entry = [False] * n
        entries = 0
        used = 0
        fixed_q = [quota(num, frame_index) if num else 0 for num in self._fixed]
        for i in range(n):
            if fixed_q[i] > 0:
                grants[i] = fixed_q[i]
                has_entry[i] = True
                entries += 1
                used += fixed_q[i]
        if cap[entries] - used < 0:
            raise DbaConfigError("fixed allocations exceed the frame capacity")
        if self._fixed_only:
            return grants

        start = frame_index % n
        rr = self.order[start:] + self.order[:start]

        # assured pass
        for i in rr:
            if not self._wants_assured[i]:
                continue
            want = min(demands[i] - grants[i], quota(self._assured[i], frame_index) - fixed_q[i])
            if want <= 0:
                continue
            if not has_entry[i]:
                if cap[entries + 1] - used <= 0:
                    continue
                entries += 1
                has_entry[i] = True
            give = min(want, cap[entries] - used)
            grants[i] += give
            used += give

        # shared pass: weighted water-filling up to max bandwidth
        need = [0] * n
        for i in range(n):
            if self._wants_shared[i]:
                room = quota(self._max[i], frame_index) - grants[i]
                need[i] = max(0, min(demands[i] - grants[i], room))
        while True:
            for i in rr:
                if need[i] > 0 and not has_entry[i]:
                    if cap[entries + 1] - used <= 0:
                        need[i] = 0
                        continue
                    entries += 1
                    has_entry[i] = True
            active = [i for i in rr if need[i] > 0]
            free = cap[entries] - used
            if not active or free <= 0:
                break
            used += _water_fill(active, need, self._weight, grants, free)
            # entries that ended up empty give their guard time back
            released = False
            for i in rr:
                if has_entry[i] and grants[i] == 0:
                    has_entry[i] = False
                    entries -= 1
                    need[i] = 0
                    released = True
            if not released:
                break
        return grants

    def _layout(self, grants: list[int]) -> list[tuple[int, int, int, int]]:
        key = tuple(grants)
        entries = self._layouts.get(key)
        if entries is None:
            entries = []
            offset = 0
            for i in self.order:
                if grants[i] > 0:
                    dur = burst_duration(grants[i], self.rate)
                    entries.append((i, offset, grants[i], dur))
                    offset += dur + self.guard
            if len(self._layouts) < 65536:
                self._layouts[key] = entries
        return entries


def _water_fill(active: list[int], need: list[int], weight: list[int], grants: list[int], budget: int) -> int:
    """Share ``budget`` bytes over ``active`` in proportion to ``weight``, capped by ``need``.

    Integer remainders go one byte at a time in ``active`` order, which the
    caller rotates each frame.
    """
    start_budget = budget
    pool = list(active)
    while pool and budget > 0:
        total_w = sum(weight[i] for i in pool)
        shares = {i: budget * weight[i] // total_w for i in pool}
        saturated = [i for i in pool if shares[i] >= need[i]]
        if saturated:
            for i in saturated:
                grants[i] += need[i]
                budget -= need[i]
                need[i] = 0
            pool = [i for i in pool if need[i] > 0]
            continue
        for i in pool:
            grants[i] += shares[i]
            need[i] -= shares[i]
            budget -= shares[i]
        for i in pool:
            if budget == 0:
                break
            if need[i] > 0:
                grants[i] += 1
                need[i] -= 1
                budget -= 1
        break
    return start_budget - budget


class TContQueue:
    """FIFO of queued upstream packets for one T-CONT instance.

    Consecutive packets of one flow are kept as a single run
    ``[flow_index, first_seq, count, packet_bytes, head_remaining]``; the
    head packet may be partially sent, since grants fragment packets freely.
    """

    def __init__(self, profile: TContProfile, cap_packets: int | None = None):
        self.profile = profile
        self.cap_packets = cap_packets
        self.runs: deque[list[int]] = deque()
        self.packets = 0
        self.demand = 0
        self.drops = 0

    def __len__(self) -> int:
        return self.packets

    def room(self) -> int | None:
        """Packets that can still be queued, or None when unbounded."""
        if self.cap_packets is None:
            return None
        return max(0, self.cap_packets - self.packets)

    def enqueue(self, packet_bytes: int, flow: int = 0, seq: int = 0) -> bool:
        """Queue a packet; returns False (and counts a drop) when the cap is hit."""
        return self.enqueue_run(packet_bytes, flow, seq, 1) == 1

    def enqueue_run(self, packet_bytes: int, flow: int, first: int, count: int) -> int:
        """Queue packets ``first .. first+count-1``; returns how many fit under the cap."""
        if packet_bytes <= 0:
            raise ValueError("packet size must be positive")
        room = self.room()
        accepted = count if room is None else min(count, room)
        self.drops += count - accepted
        if accepted <= 0:
            return 0
        runs = self.runs
        tail = runs[-1] if runs else None
        if tail is not None and tail[0] == flow and tail[3] == packet_bytes and tail[1] + tail[2] == first:
            tail[2] += accepted
        else:
            runs.append([flow, first, accepted, packet_bytes, packet_bytes])
        self.packets += accepted
        self.demand += accepted * packet_bytes
        return accepted

    def transmit(self, nbytes: int) -> tuple[list[tuple[int, int, int]], int]:
        """Send up to ``nbytes``; returns completed runs ``(flow, first_seq, count)`` and bytes used."""
        done = []
        left = nbytes
        runs = self.runs
        while runs and left > 0:
            run = runs[0]
            flow, first, count, size, head = run
            if left < head:
                run[4] = head - left
                left = 0
                break
            # the head completes, then as many whole packets as fit
            k = 1 + min(count - 1, (left - head) // size)
            left -= head + (k - 1) * size
            done.append((flow, first, k))
            if k == count:
                runs.popleft()
                continue
            run[1] = first + k
            run[2] = count - k
            if left > 0:
                run[4] = size - left
                left = 0
            else:
                run[4] = size
        used = nbytes - left
        self.demand -= used
        self.packets -= sum(d[2] for d in done)
        return done, used


def enqueue_upstream(queue: TContQueue, packet_bytes: int, flow: int = 0, seq: int = 0) -> bool:
    return queue.enqueue(packet_bytes, flow, seq)
