"""Cell-less transition logic.

The train's uplink radio reaches one trackside ONU most of the time and two
adjacent ONUs while it crosses a cell boundary. Upstream, an aggregation
switch learns the train's MAC address from whichever ONU port delivered the
last frame; downstream, it unicasts to that port or floods while the address
is unknown. An anti-spoofing whitelist limits which ports may take over a
binding.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

from .kernel import SECOND
from .pon import SPEED_OF_LIGHT, OnuNode

DEFAULT_AGING_TIME = 20 * SECOND
DEFAULT_OVERLAP = 500.0  # m, half-width of the two-ONU zone around a cell boundary


class CoverageGapError(RuntimeError):
    """No trackside unit reaches the train."""


class WhitelistMode(Enum):
    STRICT_ANTISPOOFING = "strict_antispoofing"
    WINDOW3 = "window3"


@dataclass(frozen=True)
class RelearnTrigger:
    """When a switch commits a MAC move to a newly seen port.

    ``delay == 0`` moves on the first uplink frame from the new port; a
    positive delay holds the old binding until frames from the new port have
    been arriving for that long.
    """

    delay: int = 0

    @property
    def on_first_uplink_frame(self) -> bool:
        return self.delay == 0

    def __str__(self) -> str:
        from .units import format_duration

        return "first_uplink_frame" if self.delay == 0 else f"fixed_delay({format_duration(self.delay)})"


@dataclass
class TrainState:
    position: float
    speed: float
    mac_address: int

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("train speed must be >= 0")

    def position_at(self, t: int, start_position: float | None = None) -> float:
        origin = self.position if start_position is None else start_position
        return origin + self.speed * t / SECOND


@dataclass(frozen=True)
class RadioAssociation:
    serving_onus: tuple[int, ...]
    cell_radius: float


def update_association(
    train: TrainState, onus: list[OnuNode], cell_radius: float, overlap: float = DEFAULT_OVERLAP
) -> RadioAssociation:
    """ONU(s) receiving the train's uplink at its current position.

    ``onus`` must be sorted by track position. Two adjacent ONUs serve when
    the train is within ``overlap`` of the midpoint between them.
    """
    positions = [o.track_position for o in onus]
    return RadioAssociation(_serving(positions, [o.id for o in onus], train.position, cell_radius, overlap), cell_radius)


def _serving(positions: list[float], ids: list[int], x: float, cell_radius: float, overlap: float) -> tuple[int, ...]:
    if not positions:
        raise CoverageGapError("no ONUs deployed")
    nearest = _nearest(positions, x)
    serving = [nearest]
    # the neighbour on the far side of the closest cell boundary
    other = nearest + 1 if x > positions[nearest] else nearest - 1
    if 0 <= other < len(positions):
        midpoint = (positions[nearest] + positions[other]) / 2
        if abs(x - midpoint) <= overlap:
            serving.append(other)
    serving = [i for i in sorted(serving) if abs(positions[i] - x) <= cell_radius]
    if not serving:
        raise CoverageGapError(f"no ONU within {cell_radius:g} m of position {x:g} m")
    return tuple(ids[i] for i in serving)


def _nearest(positions: list[float], x: float) -> int:
    k = bisect.bisect_left(positions, x)
    if k == 0:
        return 0
    if k == len(positions):
        return k - 1
    return k - 1 if x - positions[k - 1] <= positions[k] - x else k


class AssociationTimeline:
    """Serving set and nearest ONU of a train moving at constant speed.

    Both are piecewise constant in time; the breakpoints are found once up
    front so later lookups are a bisect.
    """

    def __init__(self, train: TrainState, onus: list[OnuNode], cell_radius: float, overlap: float, end_time: int):
        self.onus = sorted(onus, key=lambda o: o.track_position)
        positions = [o.track_position for o in self.onus]
        ids = [o.id for o in self.onus]
        self.train = train
        marks: set[float] = set()
        for a, b in zip(positions, positions[1:]):
            mid = (a + b) / 2
            marks.update((mid - overlap, mid + overlap, mid))
        for p in positions:
            marks.update((p - cell_radius, p + cell_radius))
        times = {0}
        if train.speed > 0:
            for m in marks:
                t = int((m - train.position) / train.speed * SECOND)
                # the crossing lies within a nanosecond of t; sampling both
                # sides pins the change to the exact ns
                for cand in range(t - 1, t + 3):
                    if 0 < cand < end_time:
                        times.add(cand)
        self.times: list[int] = []
        self.sets: list[tuple[int, ...]] = []
        self.nearest: list[int] = []
        for t in sorted(times):
            x = train.position_at(t)
            try:
                s = _serving(positions, ids, x, cell_radius, overlap)
            except CoverageGapError:
                s = ()
            near = ids[_nearest(positions, x)]
            if not self.sets or self.sets[-1] != s or self.nearest[-1] != near:
                self.times.append(t)
                self.sets.append(s)
                self.nearest.append(near)
        self._cached: tuple[int, int | None, tuple[int, ...]] = (1, 0, ())  # matches nothing

    def at(self, t: int) -> tuple[int, ...]:
        return self.segment(t)[2]

    def segment(self, t: int) -> tuple[int, int | None, tuple[int, ...]]:
        """(start, end or None, serving set) of the constant stretch containing ``t``."""
        cached = self._cached
        if cached[0] <= t and (cached[1] is None or t < cached[1]):
            return cached
        k = bisect.bisect_right(self.times, t) - 1
        if k < 0:
            raise ValueError(f"time {t} precedes the timeline")
        end = self.times[k + 1] if k + 1 < len(self.times) else None
        self._cached = (self.times[k], end, self.sets[k])
        return self._cached

    def nearest_at(self, t: int) -> int:
        return self.nearest[bisect.bisect_right(self.times, t) - 1]

    def changes(self) -> list[tuple[int, tuple[int, ...], int]]:
        return list(zip(self.times, self.sets, self.nearest))

    def gap_time(self, end_time: int) -> int:
        """Total ns before ``end_time`` with nobody serving the train."""
        total = 0
        bounds = self.times[1:] + [end_time]
        for t0, t1, s in zip(self.times, bounds, self.sets):
            if not s and t0 < end_time:
                total += min(t1, end_time) - t0
        return total


@dataclass
class WhitelistPolicy:
    mode: WhitelistMode = WhitelistMode.WINDOW3
    window: tuple[int, ...] = ()

    def allows(self, port: int) -> bool:
        return port in self.window

    def slide(self, track_order: list[int], current: int) -> tuple[int, ...]:
        """Re-centre the window on ``current``; two ONUs at the track ends."""
        i = track_order.index(current)
        self.window = tuple(track_order[max(0, i - 1): i + 2])
        return self.window


@dataclass
class MacEntry:
    port: int
    last_seen: int
    previous_port: int | None = None
    pending_port: int | None = None
    pending_since: int = 0


@dataclass
class MacTable:
    aging_time: int = DEFAULT_AGING_TIME
    entries: dict[int, MacEntry] = field(default_factory=dict)
    violations: int = 0
    moves: list[tuple[int, int, int, int]] = field(default_factory=list)  # (time, mac, from, to)

    def lookup(self, mac: int) -> int | None:
        entry = self.entries.get(mac)
        return None if entry is None else entry.port

    def next_expiry(self) -> int | None:
        if not self.entries:
            return None
        return min(e.last_seen for e in self.entries.values()) + self.aging_time


def learn(
    table: MacTable,
    mac: int,
    onu_id: int,
    now: int,
    policy: WhitelistPolicy | None = None,
    trigger: RelearnTrigger = RelearnTrigger(),
    frames: int = 1,
) -> bool:
    """Process upstream frames from one source address; False means they are dropped.

    ``frames`` counts back-to-back frames from the same port at the same
    instant, which all share one outcome.

    In window3 mode a move is allowed between whitelisted ports. Frames from
    the port the binding just left are still accepted (both ONUs carry the
    uplink during a transition) but do not pull the binding back. In strict
    mode any move is a spoofing violation until the old entry ages out.
    """
    policy = policy or WhitelistPolicy()
    entry = table.entries.get(mac)
    if entry is None:
        if policy.mode is WhitelistMode.WINDOW3 and policy.window and not policy.allows(onu_id):
            table.violations += frames
            return False
        table.entries[mac] = MacEntry(onu_id, now)
        return True
    if entry.port == onu_id:
        entry.last_seen = now
        return True
    if policy.mode is WhitelistMode.STRICT_ANTISPOOFING or not policy.allows(onu_id):
        table.violations += frames
        return False
    if onu_id == entry.previous_port:
        return True
    if entry.pending_port != onu_id:
        entry.pending_port = onu_id
        entry.pending_since = now
    if now - entry.pending_since >= trigger.delay:
        table.moves.append((now, mac, entry.port, onu_id))
        entry.previous_port = entry.port
        entry.port = onu_id
        entry.last_seen = now
        entry.pending_port = None
    return True


def age_scan(table: MacTable, now: int) -> list[int]:
    """Remove entries idle for at least the aging time; returns their MACs."""
    expired = [mac for mac, e in table.entries.items() if now - e.last_seen >= table.aging_time]
    for mac in expired:
        del table.entries[mac]
    return expired


def forward_downstream(table: MacTable, mac: int, flood_set) -> tuple[int, ...]:
    port = table.lookup(mac)
    if port is not None:
        return (port,)
    return tuple(sorted(flood_set))


def doppler_shift(speed: float, carrier: float, angle_cos: float = 1.0) -> float:
    """Frequency offset seen by a receiver moving at ``speed`` relative to the source."""
    if carrier <= 0:
        raise ValueError("carrier must be positive")
    if not -1.0 <= angle_cos <= 1.0:
        raise ValueError("angle_cos must lie in [-1, 1]")
    return speed * carrier * angle_cos / SPEED_OF_LIGHT
