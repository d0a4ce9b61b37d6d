"""XGS-PON tree: OLT, logical splitter and ONUs with fiber delays and ranging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

SPEED_OF_LIGHT = 299_792_458  # m/s
XGS_LINE_RATE = 9_953_280_000  # bit/s, both directions
DEFAULT_GROUP_INDEX = 1.468
DEFAULT_MAX_FIBER = 40_000.0  # m
GUARD_BITS = 256


class RangingError(ValueError):
    """ONU sits beyond the ranging window."""


class UnrangedOnuError(RuntimeError):
    pass


class AdminState(Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def propagation_delay(fiber_length: float, group_index: float = DEFAULT_GROUP_INDEX) -> int:
    """One-way fiber delay in integer ns (round half up)."""
    if fiber_length < 0:
        raise ValueError("fiber_length must be >= 0")
    if group_index < 1:
        raise ValueError("group_index must be >= 1")
    exact = Fraction(fiber_length) * Fraction(group_index) * 10**9 / SPEED_OF_LIGHT
    return _round_half_up(exact)


def burst_duration(nbytes: int, rate: int) -> int:
    """Transmission time of ``nbytes`` at ``rate`` bit/s, rounded up to whole ns."""
    return -(-nbytes * 8 * 10**9 // rate)


def default_guard_time(rate: int = XGS_LINE_RATE) -> int:
    return -(-GUARD_BITS * 10**9 // rate)


@dataclass
class OnuNode:
    id: int
    track_position: float
    fiber_length: float
    eq_delay: int | None = None
    admin_state: AdminState = AdminState.ACTIVE
    prop_delay: int = 0  # filled in by OltState.add

    def __post_init__(self):
        if self.fiber_length < 0:
            raise ValueError(f"ONU {self.id}: fiber_length must be >= 0")

    @property
    def ranged(self) -> bool:
        return self.eq_delay is not None

    @property
    def active(self) -> bool:
        return self.admin_state is AdminState.ACTIVE


@dataclass
class BurstRecord:
    onu_id: int
    start: int
    duration: int
    bytes_carried: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass
class OltState:
    downstream_rate: int = XGS_LINE_RATE
    upstream_rate: int = XGS_LINE_RATE
    guard_time: int = field(default_factory=default_guard_time)
    group_index: float = DEFAULT_GROUP_INDEX
    max_fiber_length: float = DEFAULT_MAX_FIBER
    onus: dict[int, OnuNode] = field(default_factory=dict)

    def __post_init__(self):
        if self.downstream_rate <= 0 or self.upstream_rate <= 0:
            raise ValueError("line rates must be positive")
        if self.guard_time < 0:
            raise ValueError("guard_time must be >= 0")

    def add(self, onu: OnuNode) -> OnuNode:
        if onu.id in self.onus:
            raise ValueError(f"duplicate ONU id {onu.id}")
        onu.prop_delay = propagation_delay(onu.fiber_length, self.group_index)
        self.onus[onu.id] = onu
        return onu

    @property
    def equalized_round_trip(self) -> int:
        return 2 * propagation_delay(self.max_fiber_length, self.group_index)

    def active_onus(self) -> list[OnuNode]:
        return [o for o in self.onus.values() if o.active]

    def range_all(self) -> None:
        for onu in self.onus.values():
            range_onu(self, onu, self.max_fiber_length)

    def downstream_arrivals(self, sent_at: int) -> dict[int, int]:
        """Broadcast: when a downstream frame sent at ``sent_at`` reaches each active ONU."""
        return {o.id: sent_at + o.prop_delay for o in self.onus.values() if o.active}


def range_onu(olt: OltState, onu: OnuNode, max_fiber_length: float) -> int:
    """Assign and return the equalization delay that pads ``onu`` out to the farthest reach."""
    if onu.fiber_length > max_fiber_length:
        raise RangingError(
            f"ONU {onu.id} at {onu.fiber_length:g} m exceeds ranging window {max_fiber_length:g} m"
        )
    far = propagation_delay(max_fiber_length, olt.group_index)
    near = propagation_delay(onu.fiber_length, olt.group_index)
    onu.eq_delay = 2 * far - 2 * near
    return onu.eq_delay


def round_trip(onu: OnuNode, olt: OltState) -> int:
    return 2 * propagation_delay(onu.fiber_length, olt.group_index)


def upstream_burst_arrival(
    onu: OnuNode,
    grant_start: int,
    grant_bytes: int,
    olt: OltState,
    bytes_carried: int | None = None,
) -> BurstRecord:
    """OLT-side record of the burst an ONU sends for a grant.

    ``grant_start`` is the slot start on the ONU's zero-distance timeline; the
    burst reaches the OLT after the equalization delay plus the fiber round
    trip, which is the same constant for every ranged ONU.
    """
    if onu.eq_delay is None:
        raise UnrangedOnuError(f"ONU {onu.id} has not been ranged")
    if grant_bytes <= 0:
        raise ValueError("grant_bytes must be positive")
    start = grant_start + onu.eq_delay + 2 * onu.prop_delay
    carried = grant_bytes if bytes_carried is None else bytes_carried
    return BurstRecord(onu.id, start, burst_duration(grant_bytes, olt.upstream_rate), carried)


def overlapping_bursts(records: list[BurstRecord], guard_time: int) -> list[tuple[BurstRecord, BurstRecord]]:
    """Pairs of consecutive bursts (by start) closer than ``guard_time``."""
    ordered = sorted(records, key=lambda r: (r.start, r.onu_id))
    return [
        (a, b) for a, b in zip(ordered, ordered[1:]) if b.start < a.end + guard_time
    ]
