"""Run measurements: per-flow counters, throughput series, interruptions, burst trace.

Packet outcomes are logged as (time, delivered|dropped) events. An
interruption is a maximal stretch that starts when a packet of the flow is
lost and ends when the next packet of that flow is delivered (or the run
ends); stretches no longer than the gap threshold are ignored.
"""

from __future__ import annotations

import csv
import json
from array import array
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .pon import BurstRecord
from .traffic import FlowSpec

SCHEMA_VERSION = 1

PENDING, DELIVERED, DROPPED = 0, 1, 2
_FILL = {DELIVERED: b"\x01", DROPPED: b"\x02"}


class DropCause(Enum):
    ANTISPOOFING = "antispoofing"
    QUEUE_CAP = "queue_cap"
    COVERAGE_GAP = "coverage_gap"
    STALE_BINDING = "stale_binding"


class DoubleRecordError(RuntimeError):
    """A packet outcome was recorded twice."""


class FlowStats:
    def __init__(self, spec: FlowSpec, end_time: int, bucket: int):
        self.spec = spec
        self.sent = 0
        self.received = 0
        self.dropped = 0
        self.drops_by_cause = {c.value: 0 for c in DropCause}
        self.status = bytearray()
        self.series = [0] * -(-end_time // bucket)
        self.bucket = bucket
        self.bits = spec.packet_bytes * 8
        # 2*t for deliveries, 2*t + 1 for drops; sorts deliveries first on ties
        self.log = array("q")

    @property
    def in_flight(self) -> int:
        return self.sent - self.received - self.dropped

    def note_sent(self, count: int) -> int:
        first = self.sent
        self.sent += count
        self.status.extend(bytes(count))
        return first

    def _claim(self, first: int, count: int, state: int) -> None:
        end = first + count
        if first < 0 or end > self.sent:
            raise ValueError(f"flow {self.spec.name}: packet {end - 1} was never sent")
        status = self.status
        if count == 1:
            if status[first] != PENDING:
                raise DoubleRecordError(f"flow {self.spec.name}: packet {first} already has an outcome")
            status[first] = state
            return
        if status.count(PENDING, first, end) != count:
            raise DoubleRecordError(
                f"flow {self.spec.name}: packet outcome already recorded in seq {first}..{end - 1}"
            )
        status[first:end] = _FILL[state] * count

    def deliver(self, first: int, at: int, count: int = 1) -> None:
        """Mark packets ``first .. first+count-1`` delivered at ``at``."""
        self._claim(first, count, DELIVERED)
        self.received += count
        self.series[at // self.bucket] += count * self.bits
        self.log.append(2 * at)

    def deliver_each(self, first: int, ats: list[int]) -> None:
        """Mark consecutive packets from ``first`` delivered at the matching ``ats``."""
        n = len(ats)
        self._claim(first, n, DELIVERED)
        self.received += n
        series, bucket, bits = self.series, self.bucket, self.bits
        for at in ats:
            series[at // bucket] += bits
        self.log.extend([2 * at for at in ats])

    def drop_each(self, first: int, ats: list[int], cause: DropCause) -> None:
        n = len(ats)
        self._claim(first, n, DROPPED)
        self.dropped += n
        self.drops_by_cause[cause.value] += n
        self.log.extend([2 * at + 1 for at in ats])

    def drop(self, first: int, at: int, cause: DropCause, count: int = 1) -> None:
        self._claim(first, count, DROPPED)
        self.dropped += count
        self.drops_by_cause[cause.value] += count
        self.log.append(2 * at + 1)


@dataclass
class RunReport:
    scenario: str
    seed: int
    end_time: int
    frame_period: int
    bucket: int
    flows: dict[str, FlowStats] = field(default_factory=dict)
    frames_elapsed: int = 0
    bursts: list[BurstRecord] = field(default_factory=list)
    violations: dict[str, int] = field(default_factory=lambda: {"antispoofing": 0})
    rejected_frames: int = 0
    mac_moves: list[tuple[int, int, int]] = field(default_factory=list)
    associations: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)
    coverage_gap_time: int = 0
    gap_thresholds: dict[str, int] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def add_flow(self, spec: FlowSpec, gap_threshold: int | None = None) -> FlowStats:
        stats = FlowStats(spec, self.end_time, self.bucket)
        self.flows[spec.name] = stats
        self.gap_thresholds[spec.name] = (
            default_gap_threshold(spec) if gap_threshold is None else gap_threshold
        )
        return stats

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        flows = {}
        for name, st in self.flows.items():
            flows[name] = {
                "direction": st.spec.direction.value,
                "packet_bytes": st.spec.packet_bytes,
                "rate_bps": st.spec.rate,
                "sent": st.sent,
                "received": st.received,
                "dropped": st.dropped,
                "in_flight": st.in_flight,
                "drops_by_cause": dict(st.drops_by_cause),
                "loss_ratio": st.dropped / st.sent if st.sent else 0.0,
                "received_bits": st.received * st.spec.packet_bytes * 8,
                "gap_threshold_ns": self.gap_thresholds[name],
                "interruptions": [list(iv) for iv in interruption_intervals(self, name)],
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "end_time_ns": self.end_time,
            "frame_period_ns": self.frame_period,
            "frames_elapsed": self.frames_elapsed,
            "bucket_ns": self.bucket,
            "flows": flows,
            "violations": dict(self.violations),
            "switch": {
                "rejected_frames": self.rejected_frames,
                "mac_moves": [list(m) for m in self.mac_moves],
            },
            "associations": [[t, list(s)] for t, s in self.associations],
            "coverage_gap_ns": self.coverage_gap_time,
            "burst_trace": [
                [b.onu_id, b.start, b.duration, b.bytes_carried] for b in self.bursts
            ],
            **({"extras": self.extras} if self.extras else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def throughput_rows(self) -> list[tuple[int, int, str, int]]:
        rows = []
        for name in sorted(self.flows):
            for k, bits in enumerate(self.flows[name].series):
                rows.append((k, k * self.bucket, name, bits))
        return rows

    def write(self, output_dir: str | Path) -> list[Path]:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = out / "report.json"
        report.write_text(self.to_json())
        throughput = out / "throughput.csv"
        with throughput.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bucket_index", "bucket_start_ns", "flow", "bits"])
            w.writerows(self.throughput_rows())
        bursts = out / "bursts.csv"
        with bursts.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["onu_id", "start_ns", "duration_ns", "bytes_carried"])
            for b in self.bursts:
                w.writerow([b.onu_id, b.start, b.duration, b.bytes_carried])
        return [report, throughput, bursts]


def default_gap_threshold(flow: FlowSpec) -> int:
    return int(2 * flow.packet_bytes * 8 * 10**9 // flow.rate)


def record_delivery(report: RunReport, flow: str, first: int, at: int, count: int = 1) -> None:
    """Mark packets ``first .. first+count-1`` of ``flow`` delivered at ``at``."""
    if at >= report.end_time:
        raise ValueError("delivery after the end of the run")
    report.flows[flow].deliver(first, at, count)


def record_drop(report: RunReport, flow: str, first: int, at: int, cause: DropCause, count: int = 1) -> None:
    report.flows[flow].drop(first, at, cause, count)
    if cause is DropCause.ANTISPOOFING:
        report.violations["antispoofing"] += count


def outage_spans(report: RunReport, flow: str) -> list[tuple[int, int]]:
    """All loss-to-recovery spans of ``flow``, unfiltered."""
    st = report.flows[flow]
    spans = []
    open_at = None
    for code in sorted(st.log):
        t, dropped = code >> 1, code & 1
        if dropped:
            if open_at is None:
                open_at = t
        elif open_at is not None:
            spans.append((open_at, t))
            open_at = None
    if open_at is not None:
        spans.append((open_at, report.end_time))
    return spans


def interruption_intervals(report: RunReport, flow: str, gap_threshold: int | None = None) -> list[tuple[int, int]]:
    """Outage spans of ``flow`` longer than ``gap_threshold`` ns (default: two nominal gaps)."""
    threshold = report.gap_thresholds[flow] if gap_threshold is None else gap_threshold
    return [(a, b) for a, b in outage_spans(report, flow) if b - a > threshold]
