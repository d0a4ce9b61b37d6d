"""Scenario files: parsing, overrides and validation.

A scenario is an INI-style text file (see docs/scenario_format.md). Every
physical quantity carries its unit. Validation collects every problem it
finds instead of stopping at the first one.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from . import units
from .dba import DbaConfigError, TContProfile, fixed_capacity_problems
from .handover import DEFAULT_AGING_TIME, DEFAULT_OVERLAP, RelearnTrigger, WhitelistMode
from .kernel import DEFAULT_FRAME_PERIOD, MS, SECOND, RunConfig
from .planner import LayoutError, onu_positions
from .pon import (
    DEFAULT_GROUP_INDEX,
    XGS_LINE_RATE,
    OltState,
    default_guard_time,
)
from .traffic import Direction, FlowSpec


class ScenarioError(ValueError):
    """Scenario failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str], path: str | None = None):
        self.errors = list(errors)
        where = f"{path}: " if path else ""
        super().__init__(where + "; ".join(self.errors))


class ScenarioSyntaxError(ScenarioError):
    pass


@dataclass(frozen=True)
class OnuSpec:
    id: int
    track_position: float
    fiber_length: float


@dataclass
class Topology:
    onus: list[OnuSpec]
    group_index: float = DEFAULT_GROUP_INDEX
    ranging_window: float = 0.0
    max_diff_distance: float = 40_000.0
    guard_time: int = field(default_factory=default_guard_time)
    line_rate: int = XGS_LINE_RATE
    cell_radius: float = 0.0


@dataclass
class TrainSpec:
    start: float
    speed: float
    mac: int
    carrier: float | None = None


@dataclass
class Policies:
    aging_time: int = DEFAULT_AGING_TIME
    mode: WhitelistMode = WhitelistMode.WINDOW3
    relearn_trigger: RelearnTrigger = RelearnTrigger()
    overlap: float = DEFAULT_OVERLAP


@dataclass
class DbaSpec:
    name: str
    tcont_type: int
    fixed_bw: int
    assured_bw: int
    max_bw: int
    onus: list[int]
    queue_cap: int | None = None


@dataclass
class MetricsSpec:
    bucket: int = 100 * MS
    burst_trace_start: int = 0
    burst_trace_frames: int = 4
    gap_thresholds: dict[str, int] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    run: RunConfig
    topology: Topology
    train: TrainSpec
    policies: Policies
    dba: list[DbaSpec]
    flows: list[FlowSpec]
    metrics: MetricsSpec
    description: str = ""

    def tcont_profiles(self) -> list[tuple[DbaSpec, TContProfile]]:
        """One profile instance per (DBA entry, ONU), alloc ids numbered in that order."""
        out = []
        alloc = 1
        for spec in self.dba:
            for onu in spec.onus:
                out.append((spec, TContProfile(
                    alloc_id=alloc, tcont_type=spec.tcont_type, fixed_bw=spec.fixed_bw,
                    assured_bw=spec.assured_bw, max_bw=spec.max_bw, owner_onu=onu,
                    name=f"{spec.name}@{onu}",
                )))
                alloc += 1
        return out


# -- schema ---------------------------------------------------------------

def _int(text: str) -> int:
    return int(text.strip(), 0)


def _float(text: str) -> float:
    return float(text)


def _lengths(text: str) -> list[float]:
    return [units.parse_length(t) for t in text.split(",") if t.strip()]


def _mac(text: str) -> int:
    parts = text.strip().split(":")
    if len(parts) != 6 or not all(len(p) == 2 for p in parts):
        raise ValueError(f"MAC address {text!r} must look like 02:00:00:00:00:01")
    return int("".join(parts), 16)


def _mode(text: str) -> WhitelistMode:
    try:
        return WhitelistMode(text.strip())
    except ValueError:
        raise ValueError(f"mode must be one of {[m.value for m in WhitelistMode]}, got {text!r}") from None


def _trigger(text: str) -> RelearnTrigger:
    t = text.strip()
    if t in ("first_uplink_frame", "on_first_uplink_frame"):
        return RelearnTrigger(0)
    if t.startswith("fixed_delay(") and t.endswith(")"):
        delay = units.parse_duration(t[len("fixed_delay("):-1])
        if delay < 0:
            raise ValueError("fixed_delay must be >= 0")
        return RelearnTrigger(delay)
    raise ValueError(f"relearn_trigger must be first_uplink_frame or fixed_delay(<duration>), got {text!r}")


def _direction(text: str) -> Direction:
    try:
        return Direction(text.strip())
    except ValueError:
        raise ValueError(f"direction must be downstream or upstream, got {text!r}") from None


def _cap(text: str) -> int | None:
    if text.strip() == "unbounded":
        return None
    value = int(text)
    if value < 1:
        raise ValueError("queue_cap must be >= 1 packet or 'unbounded'")
    return value


def _onu_list(text: str):
    if text.strip() == "all":
        return "all"
    return [int(t) for t in text.split(",") if t.strip()]


SCHEMA = {
    "scenario": {"name": str, "description": str},
    "run": {"seed": _int, "end_time": units.parse_duration, "frame_period": units.parse_duration},
    "topology": {
        "onus": _int, "spacing": units.parse_length,
        "positions": _lengths, "fiber_lengths": _lengths,
        "group_index": _float, "ranging_window": units.parse_length,
        "max_diff_distance": units.parse_length, "guard_time": units.parse_duration,
        "line_rate": units.parse_rate, "cell_radius": units.parse_length,
    },
    "train": {"start": units.parse_length, "speed": units.parse_speed, "mac": _mac, "carrier": units.parse_frequency},
    "policies": {
        "aging_time": units.parse_duration, "mode": _mode,
        "relearn_trigger": _trigger, "overlap": units.parse_length,
    },
    "dba": {
        "type": _int, "fixed": units.parse_rate, "assured": units.parse_rate,
        "max": units.parse_rate, "onus": _onu_list, "queue_cap": _cap,
    },
    "flow": {
        "direction": _direction, "packet_size": units.parse_size, "rate": units.parse_rate,
        "jitter": _float, "tcont": str, "start": units.parse_duration,
        "gap_threshold": units.parse_duration,
    },
    "metrics": {
        "bucket": units.parse_duration, "burst_trace_start": units.parse_duration,
        "burst_trace_frames": _int,
    },
}

REQUIRED = {
    "run": ("end_time",),
    "train": ("speed",),
    "dba": ("type",),
    "flow": ("direction", "packet_size", "rate"),
}


def _section_kind(section: str) -> str | None:
    head, _, tail = section.partition(".")
    if head in ("dba", "flow"):
        return head if tail else None
    return head if head in SCHEMA and not tail else None


def _read(text: str, origin: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",))
    cp.optionxform = str
    if not text.strip() or all(
        not line.strip() or line.lstrip().startswith(("#", ";")) for line in text.splitlines()
    ):
        raise ScenarioSyntaxError(["empty scenario file"], origin)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ScenarioSyntaxError([f"syntax error: {exc}".replace("\n", " ")], origin) from None
    if not cp.sections():
        raise ScenarioSyntaxError(["no sections found"], origin)
    return cp


def apply_overrides(cp: configparser.ConfigParser, overrides: list[str]) -> list[str]:
    """Apply ``section.key=value`` overrides in place; returns problems found."""
    errors = []
    for item in overrides:
        path, sep, value = item.partition("=")
        path = path.strip()
        section, _, key = path.rpartition(".")
        kind = _section_kind(section) if section else None
        if not sep or kind is None or key not in SCHEMA[kind]:
            errors.append(f"override {path!r}: unknown key path")
            continue
        if not cp.has_section(section):
            if kind in ("dba", "flow"):
                errors.append(f"override {path!r}: no section [{section}] to override")
                continue
            cp.add_section(section)
        cp.set(section, key, value.strip())
    return errors


def parse_scenario(path: str | Path, overrides: list[str] | None = None) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError([f"cannot read scenario: {exc.strerror or exc}"], str(p)) from None
    return parse_scenario_text(text, overrides, origin=str(p), default_name=p.stem)


def parse_scenario_text(
    text: str, overrides: list[str] | None = None, origin: str = "<scenario>", default_name: str = "scenario"
) -> Scenario:
    cp = _read(text, origin)
    errors = apply_overrides(cp, overrides or [])

    values: dict[str, dict] = {}
    for section in cp.sections():
        kind = _section_kind(section)
        if kind is None:
            errors.append(f"unknown section [{section}]")
            continue
        parsed = {}
        for key, raw in cp.items(section):
            conv = SCHEMA[kind].get(key)
            if conv is None:
                errors.append(f"[{section}] unknown key {key!r}")
                continue
            try:
                parsed[key] = conv(raw)
            except (ValueError, units.UnitError) as exc:
                errors.append(f"[{section}] {key}: {exc}")
        for key in REQUIRED.get(kind, ()):
            if key not in cp[section]:
                errors.append(f"[{section}] missing required key {key!r}")
        values[section] = parsed

    scenario = None
    try:
        scenario = _build(values, errors, default_name)
    except _Abort:
        pass
    if errors:
        raise ScenarioError(errors, origin)
    assert scenario is not None
    return scenario


class _Abort(Exception):
    pass


def _build(values: dict[str, dict], errors: list[str], default_name: str) -> Scenario:
    meta = values.get("scenario", {})
    run_v = values.get("run", {})
    frame_period = run_v.get("frame_period", DEFAULT_FRAME_PERIOD)
    try:
        run = RunConfig(seed=run_v.get("seed", 0), end_time=run_v.get("end_time", SECOND), frame_period=frame_period)
    except ValueError as exc:
        errors.append(f"[run] {exc}")
        run = RunConfig()

    topo = _build_topology(values.get("topology", {}), errors)
    pol_v = values.get("policies", {})
    policies = Policies(
        aging_time=pol_v.get("aging_time", DEFAULT_AGING_TIME),
        mode=pol_v.get("mode", WhitelistMode.WINDOW3),
        relearn_trigger=pol_v.get("relearn_trigger", RelearnTrigger()),
        overlap=pol_v.get("overlap", DEFAULT_OVERLAP),
    )
    if policies.aging_time <= 0:
        errors.append("[policies] aging_time must be positive")
    if policies.overlap < 0:
        errors.append("[policies] overlap must be >= 0")

    if topo is not None and not topo.cell_radius:
        positions = sorted(o.track_position for o in topo.onus)
        widest = max((b - a for a, b in zip(positions, positions[1:])), default=0.0)
        topo.cell_radius = widest / 2 + policies.overlap if widest else max(policies.overlap, 1.0)

    train_v = values.get("train", {})
    train = TrainSpec(
        start=train_v.get("start", 0.0),
        speed=train_v.get("speed", 0.0),
        mac=train_v.get("mac", 0x020000000001),
        carrier=train_v.get("carrier"),
    )
    if train.speed < 0:
        errors.append("[train] speed must be >= 0")
    if topo is not None and topo.onus:
        lo = min(o.track_position for o in topo.onus) - topo.cell_radius
        hi = max(o.track_position for o in topo.onus) + topo.cell_radius
        end_pos = train.start + train.speed * run.end_time / SECOND
        if not (lo <= train.start <= hi and lo <= end_pos <= hi):
            errors.append(
                f"[train] path {train.start:g} m .. {end_pos:g} m leaves the covered track "
                f"{lo:g} m .. {hi:g} m"
            )

    onu_ids = [o.id for o in topo.onus] if topo else []
    dba = []
    for section, v in values.items():
        if not section.startswith("dba."):
            continue
        name = section[4:]
        fixed = v.get("fixed", 0)
        assured = v.get("assured", fixed)
        spec = DbaSpec(
            name=name,
            tcont_type=v.get("type", 0),
            fixed_bw=fixed,
            assured_bw=assured,
            max_bw=v.get("max", assured),
            onus=[],
            queue_cap=v.get("queue_cap"),
        )
        target = v.get("onus", "all")
        spec.onus = list(onu_ids) if target == "all" else list(target)
        for oid in spec.onus:
            if oid not in onu_ids:
                errors.append(f"[{section}] unknown ONU {oid}")
        try:
            TContProfile(alloc_id=0, tcont_type=spec.tcont_type, fixed_bw=spec.fixed_bw,
                         assured_bw=spec.assured_bw, max_bw=spec.max_bw, name=section)
        except DbaConfigError as exc:
            errors.append(f"[{section}] {exc}")
        dba.append(spec)

    flows = []
    metrics_v = values.get("metrics", {})
    metrics = MetricsSpec(
        bucket=metrics_v.get("bucket", 100 * MS),
        burst_trace_start=metrics_v.get("burst_trace_start", 0),
        burst_trace_frames=metrics_v.get("burst_trace_frames", 4),
    )
    if metrics.bucket <= 0:
        errors.append("[metrics] bucket must be positive")
    if metrics.burst_trace_frames < 0:
        errors.append("[metrics] burst_trace_frames must be >= 0")
    dba_names = {d.name: d for d in dba}
    for section, v in values.items():
        if not section.startswith("flow."):
            continue
        name = section[5:]
        if not {"direction", "packet_size", "rate"} <= v.keys():
            continue
        try:
            flow = FlowSpec(
                name=name, direction=v["direction"], packet_bytes=v["packet_size"], rate=v["rate"],
                jitter=v.get("jitter", 0.0), tcont=v.get("tcont"), start=v.get("start", 0),
            )
        except ValueError as exc:
            errors.append(f"[{section}] {exc}")
            continue
        if flow.direction is Direction.UPSTREAM:
            target = dba_names.get(flow.tcont or "")
            if target is None:
                errors.append(f"[{section}] tcont {flow.tcont!r} is not a [dba.*] section")
            elif set(target.onus) != set(onu_ids):
                errors.append(f"[{section}] tcont {flow.tcont!r} must be provisioned on every ONU")
        elif "tcont" in v:
            errors.append(f"[{section}] tcont only applies to upstream flows")
        if "gap_threshold" in v:
            metrics.gap_thresholds[name] = v["gap_threshold"]
        flows.append(flow)

    dba_ok = not any(e.startswith("[dba.") for e in errors)
    if topo is not None and dba_ok and topo.line_rate > 0 and topo.guard_time >= 0:
        olt = OltState(upstream_rate=topo.line_rate, downstream_rate=topo.line_rate, guard_time=topo.guard_time)
        instances = [
            TContProfile(alloc_id=0, tcont_type=d.tcont_type, fixed_bw=d.fixed_bw,
                         assured_bw=d.assured_bw, max_bw=d.max_bw)
            for d in dba for _ in d.onus
        ]
        errors.extend(fixed_capacity_problems(instances, olt, run.frame_period))

    if topo is None:
        raise _Abort
    return Scenario(
        name=meta.get("name", default_name), description=meta.get("description", ""),
        run=run, topology=topo, train=train, policies=policies,
        dba=dba, flows=flows, metrics=metrics,
    )


def _build_topology(v: dict, errors: list[str]) -> Topology | None:
    onus: list[OnuSpec] = []
    if "positions" in v:
        positions = v["positions"]
        fibers = v.get("fiber_lengths")
        if fibers is None or len(fibers) != len(positions):
            errors.append("[topology] fiber_lengths must list one length per position")
            return None
        if any(b <= a for a, b in zip(positions, positions[1:])):
            errors.append("[topology] positions must be strictly increasing")
        onus = [OnuSpec(i + 1, p, f) for i, (p, f) in enumerate(zip(positions, fibers))]
        if "onus" in v or "spacing" in v:
            errors.append("[topology] give either positions/fiber_lengths or onus/spacing, not both")
    elif "onus" in v and "spacing" in v:
        try:
            signed = onu_positions(v["onus"], v["spacing"])
        except LayoutError as exc:
            errors.append(f"[topology] {exc}")
            return None
        onus = [OnuSpec(i + 1, x - signed[0], abs(x)) for i, x in enumerate(signed)]
    else:
        errors.append("[topology] needs positions + fiber_lengths, or onus + spacing")
        return None
    if not onus:
        errors.append("[topology] at least one ONU is required")
        return None
    if any(o.fiber_length < 0 for o in onus):
        errors.append("[topology] fiber lengths must be >= 0")
    topo = Topology(
        onus=onus,
        group_index=v.get("group_index", DEFAULT_GROUP_INDEX),
        max_diff_distance=v.get("max_diff_distance", 40_000.0),
        guard_time=v.get("guard_time", default_guard_time(v.get("line_rate", XGS_LINE_RATE))),
        line_rate=v.get("line_rate", XGS_LINE_RATE),
        cell_radius=v.get("cell_radius", 0.0),
    )
    longest = max(o.fiber_length for o in onus)
    topo.ranging_window = v.get("ranging_window", longest)
    if topo.group_index < 1:
        errors.append("[topology] group_index must be >= 1")
    if longest > topo.ranging_window:
        errors.append(f"[topology] ONU fiber {longest:g} m exceeds ranging_window {topo.ranging_window:g} m")
    diff = longest - min(o.fiber_length for o in onus)
    if diff > topo.max_diff_distance:
        errors.append(
            f"[topology] differential fiber distance {diff:g} m exceeds {topo.max_diff_distance:g} m"
        )
    if topo.line_rate <= 0:
        errors.append("[topology] line_rate must be positive")
    if topo.guard_time < 0:
        errors.append("[topology] guard_time must be >= 0")
    return topo
