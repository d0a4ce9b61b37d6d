"""Deployment feasibility for a cell-less PON along a rail line.

For a carrier frequency and RF link budget, free-space loss bounds the cell
radius. ONUs are spaced evenly along the track with the OLT at the midpoint
of the PON tree, which fixes the differential and maximum fiber distances,
the optical budget needed, and how long a train stays within one tree.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

from .pon import SPEED_OF_LIGHT

BUDGET_CLASSES = (("N1", 29.0), ("N2", 31.0), ("E1", 33.0), ("E2", 35.0))


class LayoutError(ValueError):
    pass


def splitter_loss_db(n: int) -> float:
    """3.5 dB per 1:2 split stage."""
    return 3.5 * math.log2(n)


@dataclass(frozen=True)
class PlannerInput:
    carrier: float  # Hz
    split_ratio: int
    onu_spacing: float  # m
    rf_link_budget: float = 120.0  # dB
    train_speed: float = 100.0  # m/s
    max_diff_distance: float = 40_000.0  # m
    fiber_atten: float = 0.4  # dB/km
    splitter_loss_fn: Callable[[int], float] = field(default=splitter_loss_db, compare=False)

    def problems(self) -> list[str]:
        out = []
        for name in ("carrier", "onu_spacing", "train_speed", "max_diff_distance", "fiber_atten", "rf_link_budget"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive")
        n = self.split_ratio
        if not (isinstance(n, int) and 2 <= n <= 128 and n & (n - 1) == 0):
            out.append(f"split ratio must be a power of two between 2 and 128, got {n}")
        return out


@dataclass
class DeploymentPlan:
    carrier: float
    split_ratio: int
    onu_spacing: float
    max_cell_radius: float
    cell_radius: float
    diff_distance: float
    l_max: float
    required_budget: float
    budget_class: str | None
    budget_class_db: float | None
    t_uninterrupted: float
    feasible: bool
    reasons: list[str] = field(default_factory=list)

    @property
    def t_minutes(self) -> int:
        return int(self.t_uninterrupted // 60)

    def as_row(self) -> dict:
        row = asdict(self)
        row["t_minutes"] = self.t_minutes
        row["reasons"] = "; ".join(self.reasons)
        return row


def friis_max_radius(carrier: float, link_budget: float) -> float:
    """Largest distance (m) whose free-space path loss stays within ``link_budget`` dB."""
    if carrier <= 0:
        raise ValueError("carrier must be positive")
    return SPEED_OF_LIGHT / (4 * math.pi * carrier) * 10 ** (link_budget / 20)


def onu_positions(n: int, spacing: float) -> list[float]:
    """Signed fiber distances of ``n`` ONUs spaced evenly either side of a central OLT."""
    if n <= 0 or n % 2:
        raise LayoutError(f"layout needs an even, positive ONU count, got {n}")
    if spacing <= 0:
        raise LayoutError("spacing must be positive")
    half = n // 2
    right = [(k - 0.5) * spacing for k in range(1, half + 1)]
    return [-x for x in reversed(right)] + right


def onu_layout(n: int, spacing: float) -> tuple[float, float, list[float]]:
    """(differential distance, max OLT-ONU distance, track positions relative to the OLT)."""
    positions = onu_positions(n, spacing)
    half = n // 2
    return (half - 1) * spacing, (half - 0.5) * spacing, positions


def budget_class(
    n: int, l_max: float, atten: float = 0.4, splitter_loss_fn: Callable[[int], float] = splitter_loss_db
) -> tuple[float, str | None, float | None]:
    """Required optical budget (dB) and the smallest standard class covering it."""
    required = round(splitter_loss_fn(n) + atten * l_max / 1000, 9)
    for name, db in BUDGET_CLASSES:
        if db >= required:
            return required, name, db
    return required, None, None


def uninterrupted_time(n: int, spacing: float, speed: float) -> float:
    """Seconds a train at ``speed`` spends within one PON tree's coverage."""
    if min(n, spacing, speed) <= 0:
        raise ValueError("inputs must be positive")
    return n * spacing / speed


def _km(m: float) -> str:
    return f"{m / 1000:.3g} km"


def plan(inp: PlannerInput) -> DeploymentPlan:
    problems = inp.problems()
    if problems:
        raise ValueError("; ".join(problems))
    max_radius = friis_max_radius(inp.carrier, inp.rf_link_budget)
    diff, l_max, _ = onu_layout(inp.split_ratio, inp.onu_spacing)
    required, cls, cls_db = budget_class(inp.split_ratio, l_max, inp.fiber_atten, inp.splitter_loss_fn)
    cell_radius = inp.onu_spacing / 2
    reasons = []
    if cell_radius > max_radius:
        reasons.append(f"cell_radius {_km(cell_radius)} > max {_km(max_radius)}")
    if diff > inp.max_diff_distance:
        reasons.append(f"differential distance {_km(diff)} > max {_km(inp.max_diff_distance)}")
    if cls is None:
        reasons.append(f"required optical budget {required:g} dB exceeds every class")
    return DeploymentPlan(
        carrier=inp.carrier,
        split_ratio=inp.split_ratio,
        onu_spacing=inp.onu_spacing,
        max_cell_radius=max_radius,
        cell_radius=cell_radius,
        diff_distance=diff,
        l_max=l_max,
        required_budget=required,
        budget_class=cls,
        budget_class_db=cls_db,
        t_uninterrupted=uninterrupted_time(inp.split_ratio, inp.onu_spacing, inp.train_speed),
        feasible=not reasons,
        reasons=reasons,
    )


TABLE1_INPUTS = (
    PlannerInput(carrier=700e6, split_ratio=4, onu_spacing=40_000.0),
    PlannerInput(carrier=3.5e9, split_ratio=16, onu_spacing=5_000.0),
    PlannerInput(carrier=25e9, split_ratio=64, onu_spacing=1_000.0),
)


def table1() -> list[DeploymentPlan]:
    return [plan(i) for i in TABLE1_INPUTS]


def sweep(
    carriers: Iterable[float], splits: Iterable[int], spacings: Iterable[float], **common
) -> list[DeploymentPlan]:
    return [
        plan(PlannerInput(carrier=f, split_ratio=n, onu_spacing=d, **common))
        for f in carriers
        for n in splits
        for d in spacings
    ]


# -- output ------------------------------------------------------------

COLUMNS = (
    "carrier", "split_ratio", "onu_spacing", "max_cell_radius", "cell_radius",
    "diff_distance", "l_max", "required_budget", "budget_class", "budget_class_db",
    "t_uninterrupted", "t_minutes", "feasible", "reasons",
)


def _freq(hz: float) -> str:
    for unit, scale in (("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3)):
        if hz >= scale:
            return f"{hz / scale:g} {unit}"
    return f"{hz:g} Hz"


def format_text(plans: list[DeploymentPlan]) -> str:
    header = ("carrier", "N", "spacing", "radius max", "cell radius", "dL diff", "L max", "OB", "T", "feasible")
    rows = [header]
    for p in plans:
        ob = f"{p.required_budget:g} dB" + (f" ({p.budget_class} {p.budget_class_db:g} dB)" if p.budget_class else " (none)")
        rows.append((
            _freq(p.carrier), str(p.split_ratio), _km(p.onu_spacing), _km(p.max_cell_radius),
            _km(p.cell_radius), _km(p.diff_distance), _km(p.l_max), ob,
            f"{p.t_uninterrupted:g} s ({p.t_minutes} min)",
            "yes" if p.feasible else "no: " + "; ".join(p.reasons),
        ))
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(plans: list[DeploymentPlan]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for p in plans:
        w.writerow(p.as_row())
    return buf.getvalue()


def format_json(plans: list[DeploymentPlan]) -> str:
    rows = []
    for p in plans:
        row = p.as_row()
        row["reasons"] = list(p.reasons)
        rows.append({k: row[k] for k in COLUMNS})
    return json.dumps(rows, indent=2) + "\n"
