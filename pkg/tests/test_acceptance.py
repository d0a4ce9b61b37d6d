"""Acceptance suite: one PASS/FAIL line per criterion.

Run on its own with ``pytest tests/test_acceptance.py -s``; the lines are also
repeated in the session summary of a normal ``pytest`` run.
"""

from __future__ import annotations

import math
import random
import subprocess
import sys
import time

from hstpon.cli import bundled_scenarios
from hstpon.dba import DbaScheduler, TContProfile, fixed_capacity_problems, frame_quota
from hstpon.engine import run
from hstpon.metrics import interruption_intervals
from hstpon.planner import PlannerInput, onu_layout, plan, table1
from hstpon.pon import OltState, OnuNode, overlapping_bursts, round_trip, upstream_burst_arrival
from hstpon.scenario import parse_scenario

from conftest import ACCEPTANCE_LINES, run_bundled

FRAME = 125_000  # ns
_BITS_NS = 8 * 10**9


def verdict(number: int, title: str, failures: list[str], detail: str = "") -> None:
    status = "PASS" if not failures else "FAIL"
    line = f"{status} criterion {number}: {title}"
    if detail:
        line += f" [{detail}]"
    if failures:
        line += " -- " + "; ".join(failures)
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert not failures, line


# 1 --------------------------------------------------------------------------


def test_criterion_1_table1():
    failures = []
    rows = table1()
    radius_ref = [34_000, 6_500, 1_000]
    exact_ok = [34_000, 6_816, 1_000]  # the exact 3.5 GHz value is accepted as well
    for row, ref, alt in zip(rows, radius_ref, exact_ok):
        if not (abs(row.max_cell_radius - ref) <= 0.05 * ref or abs(row.max_cell_radius - alt) <= 0.5):
            failures.append(f"radius {row.max_cell_radius:.0f} m vs {ref} m")
    if [r.diff_distance for r in rows] != [40_000, 35_000, 31_000]:
        failures.append(f"diff {[r.diff_distance for r in rows]}")
    if [r.l_max for r in rows] != [60_000, 37_500, 31_500]:
        failures.append(f"L_max {[r.l_max for r in rows]}")
    if [r.t_minutes for r in rows] != [26, 13, 10]:
        failures.append(f"minutes {[r.t_minutes for r in rows]}")
    got_classes = [(r.budget_class, r.required_budget) for r in rows]
    if got_classes[:2] != [("N2", 31.0), ("N1", 29.0)]:
        failures.append(f"classes {got_classes[:2]}")
    if (rows[2].budget_class, rows[2].budget_class_db) != ("E2", 35.0):
        failures.append(f"row 3 class {rows[2].budget_class}/{rows[2].budget_class_db}")

    single = plan(PlannerInput(carrier=700e6, split_ratio=4, onu_spacing=40_000))
    if single.as_row() != rows[0].as_row():
        failures.append("single 700 MHz / N=4 / 40 km plan differs from row 1")

    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "hstpon", "plan", "--table1"], capture_output=True, text=True, check=False
    )
    elapsed = time.perf_counter() - t0
    if proc.returncode != 0 or len(proc.stdout.splitlines()) != 5:
        failures.append(f"plan --table1 exit {proc.returncode}")
    if elapsed >= 1.0:
        failures.append(f"plan --table1 took {elapsed:.2f} s")
    radii = "/".join(f"{r.max_cell_radius / 1000:.3g}" for r in rows)
    verdict(1, "three reference deployments (plan --table1)", failures, f"radii {radii} km, row 3 E2 35 dB, {elapsed:.2f} s")


# 2 --------------------------------------------------------------------------


def test_criterion_2_lossless_handover():
    failures = []
    scenario = parse_scenario(bundled_scenarios()["paper_pdcp"])
    t0 = time.perf_counter()
    report = run(scenario)
    elapsed = time.perf_counter() - t0
    for name, st in report.flows.items():
        if st.dropped:
            failures.append(f"{name}: {st.dropped} drops")
        ivs = interruption_intervals(report, name)
        if ivs:
            failures.append(f"{name}: {len(ivs)} interruptions")
        if st.received == 0:
            failures.append(f"{name}: nothing delivered")
    if len(report.mac_moves) != 1:
        failures.append(f"{len(report.mac_moves)} MAC moves, expected the transition to be crossed once")
    if report.end_time != 60 * 10**9:
        failures.append("scenario does not cover 60 s")
    if elapsed >= 10.0:
        failures.append(f"runtime {elapsed:.1f} s")
    verdict(2, "lossless handover (paper_pdcp)", failures, f"60 s simulated in {elapsed:.1f} s")


# 3 --------------------------------------------------------------------------


def test_criterion_3_strict_mode():
    failures = []
    report = run_bundled("paper_pdcp", ("policies.mode=strict_antispoofing",))
    found = {}
    for name in report.flows:
        found[name] = interruption_intervals(report, name)
    if not any(found.values()):
        failures.append("no interruption")
    details = []
    for name, ivs in found.items():
        if len(ivs) > 1:
            failures.append(f"{name}: {len(ivs)} intervals")
        for a, b in ivs:
            details.append(f"{name} {(b - a) / 1e9:.6f} s")
            if abs((b - a) - 20 * 10**9) > FRAME:
                failures.append(f"{name}: interval {b - a} ns")
    verdict(3, "strict anti-spoofing blackout of 20 s +/- 1 frame", failures, ", ".join(details))


# 4 --------------------------------------------------------------------------


def test_criterion_4_one_frame_floor():
    failures = []
    report = run_bundled("floor_125us")
    ivs = interruption_intervals(report, "downlink")
    if len(ivs) != 1:
        failures.append(f"{len(ivs)} downstream interruptions")
    elif ivs[0][1] - ivs[0][0] != FRAME:
        failures.append(f"interruption {ivs[0][1] - ivs[0][0]} ns")
    if len(report.mac_moves) != 1:
        failures.append(f"{len(report.mac_moves)} MAC moves")
    detail = f"{ivs[0][1] - ivs[0][0]} ns" if ivs else ""
    verdict(4, "125 us transition floor", failures, detail)


# 5 --------------------------------------------------------------------------


def _random_profiles(rng: random.Random) -> list[TContProfile]:
    profiles = []
    for i in range(rng.randint(1, 8)):
        kind = rng.choice([1, 2, 3, 4])
        fixed, assured, mx = sorted(rng.randrange(0, 3 * 10**9) for _ in range(3))
        if kind == 1:
            fixed = assured = mx = max(fixed, 1) // 4
        elif kind == 2:
            fixed = max(fixed // 4, 1)
            assured, mx = max(assured, fixed), max(mx, assured, fixed)
        elif kind == 4:
            fixed = assured = 0
        profiles.append(TContProfile(i + 1, kind, fixed, assured, mx))
    return profiles


def test_criterion_5_dba_conservation():
    failures = []
    olt = OltState()
    rng = random.Random(2024)
    frames = 0
    while frames < 2000:
        profiles = _random_profiles(rng)
        if fixed_capacity_problems(profiles, olt):
            continue
        sched = DbaScheduler(profiles, olt)
        for _ in range(10):
            k = rng.randrange(10**6)
            demands = [rng.choice([0, rng.randrange(1, 200_000)]) for _ in profiles]
            entries = sched.grant(demands, k)
            frames += 1
            grants = [0] * len(profiles)
            for i, _, nbytes, _ in entries:
                grants[i] = nbytes
            used = sum(grants)
            end = max((off + dur for _, off, _, dur in entries), default=0)
            if end > FRAME:
                failures.append(f"frame {k}: bursts end at {end} ns")
            # bytes the frame could carry with one more burst of guard overhead
            room_next = (FRAME - (len(entries) + 1) * (olt.guard_time + 1)) * olt.upstream_rate // _BITS_NS
            room_now = (FRAME - len(entries) * (olt.guard_time + 1)) * olt.upstream_rate // _BITS_NS
            for p, d, g in zip(profiles, demands, grants):
                fixed = frame_quota(p.fixed_bw, k)
                cap = max(fixed, frame_quota(p.max_bw, k))
                if g < fixed:
                    failures.append(f"alloc {p.alloc_id}: {g} below fixed {fixed}")
                if g > cap:
                    failures.append(f"alloc {p.alloc_id}: {g} above max {cap}")
                # work conservation: unmet demand below the cap only when the frame is full
                if min(d, cap) > g:
                    full = used >= room_now if g else used >= room_next
                    if not full:
                        failures.append(f"frame {k}: alloc {p.alloc_id} short by {min(d, cap) - g} B")
            if len(failures) > 5:
                break
        if len(failures) > 5:
            break

    p150 = TContProfile(1, 2, 150_000_000, 150_000_000, 150_000_000)
    sched = DbaScheduler([p150], olt)
    total = sum(sched.grant(None, k)[0][2] for k in range(8000))
    avg = total / 8000
    if abs(avg - 2343.75) > 1:
        failures.append(f"150 Mb/s average {avg} B/frame")
    verdict(5, "DBA conservation", failures[:5], f"{frames} random frames, 150 Mb/s avg {avg} B/frame")


# 6 --------------------------------------------------------------------------


def test_criterion_6_burst_non_overlap():
    failures = []
    rng = random.Random(7)
    frames_total = 0
    placements = 20
    per_placement = 5000
    for _ in range(placements):
        olt = OltState()
        n = rng.randint(2, 16)
        lengths = [rng.uniform(0, 40_000) for _ in range(n)]
        lengths[0], lengths[-1] = 0.0, 40_000.0  # the full differential distance every time
        rng.shuffle(lengths)
        for j, length in enumerate(lengths):
            olt.add(OnuNode(j + 1, 0.0, length))
        olt.range_all()
        trips = [o.eq_delay + round_trip(o, olt) for o in olt.onus.values()]
        if max(trips) - min(trips) > 1:
            failures.append(f"equalized round trips spread {max(trips) - min(trips)} ns")

        profiles = []
        for j in range(n):
            kind = rng.choice([2, 3, 4])
            fixed = rng.randrange(1, 200_000_000) if kind == 2 else 0
            assured = fixed if kind == 4 else fixed + rng.randrange(0, 300_000_000)
            profiles.append(TContProfile(100 + j, kind, fixed, assured, assured + rng.randrange(0, 2 * 10**9), owner_onu=j + 1))
        sched = DbaScheduler(profiles, olt)
        onus = [olt.onus[p.owner_onu] for p in profiles]
        records = []
        for k in range(per_placement):
            demands = [rng.choice([0, rng.randrange(1, 100_000)]) for _ in profiles]
            for i, offset, nbytes, _ in sched.grant(demands, k):
                records.append(upstream_burst_arrival(onus[i], k * FRAME + offset, nbytes, olt))
        frames_total += per_placement
        clashes = overlapping_bursts(records, olt.guard_time)
        if clashes:
            failures.append(f"{len(clashes)} overlapping bursts with {n} ONUs")
    verdict(6, "burst non-overlap after ranging", failures, f"{placements} placements, {frames_total} frames")


# 7 --------------------------------------------------------------------------


def _brute_force_layout(n: int, spacing: float) -> tuple[float, float]:
    """Try every ONU and midpoint location for the OLT; keep the smallest reach."""
    track = [k * spacing for k in range(n)]
    candidates = track + [(a + b) / 2 for a, b in zip(track, track[1:])]
    best = None
    for olt in candidates:
        dists = [abs(x - olt) for x in track]
        key = (max(dists), max(dists) - min(dists))
        if best is None or key < best:
            best = key
    l_max, diff = best
    return diff, l_max


def test_criterion_7_layout_oracle():
    failures = []
    rng = random.Random(11)
    spacings = [rng.uniform(1.0, 100_000.0) for _ in range(100)]
    checked = 0
    for n in range(2, 129, 2):
        for d in spacings:
            diff, l_max, _ = onu_layout(n, d)
            bd, bl = _brute_force_layout(n, d)
            checked += 1
            if not (math.isclose(diff, bd, rel_tol=1e-12, abs_tol=1e-9) and math.isclose(l_max, bl, rel_tol=1e-12)):
                failures.append(f"N={n} d={d}: ({diff}, {l_max}) vs ({bd}, {bl})")
                break
    verdict(7, "layout closed form vs enumeration", failures[:5], f"{checked} cases")


# 8 --------------------------------------------------------------------------


def test_criterion_8_determinism(tmp_path):
    failures = []
    names = sorted(bundled_scenarios())
    for name in names:
        first = run_bundled(name)
        second = run(parse_scenario(bundled_scenarios()[name]))
        a = [p.read_bytes() for p in first.write(tmp_path / "a" / name)]
        b = [p.read_bytes() for p in second.write(tmp_path / "b" / name)]
        if a != b:
            failures.append(f"{name}: outputs differ")
    verdict(8, "determinism", failures, f"{len(names)} bundled scenarios")
