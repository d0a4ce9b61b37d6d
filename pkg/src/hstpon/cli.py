"""Command line: ``hstpon run | plan | validate``.

Exit status is 0 on success, 2 when a scenario or planner input fails
validation, and 1 for any other error (for example an unwritable output
directory).
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from . import planner, units
from .engine import run as run_scenario
from .metrics import interruption_intervals
from .scenario import Scenario, ScenarioError, parse_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2


def bundled_scenarios() -> dict[str, Path]:
    """Scenario files shipped with the package, by name."""
    root = resources.files("hstpon") / "scenarios"
    return {p.name[: -len(".scenario")]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".scenario")}


def resolve_scenario(name: str) -> Path:
    """A path on disk, or else the name of a bundled scenario (with or without suffix)."""
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    key = name[: -len(".scenario")] if name.endswith(".scenario") else name
    return bundled.get(key, path)


def _summary(scenario: Scenario, report) -> str:
    lines = [f"{scenario.name}: {report.frames_elapsed} frames, seed {report.seed}"]
    for name, st in report.flows.items():
        ivs = interruption_intervals(report, name)
        longest = max((b - a for a, b in ivs), default=0)
        lines.append(
            f"  {name:<12} {st.spec.direction.value:<10} sent {st.sent} received {st.received} "
            f"dropped {st.dropped} interruptions {len(ivs)}"
            + (f" (longest {units.format_duration(longest)})" if ivs else "")
        )
    lines.append(
        f"  switch: {len(report.mac_moves)} MAC move(s), {report.rejected_frames} rejected frame(s)"
    )
    return "\n".join(lines)


def _run_one(path: str, output_dir: str, overrides: list[str]) -> tuple[int, str]:
    """Run one scenario; returns (exit status, message). Safe to call in a worker process."""
    try:
        scenario = parse_scenario(path, overrides)
    except ScenarioError as exc:
        return EXIT_INVALID, "invalid scenario:\n" + "\n".join(f"  {e}" for e in exc.errors)
    try:
        report = run_scenario(scenario)
        written = report.write(output_dir)
    except OSError as exc:
        return EXIT_ERROR, f"cannot write results: {exc}"
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        return EXIT_ERROR, f"run failed: {exc}"
    where = ", ".join(str(p) for p in written)
    return EXIT_OK, _summary(scenario, report) + f"\n  wrote {where}"


def cmd_run(args: argparse.Namespace) -> int:
    paths = [resolve_scenario(s) for s in args.scenario]
    jobs = []
    for path in paths:
        if args.output is None:
            out = Path("runs") / path.stem
        elif len(paths) == 1:
            out = Path(args.output)
        else:
            out = Path(args.output) / path.stem
        jobs.append((str(path), str(out), list(args.override)))

    if len(jobs) > 1 and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*job) for job in jobs]

    status = EXIT_OK
    for (path, _, _), (code, message) in zip(jobs, results):
        stream = sys.stdout if code == EXIT_OK else sys.stderr
        print(message if code == EXIT_OK else f"{path}: {message}", file=stream)
        status = max(status, code)
    return status


def cmd_validate(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for name in args.scenario:
        path = resolve_scenario(name)
        try:
            sc = parse_scenario(path, args.override)
        except ScenarioError as exc:
            print(f"{path}: invalid", file=sys.stderr)
            for e in exc.errors:
                print(f"  {e}", file=sys.stderr)
            status = EXIT_INVALID
            continue
        print(
            f"{path}: ok ({sc.name}; {len(sc.topology.onus)} ONUs, {len(sc.flows)} flows, "
            f"{units.format_duration(sc.run.end_time)})"
        )
    return status


def _list(parse):
    def convert(text: str) -> list:
        try:
            return [parse(part.strip()) for part in text.split(",") if part.strip()]
        except (ValueError, units.UnitError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return convert


def _split_ratio(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"split ratio must be an integer, got {text!r}") from None


def cmd_plan(args: argparse.Namespace) -> int:
    if args.table1:
        plans = planner.table1()
    else:
        missing = [flag for flag, v in (("--carrier", args.carrier), ("--split", args.split), ("--spacing", args.spacing)) if not v]
        if missing:
            print(f"plan: {', '.join(missing)} required unless --table1 is given", file=sys.stderr)
            return EXIT_INVALID
        common = {
            "rf_link_budget": args.rf_budget,
            "train_speed": args.speed,
            "max_diff_distance": args.max_diff,
            "fiber_atten": args.atten,
        }
        try:
            plans = planner.sweep(args.carrier, args.split, args.spacing, **common)
        except ValueError as exc:
            print(f"plan: {exc}", file=sys.stderr)
            return EXIT_INVALID
    formatter = {"text": planner.format_text, "csv": planner.format_csv, "json": planner.format_json}[args.format]
    sys.stdout.write(formatter(plans))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hstpon",
        description="Cell-less XGS-PON handover simulator and deployment planner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one or more scenarios and write reports")
    p.add_argument("scenario", nargs="+", help="scenario file, or the name of a bundled scenario")
    p.add_argument("-o", "--output", metavar="DIR",
                   help="output directory (default runs/<scenario>; one subdirectory per scenario when several)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set section.key before validation, e.g. policies.mode=strict_antispoofing")
    p.add_argument("-j", "--jobs", type=int, default=1, help="scenarios to run in parallel")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check scenario files without running them")
    p.add_argument("scenario", nargs="+")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="deployment feasibility for carrier / split / spacing choices")
    p.add_argument("--table1", action="store_true", help="the three reference use cases")
    p.add_argument("--carrier", type=_list(units.parse_frequency), help="carrier(s), e.g. 3.5GHz,25GHz")
    p.add_argument("--split", type=_list(_split_ratio), help="split ratio(s), e.g. 16,64")
    p.add_argument("--spacing", type=_list(units.parse_length), help="ONU spacing(s), e.g. 5km")
    p.add_argument("--rf-budget", type=units.parse_db, default=120.0, help="RF link budget (default 120dB)")
    p.add_argument("--speed", type=units.parse_speed, default=100.0, help="train speed (default 100m/s)")
    p.add_argument("--max-diff", type=units.parse_length, default=40_000.0,
                   help="maximum differential fiber distance (default 40km)")
    p.add_argument("--atten", type=units.parse_attenuation, default=0.4,
                   help="fiber attenuation (default 0.4dB/km)")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the validation status
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
