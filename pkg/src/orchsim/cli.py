"""Command-line front end: validate scenarios, run simulations, read logs.

Exit codes are a stable contract: 0 success, 1 validation failure,
2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional

from . import engine, eventlog, report as report_mod, scenario as scenario_mod
from .errors import ScenarioError, SimulationError
from .metrics import metrics_summary

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orchsim",
        description="Deterministic container-orchestration simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    validate_p = sub.add_parser("validate", help="check a scenario file")
    validate_p.add_argument("scenario", help="path to the .scenario file")

    run_p = sub.add_parser("run", help="simulate a scenario and write log + report")
    run_p.add_argument("scenario", help="path to the .scenario file")
    run_p.add_argument(
        "--out",
        default=os.environ.get("ORCHSIM_OUT"),
        help="output directory (default: $ORCHSIM_OUT)",
    )
    run_p.add_argument(
        "--format",
        choices=["text", "structured"],
        default="structured",
        help="report format: human-readable table or JSON",
    )
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument(
        "--until", type=int, default=None, help="stop before sim time T (half-open)"
    )
    run_p.add_argument(
        "--no-figures", action="store_true", help="skip rendering PNG figures"
    )

    report_p = sub.add_parser("report", help="recompute the metrics report from a log")
    report_p.add_argument("log", help="path to a structured event log")
    report_p.add_argument("--json", action="store_true", help="print JSON instead of text")
    report_p.add_argument("--figures", default=None, help="also render figures into DIR")
    return parser


def cmd_validate(path: str) -> int:
    diagnostics = scenario_mod.validate_file(path)
    for diag in diagnostics:
        print(diag, file=sys.stderr)
    return EXIT_INVALID if diagnostics else EXIT_OK


def cmd_run(
    path: str,
    out_dir: Optional[str],
    fmt: str = "structured",
    seed: Optional[int] = None,
    until: Optional[int] = None,
    figures: bool = True,
) -> int:
    if not out_dir:
        print("error: --out DIR (or ORCHSIM_OUT) is required", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        scenario = scenario_mod.load_scenario(path)
    except ScenarioError as exc:
        for diag in exc.diagnostics:
            print(diag, file=sys.stderr)
        return EXIT_INVALID
    config = scenario.engine
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    try:
        result = engine.run(scenario, config, until=until)
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "events.log")
        with open(log_path, "w", encoding="utf-8") as handle:
            handle.write(eventlog.serialize_records(result.records))
        if fmt == "text":
            report_path = os.path.join(out_dir, "report.txt")
            with open(report_path, "w", encoding="utf-8") as handle:
                handle.write(report_mod.render_text(result.report, result.state))
        else:
            report_path = os.path.join(out_dir, "report.json")
            with open(report_path, "w", encoding="utf-8") as handle:
                json.dump(result.report.to_payload(), handle, indent=2)
                handle.write("\n")
        csv_path = os.path.join(out_dir, "utilization.csv")
        with open(csv_path, "w", encoding="utf-8", newline="") as handle:
            report_mod.write_utilization_csv(result.report, handle)
        written = [log_path, report_path, csv_path]
        if figures:
            written.extend(report_mod.render_figures(result.report, out_dir))
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"events: {len(result.records)}  final clock: {result.state.clock} s")
    for line in report_mod.render_text(result.report).splitlines():
        print(line)
    for path_written in written:
        print(f"wrote {path_written}")
    return EXIT_OK


def cmd_report(log_path: str, as_json: bool = False, figures_dir: Optional[str] = None) -> int:
    try:
        with open(log_path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        records = eventlog.parse_log_text(text)
        report = metrics_summary(records)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if as_json:
        print(json.dumps(report.to_payload(), indent=2))
    else:
        sys.stdout.write(report_mod.render_text(report))
    if figures_dir:
        try:
            os.makedirs(figures_dir, exist_ok=True)
            for path in report_mod.render_figures(report, figures_dir):
                print(f"wrote {path}")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.scenario)
    if args.command == "run":
        return cmd_run(
            args.scenario,
            args.out,
            fmt=args.format,
            seed=args.seed,
            until=args.until,
            figures=not args.no_figures,
        )
    if args.command == "report":
        return cmd_report(args.log, as_json=args.json, figures_dir=args.figures)
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
