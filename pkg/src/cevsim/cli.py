"""Command-line runner: ``cevsim run|validate|demo``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional

from .scenario import DEMOS, Scenario, ScenarioError, build, demo_path, read_document, validate
from .simulator import EventLog, InternalError, Metrics, Simulation

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def report_json(metrics: Metrics) -> str:
    return json.dumps(metrics.to_dict(), indent=2, sort_keys=False) + "\n"


def report_csv(metrics: Metrics) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("section", "entity", "metric", "value"))
    for section, entries in metrics.to_dict().items():
        for entity, values in entries.items():
            if not isinstance(values, dict):
                writer.writerow((section, entity, "count", values))
                continue
            for metric, value in values.items():
                if isinstance(value, dict):
                    for sub, v in value.items():
                        writer.writerow((section, entity, f"{metric}.{sub}", v))
                else:
                    writer.writerow((section, entity, metric, value))
    return buf.getvalue()


def report_human(scenario: Scenario, metrics: Metrics) -> str:
    cfg = scenario.radio
    lines = [
        f"scenario: {scenario.name or '(unnamed)'}",
        f"normal MCL {cfg.normal_mcl:.1f} dB, hysteresis {cfg.hysteresis:.1f} dB, "
        f"repetitions {list(cfg.repetition_set)}",
        "",
        "services:",
    ]
    for key, s in metrics.services.items():
        lines.append(
            f"  {key:<36} attempted {s.attempted:>4}  delivered {s.delivered:>4}  "
            f"detached {s.failed_detached:>4}  ratio {s.delivery_ratio:.3f}"
        )
    lines.append("cells:")
    for cell, led in metrics.cells.items():
        reps = ", ".join(f"{r}x{n}" for r, n in sorted(led.transmissions.items())) or "-"
        lines.append(f"  {cell:<16} subframes {led.subframes_used:>6}  in CE {led.subframes_used_ce:>6}  reps {reps}")
    lines.append("vehicles:")
    for vid, v in metrics.vehicles.items():
        lines.append(
            f"  {vid:<16} time in CE {v.time_in_ce_ms / 1000:.1f} s  attaches {v.attaches}  "
            f"detaches {v.detaches}  attach failures {v.attach_failures}"
        )
    lines.append("procedures:")
    for key, n in sorted(metrics.procedures.items()):
        lines.append(f"  {key:<36} {n}")
    return "\n".join(lines) + "\n"


def _print_diagnostics(diags) -> None:
    for d in diags:
        print(f"error: {d}", file=sys.stderr)


def _execute(doc: dict, seed: Optional[int], report: str, log_path: Optional[str]) -> int:
    try:
        scenario = build(doc)
    except ScenarioError as exc:
        _print_diagnostics(exc.diagnostics)
        return EXIT_INVALID
    try:
        log, metrics = Simulation(scenario, seed).run()
    except InternalError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if log_path:
        write_log(log, log_path)
    if report == "json":
        sys.stdout.write(report_json(metrics))
    elif report == "csv":
        sys.stdout.write(report_csv(metrics))
    else:
        sys.stdout.write(report_human(scenario, metrics))
    return EXIT_OK


def write_log(log: EventLog, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(log.to_csv())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cevsim", description="Dynamic CE mode A simulator for connected vehicles")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--log", default=None, help="write the event log as CSV")
    p_run.add_argument("--report", choices=("human", "json", "csv"), default="human")

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")

    p_demo = sub.add_parser("demo", help="run a bundled scenario")
    p_demo.add_argument("name", choices=DEMOS)
    p_demo.add_argument("--seed", type=int, default=None)
    p_demo.add_argument("--log", default=None)
    p_demo.add_argument("--report", choices=("human", "json", "csv"), default="human")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        diags = validate(args.scenario)
        _print_diagnostics(diags)
        return EXIT_INVALID if diags else EXIT_OK
    if args.command == "demo":
        doc = json.loads(demo_path(args.name).read_text(encoding="utf-8"))
        return _execute(doc, args.seed, args.report, args.log)
    diags = validate(args.scenario)
    if diags:
        _print_diagnostics(diags)
        return EXIT_INVALID
    return _execute(read_document(args.scenario), args.seed, args.report, args.log)


if __name__ == "__main__":
    sys.exit(main())
