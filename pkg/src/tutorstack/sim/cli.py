"""Simulator CLI: generate scenarios, replay them, render reports."""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from .replay import (
    DivergenceFailure,
    EndpointConfig,
    ReplayError,
    RunReport,
    replay,
    self_host_replay,
)
from .report import render_report
from .scenarios import Scenario, UnknownTemplate, generate


def _cmd_generate(args: argparse.Namespace) -> int:
    try:
        scenario = generate(args.template, args.seed)
    except UnknownTemplate:
        print(f"unknown template {args.template!r}", file=sys.stderr)
        return 2
    scenario.save(args.output)
    total = sum(len(actions) for actions in scenario.scripts.values())
    print(f"wrote {args.output}: {len(scenario.roster)} students, {total} actions")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    scenario = Scenario.load(args.scenario)
    try:
        if args.endpoints:
            endpoints = EndpointConfig.from_file(args.endpoints)
            report = replay(
                scenario, endpoints, strict=args.strict, allow_live=args.allow_live
            )
        else:
            workdir = args.workdir or tempfile.mkdtemp(prefix="sim-replay-")
            print(f"self-hosting a scripted stack under {workdir}", file=sys.stderr)
            report = self_host_replay(scenario, workdir, strict=args.strict)
    except DivergenceFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ReplayError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 2
    if args.output:
        Path(args.output).write_text(json.dumps(report.to_json(), indent=2))
        print(f"wrote {args.output}")
    print(render_report(report, "table"))
    return 1 if (args.strict and report.divergences) else 0


def _cmd_report(args: argparse.Namespace) -> int:
    report = RunReport.from_json(json.loads(Path(args.run).read_text()))
    print(render_report(report, args.format))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sim", description="classroom simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_generate = sub.add_parser("generate", help="build a scenario from a template")
    p_generate.add_argument("template", help="table1 | deadzone | confusion | mini")
    p_generate.add_argument("--seed", type=int, default=1)
    p_generate.add_argument("-o", "--output", default="scenario.json")
    p_generate.set_defaults(func=_cmd_generate)

    p_replay = sub.add_parser("replay", help="drive a scenario through the endpoints")
    p_replay.add_argument("scenario")
    p_replay.add_argument(
        "--endpoints",
        help="endpoint config JSON; omitted: self-host a scripted stack",
    )
    p_replay.add_argument("--strict", action="store_true", help="fail on any divergence")
    p_replay.add_argument(
        "--allow-live", action="store_true", help="permit a non-scripted model backend"
    )
    p_replay.add_argument("--workdir", help="working directory for self-hosted runs")
    p_replay.add_argument("-o", "--output", help="write the run report JSON here")
    p_replay.set_defaults(func=_cmd_replay)

    p_report = sub.add_parser("report", help="render a stored run report")
    p_report.add_argument("run")
    p_report.add_argument("--format", choices=("table", "json"), default="table")
    p_report.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
