"""Run report rendering: a human table or machine JSON."""

from __future__ import annotations

import json

from ..domain import EventCategory
from .replay import RunReport


def render_report(report: RunReport, fmt: str = "table") -> str:
    if fmt == "json":
        return json.dumps(report.to_json(), indent=2)
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")

    lines = [
        f"scenario {report.template} (seed {report.seed})"
        f" replayed in {report.duration_s:.1f}s",
        "",
    ]
    width = max((len(c.value) for c in EventCategory), default=20) + 2
    for lesson_id in sorted(report.achieved_per_lesson):
        counts = report.achieved_per_lesson[lesson_id]
        lines.append(f"lesson {lesson_id}")
        lines.append(f"  {'event category'.ljust(width)}{'count':>10}")
        total = 0
        for category in EventCategory:
            n = counts.get(category.value, 0)
            total += n
            lines.append(f"  {category.value.ljust(width)}{n:>10,}")
        lines.append(f"  {'total'.ljust(width)}{total:>10,}")
        lines.append("")
    lines.append(f"store total events: {report.store_total:,}")
    executed = report.code_success["passed"] + report.code_success["failed"]
    if executed:
        rate = 100.0 * report.code_success["passed"] / executed
        lines.append(
            f"code execution success rate: {rate:.0f}%"
            f" ({report.code_success['passed']}/{executed})"
        )
    if report.turn_timings:
        walls = sorted(t["wall"] for t in report.turn_timings)
        lines.append(
            f"chat turns: {len(walls)}"
            f" (median wall {walls[len(walls) // 2]:.0f} ms)"
        )
    if report.grade_outcomes:
        passed = sum(1 for g in report.grade_outcomes if g["passed"])
        lines.append(f"grade submissions: {len(report.grade_outcomes)} ({passed} passed)")
    lines.append(
        f"events delivered: {report.events_delivered}/{report.events_attempted}"
    )
    if report.divergences:
        lines.append("")
        lines.append("DIVERGENCES:")
        lines.extend(f"  - {d}" for d in report.divergences)
    else:
        lines.append("divergences: none")
    if report.action_failures:
        lines.append(f"action failures: {len(report.action_failures)}")
        lines.extend(f"  - {f}" for f in report.action_failures[:10])
    return "\n".join(lines)
