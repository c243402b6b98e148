"""Deterministic replay of a scenario through the real service endpoints.

One concurrent task per synthetic student; actions within a student run in
order. Event posts follow the frontend contract (fire-and-forget): failures
are recorded as divergence evidence, never raised mid-run. Replay refuses a
live model backend unless explicitly allowed.
"""

from __future__ import annotations

import asyncio
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import httpx

from ..config import SERVICE_NAMES
from ..events import format_timestamp_ms
from .scenarios import Scenario


class ReplayError(RuntimeError):
    pass


class EndpointUnreachable(ReplayError):
    pass


class DivergenceFailure(ReplayError):
    def __init__(self, divergences: list[str]):
        self.divergences = divergences
        super().__init__("replay diverged from expectations:\n" + "\n".join(divergences))


@dataclass
class EndpointConfig:
    teaching: str
    autograde: str
    events: str
    feedback: str
    token: str

    @classmethod
    def from_file(cls, path: str | Path) -> "EndpointConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        token_env = data.get("token_env", "TUTORSTACK_TOKEN")
        token = os.environ.get(token_env, "")
        if not token:
            raise ReplayError(f"token env {token_env} is not set")
        return cls(
            teaching=data["teaching"],
            autograde=data["autograde"],
            events=data["events"],
            feedback=data["feedback"],
            token=token,
        )


@dataclass
class RunReport:
    template: str
    seed: int
    duration_s: float
    achieved_per_lesson: dict[str, dict[str, int]]
    store_total: int
    events_attempted: int
    events_delivered: int
    turn_timings: list[dict[str, float]]
    grade_outcomes: list[dict[str, Any]]
    code_success: dict[str, int]
    divergences: list[str]
    action_failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "template": self.template,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "achieved_per_lesson": self.achieved_per_lesson,
            "store_total": self.store_total,
            "events_attempted": self.events_attempted,
            "events_delivered": self.events_delivered,
            "turn_timings": self.turn_timings,
            "grade_outcomes": self.grade_outcomes,
            "code_success": self.code_success,
            "divergences": self.divergences,
            "action_failures": self.action_failures,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "RunReport":
        return cls(**{k: data[k] for k in (
            "template", "seed", "duration_s", "achieved_per_lesson", "store_total",
            "events_attempted", "events_delivered", "turn_timings", "grade_outcomes",
            "code_success", "divergences", "action_failures",
        )})


class _Recorder:
    def __init__(self) -> None:
        self.lock = asyncio.Lock()
        self.turn_timings: list[dict[str, float]] = []
        self.grade_outcomes: list[dict[str, Any]] = []
        self.events_attempted = 0
        self.events_delivered = 0
        self.code_success = {"passed": 0, "failed": 0}
        self.action_failures: list[str] = []


async def _run_student(
    user: str,
    actions: list[dict[str, Any]],
    scenario: Scenario,
    endpoints: EndpointConfig,
    client: httpx.AsyncClient,
    recorder: _Recorder,
) -> None:
    def key_for(lesson: str) -> str:
        return f"session_{user}_{lesson}"

    # idempotent requests survive a transport-level hiccup via one resend;
    # chat, grade, and event posts are append-semantics and never resent
    async def send_idempotent(method: str, url: str, body: dict) -> httpx.Response:
        try:
            return await client.request(method, url, json=body)
        except httpx.TransportError:
            return await client.request(method, url, json=body)

    for action in actions:
        op = action["op"]
        lesson = action["lesson"]
        try:
            if op == "create_session":
                resp = await send_idempotent(
                    "POST",
                    f"{endpoints.teaching}/sessions",
                    {"user_id": user, "lesson_id": lesson},
                )
                resp.raise_for_status()
            elif op == "event":
                wire = {
                    "user_id": user,
                    "lesson_id": lesson,
                    "session_id": key_for(lesson),
                    "category": action["category"],
                    "timestamp": format_timestamp_ms(
                        scenario.base_epoch_ms + int(action["at_ms"])
                    ),
                    "payload": action["payload"],
                }
                async with recorder.lock:
                    recorder.events_attempted += 1
                try:
                    resp = await client.post(f"{endpoints.events}/events", json=wire)
                    delivered = resp.status_code < 400
                except httpx.HTTPError:
                    delivered = False
                if delivered:
                    async with recorder.lock:
                        recorder.events_delivered += 1
                        if action["category"] == "code_execution":
                            bucket = "passed" if action["payload"].get("success") else "failed"
                            recorder.code_success[bucket] += 1
            elif op == "edit_cell":
                resp = await send_idempotent(
                    "PUT",
                    f"{endpoints.teaching}/sessions/{key_for(lesson)}/cells/{action['cell_id']}",
                    {"source": action["source"]},
                )
                resp.raise_for_status()
            elif op == "record_result":
                resp = await send_idempotent(
                    "POST",
                    f"{endpoints.teaching}/sessions/{key_for(lesson)}"
                    f"/cells/{action['cell_id']}/result",
                    {"output": action.get("output", ""), "error": action.get("error")},
                )
                resp.raise_for_status()
            elif op == "chat":
                resp = await client.post(
                    f"{endpoints.teaching}/run",
                    json={"session_id": key_for(lesson), "message": action["message"]},
                )
                resp.raise_for_status()
                async with recorder.lock:
                    recorder.turn_timings.append(resp.json()["timing"])
            elif op == "grade":
                resp = await client.post(
                    f"{endpoints.autograde}/grade",
                    json={
                        "session_id": key_for(lesson),
                        "checkpoint_id": action["checkpoint_id"],
                    },
                )
                resp.raise_for_status()
                body = resp.json()
                async with recorder.lock:
                    recorder.grade_outcomes.append(
                        {
                            "user": user,
                            "lesson": lesson,
                            "checkpoint_id": action["checkpoint_id"],
                            "passed": body["passed"],
                        }
                    )
            else:
                raise ReplayError(f"unknown action op {op!r}")
        except (httpx.HTTPError, ReplayError) as exc:
            async with recorder.lock:
                recorder.action_failures.append(f"{user} {op} {lesson}: {exc}")


async def _replay_async(
    scenario: Scenario,
    endpoints: EndpointConfig,
    *,
    strict: bool = False,
    allow_live: bool = False,
) -> RunReport:
    headers = {"Authorization": f"Bearer {endpoints.token}"}
    # pool expiry stays below the services' keep-alive window, and fresh
    # connects get retried, so transport races cannot silently eat actions
    limits = httpx.Limits(
        max_connections=32, max_keepalive_connections=32, keepalive_expiry=4.0
    )
    transport = httpx.AsyncHTTPTransport(retries=2)
    async with httpx.AsyncClient(
        headers=headers, timeout=60.0, limits=limits, transport=transport
    ) as client:
        try:
            health = (await client.get(f"{endpoints.teaching}/health")).json()
        except httpx.HTTPError as exc:
            raise EndpointUnreachable(f"teaching service unreachable: {exc}") from exc
        if health.get("backend") != "scripted" and not allow_live:
            raise ReplayError(
                "replay refuses a live model backend; pass allow_live to override"
            )

        recorder = _Recorder()
        start = time.monotonic()
        await asyncio.gather(
            *(
                _run_student(user, scenario.scripts.get(user, []), scenario, endpoints,
                             client, recorder)
                for user in scenario.roster
            )
        )
        duration_s = time.monotonic() - start

        achieved: dict[str, dict[str, int]] = {}
        store_total = 0
        try:
            resp = await client.get(f"{endpoints.feedback}/feedback/lessons")
            resp.raise_for_status()
            for summary in resp.json():
                achieved[summary["lesson_id"]] = summary["counts"]
                store_total += summary["total_events"]
        except httpx.HTTPError as exc:
            recorder.action_failures.append(f"summary query failed: {exc}")

    divergences = _diff_expectations(scenario, achieved, store_total, recorder)
    report = RunReport(
        template=scenario.template,
        seed=scenario.seed,
        duration_s=duration_s,
        achieved_per_lesson=achieved,
        store_total=store_total,
        events_attempted=recorder.events_attempted,
        events_delivered=recorder.events_delivered,
        turn_timings=recorder.turn_timings,
        grade_outcomes=recorder.grade_outcomes,
        code_success=dict(recorder.code_success),
        divergences=divergences,
        action_failures=recorder.action_failures,
    )
    if strict and divergences:
        raise DivergenceFailure(divergences)
    return report


def _diff_expectations(
    scenario: Scenario,
    achieved: dict[str, dict[str, int]],
    store_total: int,
    recorder: _Recorder,
) -> list[str]:
    expected = scenario.expected
    divergences: list[str] = []
    for lesson_id, expected_counts in expected.get("per_lesson", {}).items():
        got = achieved.get(lesson_id, {})
        for category, want in expected_counts.items():
            have = got.get(category, 0)
            if have != want:
                divergences.append(
                    f"{lesson_id} {category}: expected {want}, got {have}"
                )
    if "store_total" in expected and store_total != expected["store_total"]:
        divergences.append(
            f"store total: expected {expected['store_total']}, got {store_total}"
        )
    if "code_success" in expected:
        want = expected["code_success"]
        if recorder.code_success != want:
            divergences.append(
                f"code execution outcomes: expected {want}, got {recorder.code_success}"
            )
    return divergences


def replay(
    scenario: Scenario,
    endpoints: EndpointConfig,
    *,
    strict: bool = False,
    allow_live: bool = False,
) -> RunReport:
    return asyncio.run(
        _replay_async(scenario, endpoints, strict=strict, allow_live=allow_live)
    )


def materialize_stack_inputs(scenario: Scenario, workdir: str | Path) -> tuple[Path, Path]:
    """Write the scenario's lesson bundles and scripted rules where a stack
    config can point at them. Returns (lesson_dir, rules_path)."""
    workdir = Path(workdir)
    lesson_dir = workdir / "lessons"
    lesson_dir.mkdir(parents=True, exist_ok=True)
    for lesson in scenario.lessons:
        (lesson_dir / f"{lesson['lesson_id']}.json").write_text(
            json.dumps(lesson, indent=1), encoding="utf-8"
        )
    rules_path = workdir / "rules.json"
    rules_path.write_text(json.dumps(scenario.rules, indent=1), encoding="utf-8")
    return lesson_dir, rules_path


def self_host_replay(
    scenario: Scenario,
    workdir: str | Path,
    *,
    strict: bool = False,
    salt: str | None = None,
) -> RunReport:
    """Spin up a scripted-backend stack in subprocesses, replay, tear down.

    The course salt defaults to a fresh random value; pin it when comparing
    stores across runs (pseudonyms are a function of the salt).
    """
    import secrets

    from ..cluster import ServiceCluster, free_ports
    from ..config import GatewayConfig

    workdir = Path(workdir)
    lesson_dir, rules_path = materialize_stack_inputs(scenario, workdir)
    cfg = GatewayConfig(
        ports=dict(zip(SERVICE_NAMES, free_ports(len(SERVICE_NAMES)))),
        lesson_dir=str(lesson_dir),
        session_db=str(workdir / "data" / "sessions.sqlite3"),
        event_store_dir=str(workdir / "data" / "events"),
        backend={"kind": "scripted", "rules_path": str(rules_path)},
        capture_dir=str(workdir / "capture"),
    )
    env = {
        "COURSE_SALT": salt or secrets.token_hex(16),
        "TUTORSTACK_TOKEN": secrets.token_hex(8),
    }
    with ServiceCluster(cfg, workdir / "cluster", env=env) as cluster:
        cluster.start()
        endpoints = EndpointConfig(
            teaching=cfg.service_url("teaching"),
            autograde=cfg.service_url("autograde"),
            events=cfg.service_url("events"),
            feedback=cfg.service_url("feedback"),
            token=env["TUTORSTACK_TOKEN"],
        )
        return replay(scenario, endpoints, strict=strict)
