"""HTTP surface: auth, status codes, health, and the identity boundary."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from tutorstack.config import GatewayConfig
from tutorstack.emit import LocalEventSink
from tutorstack.events import EventStore
from tutorstack.services import (
    build_autograde_app,
    build_events_app,
    build_feedback_app,
    build_teaching_app,
)

from conftest import LESSON_DOC, TEST_SALT, default_rules

TOKEN = "test-token-123"


@pytest.fixture
def cfg(tmp_path, monkeypatch):
    monkeypatch.setenv("COURSE_SALT", TEST_SALT)
    monkeypatch.setenv("TUTORSTACK_TOKEN", TOKEN)
    lesson_dir = tmp_path / "lessons"
    lesson_dir.mkdir()
    (lesson_dir / "lesson.json").write_text(json.dumps(LESSON_DOC))
    rules_path = tmp_path / "rules.json"
    rules_path.write_text(
        json.dumps(
            [
                {
                    "agent": rule.agent,
                    "contains": rule.contains,
                    "response": rule.response,
                    "delay_ms": rule.delay_ms,
                }
                for rule in default_rules()
            ]
        )
    )
    return GatewayConfig(
        lesson_dir=str(lesson_dir),
        session_db=str(tmp_path / "sessions.sqlite3"),
        event_store_dir=str(tmp_path / "events"),
        backend={"kind": "scripted", "rules_path": str(rules_path)},
    )


@pytest.fixture
def stack(cfg, tmp_path):
    """All four apps in one process, sharing files; teaching and autograde
    emit straight into the events store."""
    events_app = build_events_app(cfg)
    store: EventStore = events_app.state.store
    sink = LocalEventSink(store)
    teaching_app = build_teaching_app(cfg, sink=sink)
    autograde_app = build_autograde_app(cfg, sink=sink)
    feedback_app = build_feedback_app(cfg)
    headers = {"Authorization": f"Bearer {TOKEN}"}
    return {
        "teaching": TestClient(teaching_app, headers=headers),
        "autograde": TestClient(autograde_app, headers=headers),
        "events": TestClient(events_app, headers=headers),
        "feedback": TestClient(feedback_app, headers=headers),
        "store": store,
    }


def create_session(stack, user="u1"):
    resp = stack["teaching"].post(
        "/sessions", json={"user_id": user, "lesson_id": "superposition-basics"}
    )
    assert resp.status_code in (200, 201)
    return resp.json()["session_key"]


# -- auth


def test_missing_token_is_401(stack):
    bare = TestClient(stack["teaching"].app)
    assert bare.post("/run", json={"session_id": "x", "message": "hi"}).status_code == 401
    assert TestClient(stack["feedback"].app).get("/feedback/lessons").status_code == 401
    assert TestClient(stack["events"].app).post("/events", json={}).status_code == 401


def test_health_needs_no_token(stack):
    for name in ("teaching", "autograde", "events", "feedback"):
        resp = TestClient(stack[name].app).get("/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"
    assert TestClient(stack["teaching"].app).get("/health").json()["backend"] == "scripted"


# -- sessions


def test_create_session_and_duplicate(stack):
    resp = stack["teaching"].post(
        "/sessions", json={"user_id": "u1", "lesson_id": "superposition-basics"}
    )
    assert resp.status_code == 201
    assert set(resp.json()["cell_contents"]) == {"c2", "c3"}
    again = stack["teaching"].post(
        "/sessions", json={"user_id": "u1", "lesson_id": "superposition-basics"}
    )
    assert again.status_code == 200
    assert again.json() == resp.json()


def test_create_session_bad_ids(stack):
    resp = stack["teaching"].post(
        "/sessions", json={"user_id": "a_b", "lesson_id": "superposition-basics"}
    )
    assert resp.status_code == 400
    resp = stack["teaching"].post("/sessions", json={"user_id": "u1", "lesson_id": "ghost"})
    assert resp.status_code == 404


def test_edit_cell_emits_editor_event(stack):
    key = create_session(stack)
    resp = stack["teaching"].put(
        f"/sessions/{key}/cells/c2", json={"source": "circuit.h(0)"}
    )
    assert resp.status_code == 200
    assert stack["teaching"].get(f"/sessions/{key}").json()["cell_contents"]["c2"] == "circuit.h(0)"
    summary = stack["store"].lesson_summary("superposition-basics")
    assert summary.counts["code_editor"] == 1


def test_edit_rejects_non_editable_and_unknown_cells(stack):
    key = create_session(stack)
    assert (
        stack["teaching"].put(f"/sessions/{key}/cells/c1", json={"source": "x"}).status_code == 400
    )
    assert (
        stack["teaching"].put(f"/sessions/{key}/cells/c9", json={"source": "x"}).status_code == 400
    )


# -- teaching


def test_run_nominal(stack):
    key = create_session(stack)
    resp = stack["teaching"].post("/run", json={"session_id": key, "message": "help me"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["response"]
    assert body["timing"]["wall"] >= body["timing"]["l_synth"]
    summary = stack["store"].lesson_summary("superposition-basics")
    assert summary.counts["chat_message"] == 2


def test_run_unknown_session_404(stack):
    resp = stack["teaching"].post(
        "/run", json={"session_id": "session_u9_superposition-basics", "message": "hi"}
    )
    assert resp.status_code == 404


def test_run_empty_message_400(stack):
    key = create_session(stack)
    assert (
        stack["teaching"].post("/run", json={"session_id": key, "message": "  "}).status_code
        == 400
    )


def test_execute_without_executor_is_503(stack):
    key = create_session(stack)
    resp = stack["teaching"].post(
        "/execute", json={"session_id": key, "cell_id": "c2", "code": "1+1"}
    )
    assert resp.status_code == 503


# -- autograde


def test_grade_empty_submission_short_circuits(stack):
    key = create_session(stack)
    resp = stack["autograde"].post("/grade", json={"session_id": key, "checkpoint_id": "cp-super"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["passed"] is False
    assert "No code was submitted" in body["reasoning"]


def test_grade_pass_after_edit(stack):
    key = create_session(stack)
    stack["teaching"].put(f"/sessions/{key}/cells/c2", json={"source": "circuit.h(0)"})
    resp = stack["autograde"].post("/grade", json={"session_id": key, "checkpoint_id": "cp-super"})
    assert resp.status_code == 200
    assert resp.json()["passed"] is True
    assert "cp-super" in stack["teaching"].get(f"/sessions/{key}").json()["completed_checkpoints"]


def test_grade_unknown_checkpoint_404(stack):
    key = create_session(stack)
    assert (
        stack["autograde"]
        .post("/grade", json={"session_id": key, "checkpoint_id": "cp-nope"})
        .status_code
        == 404
    )


# -- events


def test_events_endpoint_accepts_and_rejects(stack):
    good = {
        "user_id": "u1",
        "lesson_id": "superposition-basics",
        "session_id": "session_u1_superposition-basics",
        "category": "video_playback",
        "timestamp": "2026-01-12T09:00:00.000Z",
        "payload": {"action": "play", "position_s": 0},
    }
    resp = stack["events"].post("/events", json=good)
    assert resp.status_code == 202
    assert resp.json()["event_id"] >= 1

    bad = dict(good, payload={"action": "play"})
    resp = stack["events"].post("/events", json=bad)
    assert resp.status_code == 400
    assert resp.json()["fields"] == ["position_s"]


# -- feedback


def test_feedback_roundtrip(stack):
    key = create_session(stack)
    stack["teaching"].post("/run", json={"session_id": key, "message": "what is a basis?"})
    lessons = stack["feedback"].get("/feedback/lessons").json()
    assert [entry["lesson_id"] for entry in lessons] == ["superposition-basics"]
    resp = stack["feedback"].post(
        "/feedback/ask",
        json={"lesson_id": "superposition-basics", "question": "who talked?"},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["conversation_id"] and body["answer"]
    followup = stack["feedback"].post(
        "/feedback/ask",
        json={
            "lesson_id": "superposition-basics",
            "question": "anything else?",
            "conversation_id": body["conversation_id"],
        },
    )
    assert followup.status_code == 200
    assert followup.json()["conversation_id"] == body["conversation_id"]


def test_feedback_empty_question_400(stack):
    resp = stack["feedback"].post(
        "/feedback/ask", json={"lesson_id": "superposition-basics", "question": " "}
    )
    assert resp.status_code == 400


# -- identity boundary


def test_raw_user_id_never_in_feedback_or_store(stack, tmp_path):
    key = create_session(stack, user="zelda-w")
    stack["teaching"].put(f"/sessions/{key}/cells/c2", json={"source": "circuit.h(0)"})
    stack["teaching"].post("/run", json={"session_id": key, "message": "am I on track?"})
    stack["autograde"].post("/grade", json={"session_id": key, "checkpoint_id": "cp-super"})

    blob = b"".join(p.read_bytes() for p in (tmp_path / "events").rglob("*.jsonl"))
    assert b"zelda-w" not in blob

    answer = stack["feedback"].post(
        "/feedback/ask",
        json={"lesson_id": "superposition-basics", "question": "how are students doing?"},
    )
    assert "zelda-w" not in answer.text
    lessons_body = stack["feedback"].get("/feedback/lessons").text
    assert "zelda-w" not in lessons_body


def test_events_storage_failure_is_500(stack, monkeypatch):
    from tutorstack.events import StorageFailure

    def exploding_ingest(raw):
        raise StorageFailure("disk gone")

    monkeypatch.setattr(stack["store"], "ingest", exploding_ingest)
    resp = stack["events"].post(
        "/events",
        json={
            "user_id": "u1",
            "lesson_id": "superposition-basics",
            "session_id": "s",
            "category": "error",
            "timestamp": "2026-01-12T09:00:00.000Z",
            "payload": {"message": "boom"},
        },
    )
    assert resp.status_code == 500


def test_events_health_503_when_store_unwritable(stack, monkeypatch):
    monkeypatch.setattr(stack["store"], "healthy", lambda: False)
    resp = TestClient(stack["events"].app).get("/health")
    assert resp.status_code == 503
    assert resp.json()["store_reachable"] is False


def test_grade_maps_gateway_outage_to_503(cfg, tmp_path):
    import json as _json

    rules_path = tmp_path / "failing_rules.json"
    rules_path.write_text(_json.dumps([{"agent": "autograder", "fail": "unavailable"}]))
    cfg.backend = {"kind": "scripted", "rules_path": str(rules_path)}
    from tutorstack.emit import LocalEventSink
    from tutorstack.events import EventStore

    store = EventStore(tmp_path / "ev", TEST_SALT)
    autograde = TestClient(
        build_autograde_app(cfg, sink=LocalEventSink(store)),
        headers={"Authorization": f"Bearer {TOKEN}"},
    )
    teaching = TestClient(
        build_teaching_app(cfg, sink=LocalEventSink(store)),
        headers={"Authorization": f"Bearer {TOKEN}"},
    )
    key = teaching.post(
        "/sessions", json={"user_id": "u1", "lesson_id": "superposition-basics"}
    ).json()["session_key"]
    teaching.put(f"/sessions/{key}/cells/c2", json={"source": "circuit.h(0)"})
    resp = autograde.post("/grade", json={"session_id": key, "checkpoint_id": "cp-super"})
    assert resp.status_code == 503
    store.close()


def test_single_process_dev_mode_serves_all_four(tmp_path, cfg):
    # one binary, four listeners: the dev topology
    import json as _json
    import subprocess
    import sys
    import time as _time

    import httpx

    from tutorstack.cluster import free_ports
    from tutorstack.config import SERVICE_NAMES

    cfg.ports = dict(zip(SERVICE_NAMES, free_ports(len(SERVICE_NAMES))))
    config_path = tmp_path / "allmode.json"
    config_path.write_text(_json.dumps(cfg.to_json()))
    proc = subprocess.Popen(
        [sys.executable, "-m", "tutorstack.services", "--config", str(config_path),
         "--service", "all"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.STDOUT,
    )
    try:
        deadline = _time.monotonic() + 30
        for name in SERVICE_NAMES:
            url = f"{cfg.service_url(name)}/health"
            while True:
                assert proc.poll() is None, "dev-mode process exited"
                try:
                    if httpx.get(url, timeout=1.0).status_code == 200:
                        break
                except httpx.HTTPError:
                    pass
                assert _time.monotonic() < deadline, f"{name} never came up"
                _time.sleep(0.1)
        headers = {"Authorization": f"Bearer {TOKEN}"}
        key = httpx.post(
            f"{cfg.service_url('teaching')}/sessions",
            json={"user_id": "u1", "lesson_id": "superposition-basics"},
            headers=headers,
            timeout=10.0,
        ).json()["session_key"]
        resp = httpx.post(
            f"{cfg.service_url('teaching')}/run",
            json={"session_id": key, "message": "does dev mode work?"},
            headers=headers,
            timeout=30.0,
        )
        assert resp.status_code == 200 and resp.json()["response"]
    finally:
        proc.terminate()
        proc.wait(timeout=10)
