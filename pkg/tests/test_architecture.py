"""Structural assertions over the source tree.

Provider access and prompt substitution live in exactly one module, and
identity- or prompt-handling modules never grow an HTTP client.
"""

from __future__ import annotations

from pathlib import Path

import tutorstack

SRC = Path(tutorstack.__file__).parent


def module_sources() -> dict[str, str]:
    return {
        str(path.relative_to(SRC)): path.read_text(encoding="utf-8")
        for path in SRC.rglob("*.py")
    }


def test_provider_backend_only_in_model_gateway():
    for name, source in module_sources().items():
        if name == "model_gateway.py":
            continue
        assert "HttpProviderBackend" not in source, f"provider client leaked into {name}"


def test_template_rendering_only_in_model_gateway():
    for name, source in module_sources().items():
        if name in ("model_gateway.py",):
            continue
        assert "render_template(" not in source, f"prompt substitution leaked into {name}"


def test_http_client_allowlist():
    # modules allowed to speak HTTP: the provider backend, the event sink,
    # the executor proxy, the process launcher, and the simulator client
    allowed = {
        "model_gateway.py",
        "emit.py",
        "services.py",
        "cluster.py",
        "sim/replay.py",
    }
    for name, source in module_sources().items():
        if "httpx" in source:
            assert name in allowed, f"unexpected http client in {name}"


def test_feedback_module_never_writes_or_queries_beyond_fixed_surface():
    source = (SRC / "feedback.py").read_text()
    assert ".ingest(" not in source  # read-only over the event store
    assert "tools=()" in source  # the agent runtime registers no tool surface
    # the only store reads are the fixed per-lesson queries
    for reader in ("lesson_summary", "query_lesson_streams", "lesson_ids"):
        assert reader in source
    assert "_iter_events" not in source  # no ad-hoc scans around the fixed surface


def test_domain_modules_have_no_network_surface():
    for name in ("domain.py", "teaching.py", "autograder.py", "feedback.py",
                 "events.py", "session_store.py", "lessons.py"):
        source = (SRC / name).read_text()
        assert "httpx" not in source, f"{name} must stay transport-free"
        assert "requests" not in source.replace("requests are", ""), name
