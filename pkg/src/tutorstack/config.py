"""Service configuration.

Secrets (course salt, API token) are referenced by environment variable name;
literal values never appear in config files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

SERVICE_NAMES = ("teaching", "autograde", "events", "feedback")

DEFAULT_PORTS = {"teaching": 8801, "autograde": 8802, "events": 8803, "feedback": 8804}


class ConfigError(ValueError):
    pass


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    ports: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_PORTS))
    lesson_dir: str = "lessons"
    session_db: str = "data/sessions.sqlite3"
    event_store_dir: str = "data/events"
    conversations_db: str | None = None  # defaults to session_db
    backend: dict[str, Any] = field(default_factory=lambda: {"kind": "scripted"})
    salt_env: str = "COURSE_SALT"
    token_env: str = "TUTORSTACK_TOKEN"
    executor_url: str | None = None
    capture_dir: str | None = None  # model-call capture (JSONL per service)
    overhead_budget_ms: float = 250.0
    context_budget_chars: int = 120_000
    chat_history_turns: int = 10

    def service_url(self, name: str) -> str:
        return f"http://{self.host}:{self.ports[name]}"

    def token(self) -> str:
        value = os.environ.get(self.token_env, "")
        if not value:
            raise ConfigError(f"API token env {self.token_env} is not set")
        return value

    def course_salt(self) -> str:
        value = os.environ.get(self.salt_env, "")
        if not value:
            raise ConfigError(f"course salt env {self.salt_env} is not set")
        return value

    def conversations_path(self) -> str:
        return self.conversations_db or self.session_db

    def to_json(self) -> dict[str, Any]:
        return {
            "host": self.host,
            "ports": dict(self.ports),
            "lesson_dir": self.lesson_dir,
            "session_db": self.session_db,
            "event_store_dir": self.event_store_dir,
            "conversations_db": self.conversations_db,
            "backend": dict(self.backend),
            "salt_env": self.salt_env,
            "token_env": self.token_env,
            "executor_url": self.executor_url,
            "capture_dir": self.capture_dir,
            "overhead_budget_ms": self.overhead_budget_ms,
            "context_budget_chars": self.context_budget_chars,
            "chat_history_turns": self.chat_history_turns,
        }


def parse_config(data: Mapping[str, Any]) -> GatewayConfig:
    for key in ("salt", "token", "api_key"):
        if key in data:
            raise ConfigError(
                f"config must not carry literal secrets; put {key!r} in an env var"
            )
    cfg = GatewayConfig(
        host=data.get("host", "127.0.0.1"),
        ports={**DEFAULT_PORTS, **data.get("ports", {})},
        lesson_dir=data.get("lesson_dir", "lessons"),
        session_db=data.get("session_db", "data/sessions.sqlite3"),
        event_store_dir=data.get("event_store_dir", "data/events"),
        conversations_db=data.get("conversations_db"),
        backend=dict(data.get("backend", {"kind": "scripted"})),
        salt_env=data.get("salt_env", "COURSE_SALT"),
        token_env=data.get("token_env", "TUTORSTACK_TOKEN"),
        executor_url=data.get("executor_url"),
        capture_dir=data.get("capture_dir"),
        overhead_budget_ms=float(data.get("overhead_budget_ms", 250.0)),
        context_budget_chars=int(data.get("context_budget_chars", 120_000)),
        chat_history_turns=int(data.get("chat_history_turns", 10)),
    )
    if cfg.backend.get("kind") == "http_provider" and "api_key" in cfg.backend:
        raise ConfigError("provider credentials belong in api_key_env, not the config file")
    return cfg


def load_config(path: str | Path) -> GatewayConfig:
    return parse_config(json.loads(Path(path).read_text(encoding="utf-8")))
