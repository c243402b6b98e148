"""Event ingestion, pseudonymization at the boundary, and the fixed query surface.

Raw user identifiers are replaced by salted keyed-hash tokens before any
durable write; the salt and the identity mapping live outside this store, so
nothing downstream can resolve a pseudonym back to a person. Storage is
append-only JSONL, one file per (lesson, day), with an index rebuilt from the
files at startup. The only read operations are the per-lesson stream pulls and
the summary block; there is no caller-supplied query language.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, IO, Mapping

from .domain import (
    SLUG_RE,
    EventCategory,
    InteractionEvent,
    Pseudonym,
    payload_violations,
)

log = logging.getLogger(__name__)

CHAT_TEXT_LIMIT = 300
MIN_SALT_BYTES = 16  # 128-bit floor for the course salt


class MissingSalt(RuntimeError):
    pass


class SchemaRejection(ValueError):
    """Invalid wire event; carries the offending field names (4xx semantics)."""

    def __init__(self, fields: list[str]):
        self.fields = fields
        super().__init__(f"invalid event fields: {', '.join(fields)}")


class StorageFailure(RuntimeError):
    pass


def pseudonymize(user_id: str, course_salt: str) -> Pseudonym:
    """Keyed hash of the user id under the course salt, 16 lowercase hex chars.

    Deterministic per (user, salt); infeasible to invert without the salt.
    """
    if len(course_salt.encode()) < MIN_SALT_BYTES:
        raise MissingSalt(f"course salt must be at least {MIN_SALT_BYTES} bytes")
    digest = hmac.new(course_salt.encode(), user_id.encode(), hashlib.sha256).hexdigest()
    return Pseudonym(digest[:16])


def format_timestamp_ms(timestamp_ms: int) -> str:
    dt = datetime.fromtimestamp(timestamp_ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_timestamp(value: str) -> int:
    text = value.replace("Z", "+00:00") if value.endswith("Z") else value
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError("timestamp must carry a UTC offset")
    return int(dt.timestamp() * 1000)


# ---------------------------------------------------------------------------
# Query result shapes (§ fixed query set: chat, video, code+checkpoint, summary)


@dataclass(frozen=True)
class ChatEntry:
    timestamp_ms: int
    sender: str
    text: str  # truncated to CHAT_TEXT_LIMIT at query time


@dataclass(frozen=True)
class VideoEntry:
    timestamp_ms: int
    action: str
    position_s: float
    seek_from_s: float | None = None
    seek_to_s: float | None = None


@dataclass(frozen=True)
class CodeEntry:
    timestamp_ms: int
    kind: str  # execution | checkpoint | error
    cell_id: str | None = None
    passed: bool | None = None
    error_message: str | None = None
    reasoning: str | None = None
    checkpoint_id: str | None = None


@dataclass(frozen=True)
class LessonStreams:
    chat: dict[str, list[ChatEntry]]
    video: dict[str, list[VideoEntry]]
    code: dict[str, list[CodeEntry]]


@dataclass(frozen=True)
class SummaryBlock:
    lesson_id: str
    total_students: int
    total_sessions: int
    counts: dict[str, int]  # every category key present, zero-filled

    @property
    def total_events(self) -> int:
        return sum(self.counts.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "lesson_id": self.lesson_id,
            "total_students": self.total_students,
            "total_sessions": self.total_sessions,
            "counts": dict(self.counts),
            "total_events": self.total_events,
        }


def _zero_counts() -> dict[str, int]:
    return {category.value: 0 for category in EventCategory}


_REQUIRED_WIRE_FIELDS = ("user_id", "lesson_id", "session_id", "category", "timestamp", "payload")


class EventStore:
    """Append-only pseudonymized event store over JSONL segments.

    Readers (the feedback layer) open the store without the salt; only the
    ingestion path holds it.
    """

    def __init__(self, root: str | Path, course_salt: str | None = None):
        if course_salt is not None and len(course_salt.encode()) < MIN_SALT_BYTES:
            raise MissingSalt("event ingestion refuses to start without a course salt")
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._salt = course_salt
        self._write_lock = threading.Lock()
        self._handles: dict[Path, IO[str]] = {}
        self._next_id = self._scan_max_id() + 1
        self._read_ops = 0

    # -- ingestion

    def ingest(self, raw: Mapping[str, Any]) -> InteractionEvent:
        """Validate, pseudonymize, append. The raw user id never reaches disk."""
        if self._salt is None:
            raise MissingSalt("this store was opened read-only (no course salt)")
        bad = [name for name in _REQUIRED_WIRE_FIELDS if name not in raw]
        if bad:
            raise SchemaRejection(bad)

        user_id = raw["user_id"]
        lesson_id = raw["lesson_id"]
        session_id = raw["session_id"]
        if not isinstance(user_id, str) or not user_id:
            raise SchemaRejection(["user_id"])
        if not isinstance(lesson_id, str) or not SLUG_RE.match(lesson_id) or "_" in lesson_id:
            raise SchemaRejection(["lesson_id"])
        if not isinstance(session_id, str) or not session_id:
            raise SchemaRejection(["session_id"])
        try:
            category = EventCategory(raw["category"])
        except ValueError:
            raise SchemaRejection(["category"]) from None
        try:
            timestamp_ms = parse_timestamp(raw["timestamp"])
        except (ValueError, TypeError):
            raise SchemaRejection(["timestamp"]) from None
        payload = raw["payload"]
        if not isinstance(payload, Mapping):
            raise SchemaRejection(["payload"])
        bad = payload_violations(category, payload)
        if bad:
            raise SchemaRejection(bad)

        pseudonym = pseudonymize(user_id, self._salt)
        # Composite session identifiers embed the user id; rewrite it so the
        # stored stream carries no identity in any field.
        stored_session = session_id.replace(user_id, str(pseudonym))

        with self._write_lock:
            event = InteractionEvent(
                event_id=self._next_id,
                pseudonym=pseudonym,
                lesson_id=lesson_id,
                session_id=stored_session,
                category=category,
                timestamp_ms=timestamp_ms,
                payload=dict(payload),
            )
            try:
                self._append(event)
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
            self._next_id += 1
        return event

    def _append(self, event: InteractionEvent) -> None:
        day = datetime.fromtimestamp(event.timestamp_ms / 1000.0, tz=timezone.utc)
        path = self._root / event.lesson_id / f"{day:%Y-%m-%d}.jsonl"
        handle = self._handles.get(path)
        if handle is None:
            path.parent.mkdir(parents=True, exist_ok=True)
            handle = path.open("a", encoding="utf-8")
            self._handles[path] = handle
        handle.write(
            json.dumps(
                {
                    "event_id": event.event_id,
                    "pseudonym": str(event.pseudonym),
                    "lesson_id": event.lesson_id,
                    "session_id": event.session_id,
                    "category": event.category.value,
                    "timestamp": format_timestamp_ms(event.timestamp_ms),
                    "payload": dict(event.payload),
                }
            )
            + "\n"
        )
        handle.flush()

    def close(self) -> None:
        with self._write_lock:
            for handle in self._handles.values():
                handle.close()
            self._handles.clear()

    def healthy(self) -> bool:
        try:
            self._root.mkdir(parents=True, exist_ok=True)
            probe = self._root / ".probe"
            probe.write_text("ok")
            probe.unlink()
            return True
        except OSError:
            return False

    # -- reading (always from the files, so writer and reader processes agree)

    def _scan_max_id(self) -> int:
        return max((e.event_id for e in self._iter_events()), default=0)

    def _iter_events(self, lesson_id: str | None = None):
        if lesson_id is not None:
            dirs = [self._root / lesson_id]
        else:
            dirs = sorted(p for p in self._root.iterdir() if p.is_dir()) if self._root.exists() else []
        for lesson_dir in dirs:
            if not lesson_dir.is_dir():
                continue
            for path in sorted(lesson_dir.glob("*.jsonl")):
                with path.open("r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if not line:
                            continue
                        try:
                            data = json.loads(line)
                        except json.JSONDecodeError:
                            continue  # torn trailing line from a concurrent writer
                        yield InteractionEvent(
                            event_id=data["event_id"],
                            pseudonym=Pseudonym(data["pseudonym"]),
                            lesson_id=data["lesson_id"],
                            session_id=data["session_id"],
                            category=EventCategory(data["category"]),
                            timestamp_ms=parse_timestamp(data["timestamp"]),
                            payload=data["payload"],
                        )

    @property
    def read_ops(self) -> int:
        return self._read_ops

    def store_event_count(self) -> int:
        self._read_ops += 1
        return sum(1 for _ in self._iter_events())

    def lesson_ids(self) -> list[str]:
        self._read_ops += 1
        if not self._root.exists():
            return []
        return sorted(p.name for p in self._root.iterdir() if p.is_dir())

    def lesson_events(self, lesson_id: str) -> list[InteractionEvent]:
        self._read_ops += 1
        events = list(self._iter_events(lesson_id))
        events.sort(key=lambda e: (e.timestamp_ms, e.event_id))
        return events

    def lesson_summary(self, lesson_id: str) -> SummaryBlock:
        events = self.lesson_events(lesson_id)
        counts = _zero_counts()
        students: set[str] = set()
        sessions: set[str] = set()
        for event in events:
            counts[event.category.value] += 1
            students.add(str(event.pseudonym))
            sessions.add(event.session_id)
        return SummaryBlock(
            lesson_id=lesson_id,
            total_students=len(students),
            total_sessions=len(sessions),
            counts=counts,
        )

    def query_lesson_streams(self, lesson_id: str) -> LessonStreams:
        """The three fixed stream families, grouped by pseudonym, time-ordered."""
        chat: dict[str, list[ChatEntry]] = {}
        video: dict[str, list[VideoEntry]] = {}
        code: dict[str, list[CodeEntry]] = {}
        for event in self.lesson_events(lesson_id):
            who = str(event.pseudonym)
            p = event.payload
            if event.category is EventCategory.CHAT_MESSAGE:
                chat.setdefault(who, []).append(
                    ChatEntry(event.timestamp_ms, p["sender"], p["text"][:CHAT_TEXT_LIMIT])
                )
            elif event.category is EventCategory.VIDEO_PLAYBACK:
                video.setdefault(who, []).append(
                    VideoEntry(
                        event.timestamp_ms,
                        p["action"],
                        p["position_s"],
                        p.get("seek_from_s"),
                        p.get("seek_to_s"),
                    )
                )
            elif event.category is EventCategory.CODE_EXECUTION:
                code.setdefault(who, []).append(
                    CodeEntry(
                        event.timestamp_ms,
                        "execution",
                        cell_id=p["cell_id"],
                        passed=p["success"],
                        error_message=p.get("error_message"),
                    )
                )
            elif event.category is EventCategory.CHECKPOINT_EVALUATION:
                code.setdefault(who, []).append(
                    CodeEntry(
                        event.timestamp_ms,
                        "checkpoint",
                        cell_id=p["cell_id"],
                        passed=p["passed"],
                        reasoning=p["reasoning"],
                        checkpoint_id=p["checkpoint_id"],
                    )
                )
            elif event.category is EventCategory.ERROR:
                code.setdefault(who, []).append(
                    CodeEntry(
                        event.timestamp_ms,
                        "error",
                        cell_id=p.get("cell_id"),
                        error_message=p["message"],
                    )
                )
        return LessonStreams(chat=chat, video=video, code=code)
