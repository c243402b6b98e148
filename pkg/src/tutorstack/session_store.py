"""Durable session state keyed by composite identifiers.

Backed by an embedded transactional engine (sqlite) behind a small interface
so a networked store can be swapped in for multi-instance deployment.
Single-key writes are atomic; a per-session advisory lock (flock, so it holds
across the teaching and autograding processes) keeps a chat turn and a grade
from interleaving on one session.
"""

from __future__ import annotations

import asyncio
import fcntl
import json
import sqlite3
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path

from .domain import SLUG_RE, SessionState
from .lessons import LessonContent

# First touch of a shared database file races across service processes (the
# WAL switch takes an exclusive lock busy_timeout does not always cover), so
# connection setup retries briefly before declaring the store unavailable.
_CONNECT_BACKOFF_S = (0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0)


def open_sqlite(db_path: Path, schema_sql: str) -> sqlite3.Connection:
    """Connect, enable WAL, and apply schema, tolerating init races."""
    last_error: sqlite3.Error | None = None
    for delay in _CONNECT_BACKOFF_S:
        if delay:
            time.sleep(delay)
        conn = None
        try:
            conn = sqlite3.connect(db_path, timeout=10.0)
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA synchronous=NORMAL")
            with conn:
                conn.execute(schema_sql)
            return conn
        except sqlite3.Error as exc:
            last_error = exc
            if conn is not None:
                conn.close()
    raise StorageUnavailable(str(last_error)) from last_error


class InvalidId(ValueError):
    pass


class SessionNotFound(KeyError):
    pass


class StorageUnavailable(RuntimeError):
    pass


def validate_id(value: str) -> str:
    # Underscores are banned outright: the composite key format would be
    # ambiguous otherwise.
    if not value or "_" in value or not SLUG_RE.match(value):
        raise InvalidId(f"not a valid id: {value!r}")
    return value


def session_key(user_id: str, lesson_id: str) -> str:
    return f"session_{validate_id(user_id)}_{validate_id(lesson_id)}"


def split_session_key(key: str) -> tuple[str, str]:
    parts = key.split("_")
    if len(parts) != 3 or parts[0] != "session":
        raise InvalidId(f"not a composite session key: {key!r}")
    return validate_id(parts[1]), validate_id(parts[2])


_SESSIONS_SCHEMA = (
    "CREATE TABLE IF NOT EXISTS sessions ("
    " session_key TEXT PRIMARY KEY,"
    " state_json TEXT NOT NULL,"
    " updated_at TEXT NOT NULL DEFAULT (strftime('%Y-%m-%dT%H:%M:%fZ','now')))"
)


class SessionStore:
    """Sqlite-backed session state with read-your-writes per key."""

    def __init__(self, db_path: str | Path, locks_dir: str | Path | None = None):
        self._db_path = Path(db_path)
        self._db_path.parent.mkdir(parents=True, exist_ok=True)
        self._locks_dir = Path(locks_dir) if locks_dir else self._db_path.parent / "locks"
        self._locks_dir.mkdir(parents=True, exist_ok=True)
        self._local = threading.local()
        self._connect()

    def _connect(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = open_sqlite(self._db_path, _SESSIONS_SCHEMA)
            self._local.conn = conn
        return conn

    def create(self, user_id: str, lesson: LessonContent) -> SessionState:
        """Initialize state for (user, lesson); idempotent: a second create
        returns the existing state unchanged."""
        key = session_key(user_id, lesson.lesson_id)
        state = SessionState(
            session_key=key,
            user_id=user_id,
            lesson_id=lesson.lesson_id,
            cell_contents={c.cell_id: c.initial_source for c in lesson.editable_cells()},
        )
        conn = self._connect()
        try:
            with conn:
                cur = conn.execute(
                    "INSERT OR IGNORE INTO sessions (session_key, state_json) VALUES (?, ?)",
                    (key, json.dumps(state.to_json())),
                )
            if cur.rowcount == 0:
                return self.load(key)
        except sqlite3.Error as exc:
            raise StorageUnavailable(str(exc)) from exc
        return state

    def load(self, key: str) -> SessionState:
        conn = self._connect()
        try:
            row = conn.execute(
                "SELECT state_json FROM sessions WHERE session_key = ?", (key,)
            ).fetchone()
        except sqlite3.Error as exc:
            raise StorageUnavailable(str(exc)) from exc
        if row is None:
            raise SessionNotFound(key)
        return SessionState.from_json(json.loads(row[0]))

    def save(self, key: str, state: SessionState) -> None:
        conn = self._connect()
        try:
            with conn:
                conn.execute(
                    "INSERT INTO sessions (session_key, state_json) VALUES (?, ?)"
                    " ON CONFLICT(session_key) DO UPDATE SET"
                    " state_json = excluded.state_json,"
                    " updated_at = strftime('%Y-%m-%dT%H:%M:%fZ','now')",
                    (key, json.dumps(state.to_json())),
                )
        except sqlite3.Error as exc:
            raise StorageUnavailable(str(exc)) from exc

    def exists(self, key: str) -> bool:
        try:
            self.load(key)
            return True
        except SessionNotFound:
            return False

    def healthy(self) -> bool:
        try:
            self._connect().execute("SELECT 1")
            return True
        except (StorageUnavailable, sqlite3.Error):
            return False

    @asynccontextmanager
    async def session_lock(self, key: str):
        """Cross-process mutual exclusion for one session.

        flock blocks, so acquisition runs in a worker thread to keep the
        event loop free; other sessions proceed concurrently.
        """
        lock_path = self._locks_dir / f"{key}.lock"
        fh = open(lock_path, "a+")
        try:
            await asyncio.to_thread(fcntl.flock, fh.fileno(), fcntl.LOCK_EX)
            yield
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
            fh.close()
