"""Fire-and-forget event posting.

Teaching and grading emit interaction events through this seam. Failures are
counted and logged, never raised: an analytics outage must not reach the
student-facing path.
"""

from __future__ import annotations

import logging
import time
from typing import Any, Mapping, Protocol

from .events import EventStore, format_timestamp_ms

log = logging.getLogger(__name__)


class EventSink(Protocol):
    async def post(self, wire_event: Mapping[str, Any]) -> None: ...


class LocalEventSink:
    """Ingest directly into an in-process store (tests and single-binary mode)."""

    def __init__(self, store: EventStore):
        self.store = store

    async def post(self, wire_event: Mapping[str, Any]) -> None:
        self.store.ingest(wire_event)


class HttpEventSink:
    """POST to the analytics ingestion service. Short timeout: a hung
    analytics service must not stretch teaching turns."""

    def __init__(self, base_url: str, token: str, timeout_s: float = 2.0):
        import httpx

        self._client = httpx.AsyncClient(
            base_url=base_url,
            timeout=timeout_s,
            headers={"Authorization": f"Bearer {token}"},
            # expire pooled connections well before the server's keep-alive
            # window and retry fresh connects; stale-connection races would
            # otherwise silently drop events
            limits=httpx.Limits(max_keepalive_connections=8, keepalive_expiry=4.0),
            transport=httpx.AsyncHTTPTransport(retries=2),
        )

    async def post(self, wire_event: Mapping[str, Any]) -> None:
        resp = await self._client.post("/events", json=dict(wire_event))
        if resp.status_code >= 400:
            raise RuntimeError(f"event ingestion returned {resp.status_code}")


class NullEventSink:
    async def post(self, wire_event: Mapping[str, Any]) -> None:
        pass


class EventEmitter:
    """Wraps a sink with the fire-and-forget contract."""

    def __init__(self, sink: EventSink):
        self.sink = sink
        self.attempted = 0
        self.delivered = 0

    async def emit(
        self,
        *,
        user_id: str,
        lesson_id: str,
        session_id: str,
        category: str,
        payload: Mapping[str, Any],
        timestamp_ms: int | None = None,
    ) -> bool:
        self.attempted += 1
        wire_event = {
            "user_id": user_id,
            "lesson_id": lesson_id,
            "session_id": session_id,
            "category": category,
            "timestamp": format_timestamp_ms(
                timestamp_ms if timestamp_ms is not None else int(time.time() * 1000)
            ),
            "payload": dict(payload),
        }
        try:
            await self.sink.post(wire_event)
        except Exception as exc:
            log.warning("event post failed (%s event dropped): %s", category, exc)
            return False
        self.delivered += 1
        return True
