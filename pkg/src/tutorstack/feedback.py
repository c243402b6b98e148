"""Instructor-facing conversational analytics over pseudonymized activity.

Three stages: a fixed per-lesson data pull, plain-text context assembly joined
with lesson metadata, and narration by an agent that is handed the document
and nothing else. The agent runtime registers no query or computation tool;
the document is assembled before the agent ever runs, so the narrowness is
structural rather than prompt-level. Conversations freeze their document
generation so follow-ups stay coherent.
"""

from __future__ import annotations

import json
import logging
import sqlite3
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from .events import EventStore, SummaryBlock, format_timestamp_ms
from .lessons import LessonContent
from .model_gateway import AgentSpec, DEFAULT_TEMPERATURES, ModelGateway
from .session_store import open_sqlite

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_BUDGET_CHARS = 120_000

FEEDBACK_TEMPLATE = """\
You are helping a course instructor understand recorded student activity for
one lesson. Talk like a person, not a report generator: answer in natural
prose, no headers and no bullet lists. When streams describe the same
student, cross-reference them into one story; a student who barely watched
the video and then struggled with the coding exercise is a single story, not
two observations. Students appear only as pseudonymous tokens; never guess at
identities. If the activity context does not contain what the instructor
asked about, say so rather than speculate.

Activity context for this lesson:
{context_document}

Prior exchanges in this conversation:
{prior_turns}

Instructor question: {question}"""


class ConversationNotFound(KeyError):
    pass


@dataclass(frozen=True)
class ContextDocument:
    lesson_id: str
    assembled_text: str
    summary: SummaryBlock
    assembly_timestamp_ms: int
    dropped_events: int = 0


@dataclass
class Conversation:
    conversation_id: str
    lesson_id: str
    document: ContextDocument
    turns: list[tuple[str, str]]  # (question, answer)


def _minutes(position_s: float) -> str:
    return f"min {position_s / 60.0:.1f}"


def _ts(timestamp_ms: int) -> str:
    return format_timestamp_ms(timestamp_ms)


def _metadata_section(lesson: LessonContent) -> str:
    lines = [f"LESSON METADATA: {lesson.title}"]
    if lesson.objectives:
        lines.append("objectives:")
        lines.extend(f"  - {obj}" for obj in lesson.objectives)
    lines.append("notebook structure:")
    for cell in lesson.cells:
        tag = "editable" if cell.editable else "fixed"
        lines.append(f"  cell {cell.cell_id} ({cell.kind.value}, {tag})")
    lines.append("checkpoints and the video range they cover:")
    for cp in lesson.checkpoints:
        if cp.transcript_window is not None:
            lo, hi = cp.transcript_window
            coverage = f"covers {lo:.0f}s-{hi:.0f}s ({_minutes(lo)} to {_minutes(hi)})"
        else:
            coverage = "covers the full lecture"
        lines.append(
            f"  checkpoint {cp.checkpoint_id} \"{cp.title}\""
            f" targets {', '.join(cp.target_cells)}; {coverage}"
        )
    if lesson.video_outline:
        lines.append("video outline:")
        for entry in lesson.video_outline:
            lines.append(
                f"  {entry.start_s:.0f}s-{entry.end_s:.0f}s"
                f" ({_minutes(entry.start_s)} to {_minutes(entry.end_s)}): {entry.label}"
            )
    return "\n".join(lines)


def _summary_section(summary: SummaryBlock) -> str:
    counts = ", ".join(f"{name}={n}" for name, n in summary.counts.items())
    return (
        f"LESSON ACTIVITY SUMMARY: {summary.lesson_id}\n"
        f"total students: {summary.total_students}"
        f" | total sessions: {summary.total_sessions}"
        f" | total events: {summary.total_events}\n"
        f"events by category: {counts}"
    )


def assemble_context(
    lesson_id: str,
    lesson: LessonContent | None,
    store: EventStore,
    *,
    budget_chars: int = DEFAULT_CONTEXT_BUDGET_CHARS,
) -> ContextDocument:
    """Summary block + lesson metadata + per-pseudonym event narrative.

    Seeks render with both positions, checkpoint entries carry pass/fail and
    the grader's reasoning verbatim, and error messages appear verbatim, so a
    narration can distinguish what actually went wrong. Oversized documents
    drop oldest events first and say how many were dropped.
    """
    summary = store.lesson_summary(lesson_id)
    streams = store.query_lesson_streams(lesson_id)

    sections = [_summary_section(summary)]
    if lesson is not None:
        sections.append(_metadata_section(lesson))

    # (timestamp, pseudonym, line) triples so budget truncation can drop the
    # globally oldest events first.
    student_lines: list[tuple[int, str, str]] = []
    pseudonyms = sorted(set(streams.chat) | set(streams.video) | set(streams.code))
    for who in pseudonyms:
        for entry in streams.video.get(who, []):
            if entry.action == "seek" and entry.seek_from_s is not None:
                line = (
                    f"video: seek from {entry.seek_from_s:.0f}s"
                    f" ({_minutes(entry.seek_from_s)}) to {entry.seek_to_s:.0f}s"
                    f" ({_minutes(entry.seek_to_s)})"
                )
            else:
                line = (
                    f"video: {entry.action} at {entry.position_s:.0f}s"
                    f" ({_minutes(entry.position_s)})"
                )
            student_lines.append((entry.timestamp_ms, who, f"  {_ts(entry.timestamp_ms)} {line}"))
        for entry in streams.chat.get(who, []):
            student_lines.append(
                (
                    entry.timestamp_ms,
                    who,
                    f"  {_ts(entry.timestamp_ms)} chat ({entry.sender}): {entry.text}",
                )
            )
        for entry in streams.code.get(who, []):
            if entry.kind == "execution":
                status = "ok" if entry.passed else "failed"
                line = f"code: ran cell {entry.cell_id}: {status}"
                if entry.error_message:
                    line += f" - {entry.error_message}"
            elif entry.kind == "checkpoint":
                status = "PASSED" if entry.passed else "FAILED"
                line = (
                    f"checkpoint {entry.checkpoint_id} on cell {entry.cell_id}:"
                    f" {status} - {entry.reasoning}"
                )
            else:
                line = f"error: {entry.error_message}"
                if entry.cell_id:
                    line += f" (cell {entry.cell_id})"
            student_lines.append((entry.timestamp_ms, who, f"  {_ts(entry.timestamp_ms)} {line}"))

    fixed_text = "\n\n".join(sections)
    if not student_lines:
        body = "STUDENT ACTIVITY: no student activity recorded for this lesson"
        dropped = 0
    else:
        budget_for_lines = budget_chars - len(fixed_text) - 2_000  # header slack
        ordered = sorted(student_lines, key=lambda item: item[0])
        dropped = 0
        while ordered and sum(len(line) + 1 for _, _, line in ordered) > budget_for_lines:
            ordered.pop(0)
            dropped += 1
        kept_by_student: dict[str, list[tuple[int, str]]] = {}
        for timestamp_ms, who, line in ordered:
            kept_by_student.setdefault(who, []).append((timestamp_ms, line))
        parts = ["STUDENT ACTIVITY (grouped by pseudonym)"]
        for who in pseudonyms:
            kept = kept_by_student.get(who)
            if not kept:
                continue
            parts.append(f"[student {who}]")
            parts.extend(line for _, line in sorted(kept, key=lambda item: item[0]))
        body = "\n".join(parts)
        if dropped:
            body += f"\n[context budget: {dropped} oldest events dropped]"

    text = fixed_text + "\n\n" + body
    return ContextDocument(
        lesson_id=lesson_id,
        assembled_text=text,
        summary=summary,
        assembly_timestamp_ms=int(time.time() * 1000),
        dropped_events=dropped,
    )


_CONVERSATIONS_SCHEMA = (
    "CREATE TABLE IF NOT EXISTS conversations ("
    " conversation_id TEXT PRIMARY KEY,"
    " lesson_id TEXT NOT NULL,"
    " document_json TEXT NOT NULL,"
    " turns_json TEXT NOT NULL)"
)


class ConversationStore:
    """Conversations persist alongside sessions (same embedded engine)."""

    def __init__(self, db_path: str | Path):
        self._db_path = Path(db_path)
        self._db_path.parent.mkdir(parents=True, exist_ok=True)
        self._local = threading.local()
        self._connect()

    def _connect(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = open_sqlite(self._db_path, _CONVERSATIONS_SCHEMA)
            self._local.conn = conn
        return conn

    def save(self, convo: Conversation) -> None:
        doc = {
            "lesson_id": convo.document.lesson_id,
            "assembled_text": convo.document.assembled_text,
            "summary": convo.document.summary.to_json(),
            "assembly_timestamp_ms": convo.document.assembly_timestamp_ms,
            "dropped_events": convo.document.dropped_events,
        }
        with self._connect() as conn:
            conn.execute(
                "INSERT INTO conversations (conversation_id, lesson_id, document_json, turns_json)"
                " VALUES (?, ?, ?, ?)"
                " ON CONFLICT(conversation_id) DO UPDATE SET turns_json = excluded.turns_json",
                (
                    convo.conversation_id,
                    convo.lesson_id,
                    json.dumps(doc),
                    json.dumps(convo.turns),
                ),
            )

    def load(self, conversation_id: str) -> Conversation:
        row = self._connect().execute(
            "SELECT lesson_id, document_json, turns_json FROM conversations"
            " WHERE conversation_id = ?",
            (conversation_id,),
        ).fetchone()
        if row is None:
            raise ConversationNotFound(conversation_id)
        lesson_id, doc_json, turns_json = row
        doc = json.loads(doc_json)
        document = ContextDocument(
            lesson_id=doc["lesson_id"],
            assembled_text=doc["assembled_text"],
            summary=SummaryBlock(
                lesson_id=doc["summary"]["lesson_id"],
                total_students=doc["summary"]["total_students"],
                total_sessions=doc["summary"]["total_sessions"],
                counts=doc["summary"]["counts"],
            ),
            assembly_timestamp_ms=doc["assembly_timestamp_ms"],
            dropped_events=doc["dropped_events"],
        )
        return Conversation(
            conversation_id=conversation_id,
            lesson_id=lesson_id,
            document=document,
            turns=[tuple(t) for t in json.loads(turns_json)],
        )


class FeedbackService:
    """ask() and the lesson selector. Never passes a tool surface to the
    gateway and never reads anything the pre-assembled document lacks."""

    def __init__(
        self,
        gateway: ModelGateway,
        store: EventStore,
        lessons: dict[str, LessonContent],
        conversations: ConversationStore,
        *,
        context_budget_chars: int = DEFAULT_CONTEXT_BUDGET_CHARS,
        temperature: float | None = None,
    ):
        self.gateway = gateway
        self.store = store
        self.lessons = lessons
        self.conversations = conversations
        self.context_budget_chars = context_budget_chars
        self.temperature = (
            temperature if temperature is not None else DEFAULT_TEMPERATURES["feedback"]
        )

    def list_lessons_with_activity(self) -> list[SummaryBlock]:
        return [self.store.lesson_summary(lid) for lid in self.store.lesson_ids()]

    async def ask(
        self, lesson_id: str, question: str, conversation_id: str | None = None
    ) -> tuple[str, str]:
        """(conversation_id, answer). A new conversation assembles a fresh
        document; an existing one keeps its original generation."""
        if not question or not question.strip():
            raise ValueError("question must be non-empty")
        if conversation_id is None:
            document = assemble_context(
                lesson_id,
                self.lessons.get(lesson_id),
                self.store,
                budget_chars=self.context_budget_chars,
            )
            convo = Conversation(
                conversation_id=uuid.uuid4().hex[:12],
                lesson_id=lesson_id,
                document=document,
                turns=[],
            )
        else:
            convo = self.conversations.load(conversation_id)

        prior = (
            "\n".join(
                f"instructor: {q}\nassistant: {a}" for q, a in convo.turns
            )
            or "(none)"
        )
        spec = AgentSpec(
            name="feedback",
            instruction_template=FEEDBACK_TEMPLATE,
            temperature=self.temperature,
            output_schema=None,
            tools=(),  # structurally no query or computation surface
        )
        answer = await self.gateway.complete_text(
            spec,
            {
                "context_document": convo.document.assembled_text,
                "prior_turns": prior,
                "question": question.strip(),
            },
        )
        convo.turns.append((question.strip(), answer))
        self.conversations.save(convo)
        return convo.conversation_id, answer
