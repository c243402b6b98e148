"""The parallel specialist teaching pipeline.

One turn: assemble context from session + lesson, run the three specialists
concurrently (each scoped to a single reasoning domain), then synthesize one
short prose response under fixed environment, priority, format, and
solution-withholding constraints. Specialist failures degrade the synthesis;
they never abort the turn.
"""

from __future__ import annotations

import asyncio
import logging
import re
import time
from dataclasses import dataclass
from enum import Enum

from .domain import (
    CodeReport,
    GuidanceReport,
    ReportKind,
    SessionState,
    TurnTiming,
    VideoReport,
)
from .emit import EventEmitter
from .lessons import LessonContent, TranscriptSegment, transcript_window
from .model_gateway import AgentSpec, DEFAULT_TEMPERATURES, GatewayError, ModelGateway
from .session_store import SessionNotFound, SessionStore

log = logging.getLogger(__name__)

DEFAULT_CHAT_HISTORY_TURNS = 10
DEFAULT_OVERHEAD_BUDGET_MS = 250.0

FALLBACK_RESPONSE = (
    "I could not put together a response just now because of a temporary "
    "problem on my side. Please send your question again in a moment."
)

# Lesson-agnostic agent templates. Lesson-specific material arrives only
# through placeholder bindings, so one set of agent definitions serves every
# lesson.

VIDEO_TEMPLATE = """\
You are the video specialist for a web notebook lesson. You reason only about
the lecture video and its transcript; code and conceptual grading are not in
your scope.

Active checkpoint: {checkpoint}
Student question: {query}

Timestamp-indexed transcript of the current lecture segment:
{transcript}

Lesson guidance for this agent:
{lesson_instructions}

Identify which transcript segment(s) address the question, the key insight
they show, and any gap where the video does not cover what the student needs
(use the literal string "none" when there is no gap). Respond with a JSON
object containing exactly the keys relevant_segment, key_insight, and
coverage_gap."""

GUIDANCE_TEMPLATE = """\
You are the conceptual guidance specialist for a web notebook lesson. You
reason about what the student fundamentally misunderstands; you do not write
code and you do not reference video timestamps.

Active checkpoint: {checkpoint}
Editor language: {language}
Student question: {query}

Lesson guidance for this agent:
{lesson_instructions}

Identify the conceptual gap, recommend a pedagogical approach (a Socratic
question, an analogy, or a decomposition), and flag any common misconception
(use the literal string "none" when there is none). Respond with a JSON
object containing exactly the keys conceptual_gap, pedagogical_approach, and
misconception_flag."""

CODE_TEMPLATE = """\
You are the code specialist for a web notebook lesson. You reason only about
the student's code and its outputs; lecture video is not in your scope. If
code exists and fails, diagnose the error, its location (cell id and
approximate line), and its cause. If code is empty or incomplete, say what
the next implementation step is. You are forbidden from writing complete
solutions.

Active checkpoint: {checkpoint}
Editor language: {language}
Student question: {query}

Known error catalog for this lesson:
{error_catalog}

Student cells and their latest outputs:
{cells}

Lesson guidance for this agent:
{lesson_instructions}

Respond with a JSON object containing exactly the keys diagnosis,
correct_components, next_step, and alternative_approach."""

SYNTHESIZER_TEMPLATE = """\
You are the synthesizer for a web notebook tutoring pipeline. Three domain
specialists have reported on the student's question; merge their reports into
one response for the student.

Environment constraints: the student works in a web notebook. They cannot
open a terminal, install packages with pip, or use a debugger. Do not suggest
any of these.

Priority hierarchy: specific code errors are addressed first, conceptual gaps
second, video references third.

Format constraint: reply in one to four sentences of plain prose, with no
bullets and no headers. Reference cell ids inline when discussing code, and
end with a single concrete next action.

Solution withholding: you are forbidden from writing complete solutions.
Confirm what the student got right, pinpoint what is wrong, and suggest the
next step.

Lesson guidance for this agent:
{lesson_instructions}

Recent conversation:
{recent_turns}

Student question: {query}

Specialist reports:
{reports}"""


@dataclass(frozen=True)
class CellSnapshot:
    cell_id: str
    source: str
    last_output: str = ""
    last_error: str | None = None


@dataclass(frozen=True)
class TurnContext:
    """Everything one turn needs, derived from session + lesson only."""

    session_key: str
    lesson_id: str
    student_query: str
    checkpoint_id: str
    checkpoint_title: str
    checkpoint_completed: bool
    editor_language: str
    transcript_window: tuple[TranscriptSegment, ...]
    cells_with_outputs: tuple[CellSnapshot, ...]
    error_catalog_text: str
    lesson_bindings: dict[str, str]
    recent_turns: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class SpecialistFailure:
    agent: str
    error: str


@dataclass
class SpecialistResults:
    video: VideoReport | SpecialistFailure
    guidance: GuidanceReport | SpecialistFailure
    code: CodeReport | SpecialistFailure
    l_video: float = 0.0
    l_guidance: float = 0.0
    l_code: float = 0.0


class FormatFinding(str, Enum):
    TOO_MANY_SENTENCES = "TooManySentences"
    TOO_FEW_SENTENCES = "TooFewSentences"
    LIST_MARKUP = "ListMarkup"
    HEADER_MARKUP = "HeaderMarkup"
    MISSING_NEXT_ACTION = "MissingNextAction"


@dataclass(frozen=True)
class SynthesizedResponse:
    text: str
    format_findings: tuple[FormatFinding, ...]
    timing: TurnTiming
    degraded: bool = False


class NoActiveCheckpoint(Exception):
    pass


ACTION_VERBS = (
    "run", "rerun", "re-run", "change", "try", "replace", "add", "remove",
    "check", "use", "fix", "write", "define", "rename", "call", "import",
    "compare", "review", "apply", "set", "send", "measure", "watch",
)

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_HEADER_RE = re.compile(r"^\s{0,3}#{1,6}\s", re.MULTILINE)
_LIST_RE = re.compile(r"^\s*(?:[-*•]\s|\d+\.\s)", re.MULTILINE)


def split_sentences(text: str) -> list[str]:
    # Split on terminators followed by whitespace so dotted identifiers like
    # numpy.dot do not count as boundaries.
    return [chunk for chunk in _SENTENCE_SPLIT_RE.split(text.strip()) if chunk.strip()]


def validate_response_format(
    text: str, action_verbs: tuple[str, ...] = ACTION_VERBS
) -> list[FormatFinding]:
    """Soft checks on a synthesized response; findings are attached, never blocking."""
    findings: list[FormatFinding] = []
    sentences = split_sentences(text)
    if len(sentences) > 4:
        findings.append(FormatFinding.TOO_MANY_SENTENCES)
    elif len(sentences) < 1:
        findings.append(FormatFinding.TOO_FEW_SENTENCES)
    if _HEADER_RE.search(text):
        findings.append(FormatFinding.HEADER_MARKUP)
    if _LIST_RE.search(text):
        findings.append(FormatFinding.LIST_MARKUP)
    if sentences:
        final_words = {w.strip(".,!?;:()\"'").lower() for w in sentences[-1].split()}
        if not final_words.intersection(action_verbs):
            findings.append(FormatFinding.MISSING_NEXT_ACTION)
    return findings


def render_transcript(segments: tuple[TranscriptSegment, ...]) -> str:
    if not segments:
        return "(no transcript segments in the active window)"
    return "\n".join(f"[{s.start_s:.0f}s-{s.end_s:.0f}s] {s.text}" for s in segments)


def render_cells(cells: tuple[CellSnapshot, ...]) -> str:
    if not cells:
        return "(no code cells)"
    parts = []
    for cell in cells:
        lines = [f"cell {cell.cell_id}:", cell.source if cell.source.strip() else "(empty)"]
        if cell.last_output:
            lines.append(f"output: {cell.last_output}")
        if cell.last_error:
            lines.append(f"error: {cell.last_error}")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def render_error_catalog(lesson: LessonContent) -> str:
    if not lesson.error_catalog:
        return "(no catalog entries)"
    return "\n".join(f"{e['pattern']}: {e['explanation']}" for e in lesson.error_catalog)


def active_checkpoint(lesson: LessonContent, state: SessionState) -> tuple[str, str, bool]:
    """(checkpoint_id, title, completed_flag) for the turn.

    When every checkpoint is complete, chat continues against the last
    checkpoint with the completed flag set.
    """
    if not lesson.checkpoints:
        raise NoActiveCheckpoint(lesson.lesson_id)
    for cp in lesson.checkpoints:
        if cp.checkpoint_id not in state.completed_checkpoints:
            return cp.checkpoint_id, cp.title, False
    last = lesson.checkpoints[-1]
    return last.checkpoint_id, last.title, True


def build_turn_context(state: SessionState, lesson: LessonContent, query: str) -> TurnContext:
    if not query or not query.strip():
        raise ValueError("student query must be non-empty")
    if state.lesson_id != lesson.lesson_id:
        raise ValueError(f"session {state.session_key} does not belong to {lesson.lesson_id}")
    checkpoint_id, title, completed = active_checkpoint(lesson, state)
    window = transcript_window(lesson, checkpoint_id)
    snapshots = []
    for cell in lesson.code_cells():
        result = state.cell_results.get(cell.cell_id, {})
        snapshots.append(
            CellSnapshot(
                cell_id=cell.cell_id,
                source=state.cell_contents.get(cell.cell_id, cell.initial_source),
                last_output=result.get("output", ""),
                last_error=result.get("error"),
            )
        )
    return TurnContext(
        session_key=state.session_key,
        lesson_id=lesson.lesson_id,
        student_query=query.strip(),
        checkpoint_id=checkpoint_id,
        checkpoint_title=title,
        checkpoint_completed=completed,
        editor_language=lesson.editor_language,
        transcript_window=window,
        cells_with_outputs=tuple(snapshots),
        error_catalog_text=render_error_catalog(lesson),
        lesson_bindings=dict(lesson.agent_instructions),
        recent_turns=tuple(
            (t["role"], t["text"]) for t in state.chat_context[-2 * DEFAULT_CHAT_HISTORY_TURNS :]
        ),
    )


def render_report_block(results: SpecialistResults) -> str:
    blocks = []
    for label, slot in (
        ("VIDEO REPORT", results.video),
        ("GUIDANCE REPORT", results.guidance),
        ("CODE REPORT", results.code),
    ):
        if isinstance(slot, SpecialistFailure):
            blocks.append(f"{label}: specialist unavailable ({slot.error})")
            continue
        fields = "\n".join(
            f"{name}: {getattr(slot, name)}" for name in slot.__dataclass_fields__
        )
        blocks.append(f"{label}:\n{fields}")
    return "\n\n".join(blocks)


class TeachingOrchestrator:
    """Runs teaching turns: context assembly, parallel specialists, synthesis,
    session persistence, and chat event emission."""

    def __init__(
        self,
        gateway: ModelGateway,
        sessions: SessionStore,
        lessons: dict[str, LessonContent],
        emitter: EventEmitter,
        *,
        temperatures: dict[str, float] | None = None,
        chat_history_turns: int = DEFAULT_CHAT_HISTORY_TURNS,
        overhead_budget_ms: float = DEFAULT_OVERHEAD_BUDGET_MS,
    ):
        self.gateway = gateway
        self.sessions = sessions
        self.lessons = lessons
        self.emitter = emitter
        self.temperatures = {**DEFAULT_TEMPERATURES, **(temperatures or {})}
        self.chat_history_turns = chat_history_turns
        self.overhead_budget_ms = overhead_budget_ms

    def _spec(self, name: str, template: str, schema: ReportKind | None) -> AgentSpec:
        return AgentSpec(
            name=name,
            instruction_template=template,
            temperature=self.temperatures[name],
            output_schema=schema,
        )

    async def run_specialists(self, ctx: TurnContext) -> SpecialistResults:
        """Issue the three specialist calls concurrently.

        Each slot fails independently; a sibling failure never aborts the
        others. Reasoning domains stay isolated: the video agent's bindings
        carry no cell source and the code agent's carry no transcript text.
        """
        common = {
            "query": ctx.student_query,
            "checkpoint": ctx.checkpoint_title,
        }
        video_bindings = {
            **common,
            "transcript": render_transcript(ctx.transcript_window),
            "lesson_instructions": ctx.lesson_bindings["video"],
        }
        guidance_bindings = {
            **common,
            "language": ctx.editor_language,
            "lesson_instructions": ctx.lesson_bindings["guidance"],
        }
        code_bindings = {
            **common,
            "language": ctx.editor_language,
            "error_catalog": ctx.error_catalog_text,
            "cells": render_cells(ctx.cells_with_outputs),
            "lesson_instructions": ctx.lesson_bindings["code"],
        }

        async def call(name: str, template: str, kind: ReportKind, bindings: dict[str, str]):
            start = time.monotonic()
            try:
                report = await self.gateway.complete_structured(
                    self._spec(name, template, kind), bindings
                )
                return report, (time.monotonic() - start) * 1000.0
            except GatewayError as exc:
                log.warning("specialist %s failed: %s", name, exc)
                return (
                    SpecialistFailure(name, f"{type(exc).__name__}: {exc}"),
                    (time.monotonic() - start) * 1000.0,
                )

        (video, l_video), (guidance, l_guidance), (code, l_code) = await asyncio.gather(
            call("video", VIDEO_TEMPLATE, ReportKind.VIDEO, video_bindings),
            call("guidance", GUIDANCE_TEMPLATE, ReportKind.GUIDANCE, guidance_bindings),
            call("code", CODE_TEMPLATE, ReportKind.CODE, code_bindings),
        )
        return SpecialistResults(
            video=video,
            guidance=guidance,
            code=code,
            l_video=l_video,
            l_guidance=l_guidance,
            l_code=l_code,
        )

    async def synthesize(
        self, results: SpecialistResults, ctx: TurnContext
    ) -> tuple[str, list[FormatFinding], float, bool]:
        """(text, findings, synth_ms, degraded). Total over every failure subset."""
        recent = "\n".join(f"{role}: {text}" for role, text in ctx.recent_turns) or "(none)"
        bindings = {
            "lesson_instructions": ctx.lesson_bindings["synthesizer"],
            "recent_turns": recent,
            "query": ctx.student_query,
            "reports": render_report_block(results),
        }
        start = time.monotonic()
        try:
            text = await self.gateway.complete_text(
                self._spec("synthesizer", SYNTHESIZER_TEMPLATE, None), bindings
            )
            degraded = False
        except GatewayError as exc:
            log.error("synthesis failed: %s", exc)
            text = FALLBACK_RESPONSE
            degraded = True
        l_synth = (time.monotonic() - start) * 1000.0
        findings = validate_response_format(text)
        if findings:
            log.info("response format findings: %s", [f.value for f in findings])
        return text, findings, l_synth, degraded

    async def handle_chat_turn(self, session_key: str, query: str) -> SynthesizedResponse:
        """Full turn under the per-session lock; the student always gets a body."""
        wall_start = time.monotonic()
        async with self.sessions.session_lock(session_key):
            state = self.sessions.load(session_key)
            lesson = self.lessons.get(state.lesson_id)
            if lesson is None:
                raise SessionNotFound(f"lesson {state.lesson_id} not served")

            ctx = build_turn_context(state, lesson, query)
            results = await self.run_specialists(ctx)
            text, findings, l_synth, degraded = await self.synthesize(results, ctx)

            state.chat_context.append({"role": "student", "text": ctx.student_query})
            state.chat_context.append({"role": "ai", "text": text})
            keep = 2 * self.chat_history_turns
            state.chat_context = state.chat_context[-keep:]
            self.sessions.save(session_key, state)

        wall = (time.monotonic() - wall_start) * 1000.0
        timing = TurnTiming(
            l_video=results.l_video,
            l_guidance=results.l_guidance,
            l_code=results.l_code,
            l_synth=l_synth,
            wall=wall,
        )
        if not timing.within_overhead_budget(self.overhead_budget_ms):
            log.warning("turn overhead budget exceeded: %s", timing.to_json())

        for sender, body in (("student", ctx.student_query), ("ai", text)):
            await self.emitter.emit(
                user_id=state.user_id,
                lesson_id=state.lesson_id,
                session_id=session_key,
                category="chat_message",
                payload={"sender": sender, "text": body},
            )
        if degraded:
            await self.emitter.emit(
                user_id=state.user_id,
                lesson_id=state.lesson_id,
                session_id=session_key,
                category="error",
                payload={"message": "synthesis failed; fallback response served",
                         "source": "teaching"},
            )
        return SynthesizedResponse(
            text=text, format_findings=tuple(findings), timing=timing, degraded=degraded
        )
