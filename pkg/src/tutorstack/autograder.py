"""Checkpoint evaluation.

An empty-submission check runs before anything else and short-circuits
without spending a model call; otherwise a single grading call decides
pass/fail against both the output criteria and the approach criteria in the
checkpoint's grading instructions. A passing grade marks the checkpoint
complete; completion flags never un-set except by explicit reset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .domain import GradeResult, ReportKind
from .emit import EventEmitter
from .lessons import Checkpoint, LessonContent
from .model_gateway import AgentSpec, DEFAULT_TEMPERATURES, GatewayError, ModelGateway
from .session_store import SessionStore
from .teaching import CellSnapshot, render_cells

log = logging.getLogger(__name__)

EMPTY_SUBMISSION_REASONING = (
    "No code was submitted for this checkpoint: every target cell is empty or "
    "still contains the unmodified starter scaffold. Write your solution in "
    "the target cells, run them, and check progress again."
)

AUTOGRADER_TEMPLATE = """\
You are the autograder for a web notebook lesson. Decide whether the
submission below passes the checkpoint. Correct output alone is not
sufficient: the implementation must satisfy both the output criteria and the
approach criteria in the grading instructions. Accept any implementation that
satisfies both; reject submissions whose output is right but whose approach
bypasses the concept being assessed.

Checkpoint: {checkpoint}
Editor language: {language}

Grading instructions for this checkpoint:
{grading_instructions}

Lesson guidance for this agent:
{lesson_instructions}

Submitted target cells with their latest outputs:
{cells}

Respond with a JSON object containing exactly the keys passed (boolean) and
reasoning (text explaining the decision)."""


class GradingUnavailable(RuntimeError):
    """The grading backend failed; the student should retry. No state changed."""


@dataclass(frozen=True)
class Submission:
    session_key: str
    checkpoint_id: str
    cells: tuple[CellSnapshot, ...]  # exactly the checkpoint's target cells, lesson order


@dataclass(frozen=True)
class ShortCircuit:
    result: GradeResult


class Proceed:
    pass


_PROCEED = Proceed()


def _cell_is_empty(source: str, scaffold: str) -> bool:
    # A cell counts as empty when nothing beyond the unmodified scaffold
    # lines remains; the student wrote nothing of their own.
    scaffold_lines = {line.strip() for line in scaffold.splitlines() if line.strip()}
    for line in source.splitlines():
        stripped = line.strip()
        if stripped and stripped not in scaffold_lines:
            return False
    return True


def pre_grade_check(sub: Submission, lesson: LessonContent) -> Proceed | ShortCircuit:
    """Short-circuit with a failed grade when every target cell is effectively
    empty; zero model calls happen on this path."""
    for snapshot in sub.cells:
        scaffold = lesson.cell(snapshot.cell_id).initial_source
        if not _cell_is_empty(snapshot.source, scaffold):
            return _PROCEED
    return ShortCircuit(GradeResult(passed=False, reasoning=EMPTY_SUBMISSION_REASONING))


def build_submission(state, lesson: LessonContent, checkpoint: Checkpoint) -> Submission:
    cells = []
    for cell_id in checkpoint.target_cells:
        cell = lesson.cell(cell_id)
        result = state.cell_results.get(cell_id, {})
        cells.append(
            CellSnapshot(
                cell_id=cell_id,
                source=state.cell_contents.get(cell_id, cell.initial_source),
                last_output=result.get("output", ""),
                last_error=result.get("error"),
            )
        )
    return Submission(
        session_key=state.session_key,
        checkpoint_id=checkpoint.checkpoint_id,
        cells=tuple(cells),
    )


class Autograder:
    def __init__(
        self,
        gateway: ModelGateway,
        sessions: SessionStore,
        lessons: dict[str, LessonContent],
        emitter: EventEmitter,
        *,
        temperature: float | None = None,
    ):
        self.gateway = gateway
        self.sessions = sessions
        self.lessons = lessons
        self.emitter = emitter
        self.temperature = (
            temperature if temperature is not None else DEFAULT_TEMPERATURES["autograder"]
        )

    async def grade(self, sub: Submission, lesson: LessonContent) -> GradeResult:
        """One validated grading call. Only reached after pre_grade_check proceeds."""
        checkpoint = lesson.checkpoint(sub.checkpoint_id)
        spec = AgentSpec(
            name="autograder",
            instruction_template=AUTOGRADER_TEMPLATE,
            temperature=self.temperature,
            output_schema=ReportKind.GRADE,
        )
        bindings = {
            "checkpoint": checkpoint.title,
            "language": lesson.editor_language,
            "grading_instructions": checkpoint.grading_instructions,
            "lesson_instructions": lesson.agent_instructions["autograder"],
            "cells": render_cells(sub.cells),
        }
        try:
            result = await self.gateway.complete_structured(spec, bindings)
        except GatewayError as exc:
            raise GradingUnavailable(str(exc)) from exc
        assert isinstance(result, GradeResult)
        return result

    async def handle_submission(self, session_key: str, checkpoint_id: str) -> GradeResult:
        """Short-circuit or grade; update the session on pass; emit exactly one
        checkpoint event per attempt."""
        async with self.sessions.session_lock(session_key):
            state = self.sessions.load(session_key)
            lesson = self.lessons[state.lesson_id]
            checkpoint = lesson.checkpoint(checkpoint_id)
            sub = build_submission(state, lesson, checkpoint)

            outcome = pre_grade_check(sub, lesson)
            if isinstance(outcome, ShortCircuit):
                result = outcome.result
            else:
                result = await self.grade(sub, lesson)
                if result.passed and checkpoint_id not in state.completed_checkpoints:
                    state.completed_checkpoints.add(checkpoint_id)
                    self.sessions.save(session_key, state)

        await self.emitter.emit(
            user_id=state.user_id,
            lesson_id=state.lesson_id,
            session_id=session_key,
            category="checkpoint_evaluation",
            payload={
                "checkpoint_id": checkpoint_id,
                "cell_id": checkpoint.target_cells[0],
                "passed": result.passed,
                "reasoning": result.reasoning,
            },
        )
        return result
