"""Lesson bundles: authoring format, loader, and validation.

The teaching layer is lesson-agnostic; everything lesson-specific (transcript,
cells, checkpoints, per-agent instruction templates, error catalog, video
outline) arrives through one self-contained JSON document validated here.
A bundle that fails validation is never served.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .domain import SLUG_RE

AGENT_INSTRUCTION_KEYS = ("video", "guidance", "code", "synthesizer", "autograder")


class LessonParseError(ValueError):
    def __init__(self, location: str, detail: str):
        self.location = location
        super().__init__(f"{location}: {detail}")


class LessonValidationError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class UnknownCheckpoint(KeyError):
    pass


class CellKind(str, Enum):
    MARKDOWN = "markdown"
    CODE = "code"


@dataclass(frozen=True)
class TranscriptSegment:
    start_s: float
    end_s: float
    text: str


@dataclass(frozen=True)
class Cell:
    cell_id: str
    kind: CellKind
    editable: bool
    initial_source: str = ""


@dataclass(frozen=True)
class Checkpoint:
    checkpoint_id: str
    title: str
    target_cells: tuple[str, ...]
    grading_instructions: str
    # Optional transcript/outline association [start_s, end_s); when absent
    # the checkpoint is taken to cover the full transcript.
    transcript_window: tuple[float, float] | None = None


@dataclass(frozen=True)
class OutlineEntry:
    start_s: float
    end_s: float
    label: str


@dataclass(frozen=True)
class LessonContent:
    lesson_id: str
    title: str
    objectives: tuple[str, ...]
    transcript: tuple[TranscriptSegment, ...]
    cells: tuple[Cell, ...]
    checkpoints: tuple[Checkpoint, ...]
    agent_instructions: Mapping[str, str]
    error_catalog: tuple[dict[str, str], ...] = ()
    video_outline: tuple[OutlineEntry, ...] = ()
    editor_language: str = "python"

    def cell(self, cell_id: str) -> Cell:
        for cell in self.cells:
            if cell.cell_id == cell_id:
                return cell
        raise KeyError(cell_id)

    def checkpoint(self, checkpoint_id: str) -> Checkpoint:
        for cp in self.checkpoints:
            if cp.checkpoint_id == checkpoint_id:
                return cp
        raise UnknownCheckpoint(checkpoint_id)

    def editable_cells(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.editable)

    def code_cells(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.kind is CellKind.CODE)

    def to_json(self) -> dict[str, Any]:
        return {
            "lesson_id": self.lesson_id,
            "title": self.title,
            "objectives": list(self.objectives),
            "transcript": [
                {"start_s": s.start_s, "end_s": s.end_s, "text": s.text} for s in self.transcript
            ],
            "cells": [
                {
                    "cell_id": c.cell_id,
                    "kind": c.kind.value,
                    "editable": c.editable,
                    "initial_source": c.initial_source,
                }
                for c in self.cells
            ],
            "checkpoints": [
                {
                    "checkpoint_id": cp.checkpoint_id,
                    "title": cp.title,
                    "target_cells": list(cp.target_cells),
                    "grading_instructions": cp.grading_instructions,
                    **(
                        {"transcript_window": list(cp.transcript_window)}
                        if cp.transcript_window is not None
                        else {}
                    ),
                }
                for cp in self.checkpoints
            ],
            "agent_instructions": dict(self.agent_instructions),
            "error_catalog": [dict(e) for e in self.error_catalog],
            "video_outline": [
                {"start_s": o.start_s, "end_s": o.end_s, "label": o.label}
                for o in self.video_outline
            ],
            "editor_language": self.editor_language,
        }


def parse_lesson(data: Mapping[str, Any]) -> LessonContent:
    """Build and validate a LessonContent from a parsed JSON document."""
    try:
        lesson = LessonContent(
            lesson_id=data["lesson_id"],
            title=data["title"],
            objectives=tuple(data.get("objectives", [])),
            transcript=tuple(
                TranscriptSegment(seg["start_s"], seg["end_s"], seg["text"])
                for seg in data.get("transcript", [])
            ),
            cells=tuple(
                Cell(
                    cell_id=c["cell_id"],
                    kind=CellKind(c["kind"]),
                    editable=bool(c["editable"]),
                    initial_source=c.get("initial_source", ""),
                )
                for c in data.get("cells", [])
            ),
            checkpoints=tuple(
                Checkpoint(
                    checkpoint_id=cp["checkpoint_id"],
                    title=cp["title"],
                    target_cells=tuple(cp["target_cells"]),
                    grading_instructions=cp["grading_instructions"],
                    transcript_window=(
                        tuple(cp["transcript_window"]) if cp.get("transcript_window") else None
                    ),
                )
                for cp in data.get("checkpoints", [])
            ),
            agent_instructions=dict(data.get("agent_instructions", {})),
            error_catalog=tuple(dict(e) for e in data.get("error_catalog", [])),
            video_outline=tuple(
                OutlineEntry(o["start_s"], o["end_s"], o["label"])
                for o in data.get("video_outline", [])
            ),
            editor_language=data.get("editor_language", "python"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LessonParseError(str(data.get("lesson_id", "<bundle>")), repr(exc)) from exc

    problems = lesson_problems(lesson)
    if problems:
        raise LessonValidationError(problems)
    return lesson


def lesson_problems(lesson: LessonContent) -> list[str]:
    problems: list[str] = []
    if not SLUG_RE.match(lesson.lesson_id) or "_" in lesson.lesson_id:
        problems.append(f"lesson_id {lesson.lesson_id!r} is not a URL-safe slug")

    cell_ids = [c.cell_id for c in lesson.cells]
    if len(set(cell_ids)) != len(cell_ids):
        problems.append("duplicate cell ids")
    markdown_ids = {c.cell_id for c in lesson.cells if c.kind is CellKind.MARKDOWN}
    for c in lesson.cells:
        if c.kind is CellKind.MARKDOWN and c.editable:
            problems.append(f"markdown cell {c.cell_id} cannot be editable")

    for seg in lesson.transcript:
        if not (0 <= seg.start_s < seg.end_s):
            problems.append(f"transcript segment [{seg.start_s}, {seg.end_s}] has invalid bounds")
    ordered = sorted(lesson.transcript, key=lambda s: s.start_s)
    if tuple(ordered) != lesson.transcript:
        problems.append("transcript segments not sorted by start time")
    for a, b in zip(ordered, ordered[1:]):
        if b.start_s < a.end_s:
            problems.append(
                f"transcript segments [{a.start_s}, {a.end_s}] and "
                f"[{b.start_s}, {b.end_s}] overlap"
            )

    cp_ids = [cp.checkpoint_id for cp in lesson.checkpoints]
    if len(set(cp_ids)) != len(cp_ids):
        problems.append("duplicate checkpoint ids")
    for cp in lesson.checkpoints:
        if not cp.target_cells:
            problems.append(f"checkpoint {cp.checkpoint_id} has no target cells")
        for cid in cp.target_cells:
            if cid not in cell_ids:
                problems.append(f"checkpoint {cp.checkpoint_id} targets unknown cell {cid}")
            elif cid in markdown_ids:
                problems.append(f"checkpoint {cp.checkpoint_id} targets markdown cell {cid}")
        if not cp.grading_instructions.strip():
            problems.append(f"checkpoint {cp.checkpoint_id} has empty grading instructions")
        if cp.transcript_window is not None and not (
            0 <= cp.transcript_window[0] < cp.transcript_window[1]
        ):
            problems.append(f"checkpoint {cp.checkpoint_id} has invalid transcript window")

    for key in AGENT_INSTRUCTION_KEYS:
        if not lesson.agent_instructions.get(key, "").strip():
            problems.append(f"agent_instructions missing entry for {key!r}")

    for entry in lesson.error_catalog:
        if "pattern" not in entry or "explanation" not in entry:
            problems.append("error catalog entries need pattern and explanation")
            break

    for o in lesson.video_outline:
        if not (0 <= o.start_s < o.end_s):
            problems.append(f"outline entry {o.label!r} has invalid bounds")
    return problems


def load_lesson(path: str | Path) -> LessonContent:
    """Load and fully validate one lesson bundle file."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise LessonParseError(str(path), f"invalid JSON at line {exc.lineno}") from exc
    return parse_lesson(data)


def load_lesson_dir(directory: str | Path) -> dict[str, LessonContent]:
    """Load every ``*.json`` bundle in a directory, keyed by lesson id."""
    lessons: dict[str, LessonContent] = {}
    for path in sorted(Path(directory).glob("*.json")):
        lesson = load_lesson(path)
        if lesson.lesson_id in lessons:
            raise LessonValidationError([f"duplicate lesson id {lesson.lesson_id!r}"])
        lessons[lesson.lesson_id] = lesson
    return lessons


def transcript_window(lesson: LessonContent, checkpoint_id: str) -> tuple[TranscriptSegment, ...]:
    """Transcript segments for the active checkpoint.

    Intersection semantics over the checkpoint's declared window; a lesson
    that declares no window gets the full transcript, and a window beyond the
    transcript end is simply empty.
    """
    cp = lesson.checkpoint(checkpoint_id)
    if cp.transcript_window is None:
        return lesson.transcript
    lo, hi = cp.transcript_window
    return tuple(seg for seg in lesson.transcript if seg.start_s < hi and seg.end_s > lo)
