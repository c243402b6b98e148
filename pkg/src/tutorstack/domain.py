"""Shared domain records and validation rules.

Everything exchanged between modules lives here: the three specialist report
schemas, the grade result, interaction events, session state, and per-turn
timing. Validation is pure and returns complete violation lists so callers
can feed them back to a model on retry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, NewType

DEFAULT_FIELD_LENGTH_CAP = 1_000

# URL-safe slug shared by user, lesson, cell, and checkpoint identifiers.
SLUG_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9.-]*$")

Pseudonym = NewType("Pseudonym", str)

PSEUDONYM_HEX_CHARS = 16
_PSEUDONYM_RE = re.compile(r"^[0-9a-f]{%d}$" % PSEUDONYM_HEX_CHARS)


def is_pseudonym(value: str) -> bool:
    return bool(_PSEUDONYM_RE.match(value))


# ---------------------------------------------------------------------------
# Specialist reports and the grade result


@dataclass(frozen=True)
class VideoReport:
    relevant_segment: str
    key_insight: str
    coverage_gap: str


@dataclass(frozen=True)
class GuidanceReport:
    conceptual_gap: str
    pedagogical_approach: str
    misconception_flag: str


@dataclass(frozen=True)
class CodeReport:
    diagnosis: str
    correct_components: str
    next_step: str
    alternative_approach: str


@dataclass(frozen=True)
class GradeResult:
    passed: bool
    reasoning: str


SpecialistReport = VideoReport | GuidanceReport | CodeReport

class ReportKind(str, Enum):
    VIDEO = "video"
    GUIDANCE = "guidance"
    CODE = "code"
    GRADE = "grade"


_REPORT_TYPES: dict[ReportKind, type] = {
    ReportKind.VIDEO: VideoReport,
    ReportKind.GUIDANCE: GuidanceReport,
    ReportKind.CODE: CodeReport,
    ReportKind.GRADE: GradeResult,
}

REPORT_FIELDS: dict[ReportKind, tuple[str, ...]] = {
    ReportKind.VIDEO: ("relevant_segment", "key_insight", "coverage_gap"),
    ReportKind.GUIDANCE: ("conceptual_gap", "pedagogical_approach", "misconception_flag"),
    ReportKind.CODE: ("diagnosis", "correct_components", "next_step", "alternative_approach"),
    ReportKind.GRADE: ("passed", "reasoning"),
}

# Fields where "nothing to flag" is reported as the literal string "none"
# instead of an empty value, so non-emptiness stays uniformly enforceable.
NONE_SENTINEL_FIELDS = {"coverage_gap", "misconception_flag"}


class ViolationKind(str, Enum):
    MISSING = "MissingField"
    EMPTY = "EmptyField"
    UNKNOWN = "UnknownField"
    TOO_LONG = "FieldTooLong"
    INVALID = "InvalidField"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    field: str

    def __str__(self) -> str:
        return f"{self.kind.value}({self.field})"


class ReportValidationError(ValueError):
    """Raised when an untyped record fails report validation."""

    def __init__(self, kind: ReportKind, violations: list[Violation]):
        self.kind = kind
        self.violations = violations
        detail = ", ".join(str(v) for v in violations)
        super().__init__(f"{kind.value} report invalid: {detail}")


def report_violations(
    kind: ReportKind,
    raw: Mapping[str, Any],
    max_field_length: int = DEFAULT_FIELD_LENGTH_CAP,
) -> list[Violation]:
    """Collect every violation in ``raw`` against the schema for ``kind``.

    Unknown fields are rejected rather than ignored; extra keys are how
    agents smuggle filler past a trimmed schema.
    """
    declared = REPORT_FIELDS[kind]
    violations: list[Violation] = []
    for name in declared:
        if name not in raw:
            violations.append(Violation(ViolationKind.MISSING, name))
            continue
        value = raw[name]
        if kind is ReportKind.GRADE and name == "passed":
            if not isinstance(value, bool):
                violations.append(Violation(ViolationKind.INVALID, name))
            continue
        if not isinstance(value, str):
            violations.append(Violation(ViolationKind.INVALID, name))
        elif not value.strip():
            violations.append(Violation(ViolationKind.EMPTY, name))
        elif len(value) > max_field_length:
            violations.append(Violation(ViolationKind.TOO_LONG, name))
    for name in raw:
        if name not in declared:
            violations.append(Violation(ViolationKind.UNKNOWN, name))
    return violations


def validate_report(
    kind: ReportKind,
    raw: Mapping[str, Any],
    max_field_length: int = DEFAULT_FIELD_LENGTH_CAP,
) -> SpecialistReport | GradeResult:
    """Build the typed record for ``kind``, or raise with the full violation list."""
    violations = report_violations(kind, raw, max_field_length)
    if violations:
        raise ReportValidationError(kind, violations)
    return _REPORT_TYPES[kind](**{name: raw[name] for name in REPORT_FIELDS[kind]})


def serialize_report(report: SpecialistReport | GradeResult) -> dict[str, Any]:
    kind = report_kind_of(report)
    return {name: getattr(report, name) for name in REPORT_FIELDS[kind]}


def report_kind_of(report: SpecialistReport | GradeResult) -> ReportKind:
    for kind, cls in _REPORT_TYPES.items():
        if isinstance(report, cls):
            return kind
    raise TypeError(f"not a report type: {type(report)!r}")


# ---------------------------------------------------------------------------
# Interaction events


class EventCategory(str, Enum):
    VIDEO_PLAYBACK = "video_playback"
    CHAT_MESSAGE = "chat_message"
    CODE_EXECUTION = "code_execution"
    CODE_EDITOR = "code_editor"
    CHECKPOINT_EVALUATION = "checkpoint_evaluation"
    SESSION_MANAGEMENT = "session_management"
    ERROR = "error"


@dataclass(frozen=True)
class PayloadSchema:
    """Required and optional payload fields for one event category."""

    required: tuple[str, ...]
    optional: tuple[str, ...] = ()
    enums: Mapping[str, tuple[str, ...]] = field(default_factory=dict)


_PAYLOAD_SCHEMAS: dict[EventCategory, PayloadSchema] = {
    EventCategory.VIDEO_PLAYBACK: PayloadSchema(
        required=("action", "position_s"),
        optional=("seek_from_s", "seek_to_s"),
        enums={"action": ("play", "pause", "seek")},
    ),
    EventCategory.CHAT_MESSAGE: PayloadSchema(
        required=("sender", "text"),
        enums={"sender": ("student", "ai")},
    ),
    EventCategory.CODE_EXECUTION: PayloadSchema(
        required=("cell_id", "success"),
        optional=("error_type", "error_message", "output", "duration_ms"),
    ),
    EventCategory.CODE_EDITOR: PayloadSchema(
        required=("cell_id",),
        optional=("action",),
    ),
    EventCategory.CHECKPOINT_EVALUATION: PayloadSchema(
        required=("checkpoint_id", "cell_id", "passed", "reasoning"),
    ),
    EventCategory.SESSION_MANAGEMENT: PayloadSchema(
        required=("action",),
        enums={"action": ("start", "end", "resume")},
    ),
    EventCategory.ERROR: PayloadSchema(
        required=("message",),
        optional=("error_type", "cell_id", "source"),
    ),
}

_NUMERIC_PAYLOAD_FIELDS = {"position_s", "seek_from_s", "seek_to_s", "duration_ms"}
_BOOLEAN_PAYLOAD_FIELDS = {"success", "passed"}


def event_category_schema(category: EventCategory) -> PayloadSchema:
    """The exact payload field schema ingestion validates against. Total over the enum."""
    return _PAYLOAD_SCHEMAS[category]


def payload_violations(category: EventCategory, payload: Mapping[str, Any]) -> list[str]:
    """Field names that make ``payload`` invalid for ``category`` (empty list when valid)."""
    schema = _PAYLOAD_SCHEMAS[category]
    bad: list[str] = []
    for name in schema.required:
        if name not in payload:
            bad.append(name)
    for name in payload:
        if name not in schema.required and name not in schema.optional:
            bad.append(name)
    # Conditional requirement: a seek is meaningless without both positions.
    if category is EventCategory.VIDEO_PLAYBACK and payload.get("action") == "seek":
        for name in ("seek_from_s", "seek_to_s"):
            if name not in payload and name not in bad:
                bad.append(name)
    for name, allowed in schema.enums.items():
        if name in payload and payload[name] not in allowed:
            bad.append(name)
    for name in _NUMERIC_PAYLOAD_FIELDS:
        if name in payload and not isinstance(payload[name], (int, float)):
            bad.append(name)
    for name in _BOOLEAN_PAYLOAD_FIELDS:
        if name in payload and not isinstance(payload[name], bool):
            bad.append(name)
    return bad


@dataclass(frozen=True)
class InteractionEvent:
    """One pseudonymized student action, as stored by the event pipeline."""

    event_id: int
    pseudonym: Pseudonym
    lesson_id: str
    session_id: str
    category: EventCategory
    timestamp_ms: int
    payload: Mapping[str, Any]


# ---------------------------------------------------------------------------
# Session state


@dataclass
class SessionState:
    """Durable per-student, per-lesson working state.

    ``cell_results`` keeps the latest execution output/error per cell so the
    teaching agents and the autograder see the same code *and* outputs.
    """

    session_key: str
    user_id: str
    lesson_id: str
    cell_contents: dict[str, str] = field(default_factory=dict)
    cell_results: dict[str, dict[str, Any]] = field(default_factory=dict)
    completed_checkpoints: set[str] = field(default_factory=set)
    chat_context: list[dict[str, str]] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "session_key": self.session_key,
            "user_id": self.user_id,
            "lesson_id": self.lesson_id,
            "cell_contents": dict(self.cell_contents),
            "cell_results": {k: dict(v) for k, v in self.cell_results.items()},
            "completed_checkpoints": sorted(self.completed_checkpoints),
            "chat_context": [dict(t) for t in self.chat_context],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SessionState":
        return cls(
            session_key=data["session_key"],
            user_id=data["user_id"],
            lesson_id=data["lesson_id"],
            cell_contents=dict(data.get("cell_contents", {})),
            cell_results={k: dict(v) for k, v in data.get("cell_results", {}).items()},
            completed_checkpoints=set(data.get("completed_checkpoints", [])),
            chat_context=[dict(t) for t in data.get("chat_context", [])],
        )


# ---------------------------------------------------------------------------
# Turn timing


@dataclass(frozen=True)
class TurnTiming:
    """Durations (ms) of one teaching turn: the three parallel specialist
    calls, the synthesizer call, and the whole turn."""

    l_video: float
    l_guidance: float
    l_code: float
    l_synth: float
    wall: float

    def parallel_max(self) -> float:
        return max(self.l_video, self.l_guidance, self.l_code)

    def within_overhead_budget(self, overhead_budget_ms: float = 250.0) -> bool:
        lower = self.parallel_max() + self.l_synth
        return lower <= self.wall <= lower + overhead_budget_ms

    def to_json(self) -> dict[str, float]:
        return {
            "l_video": self.l_video,
            "l_guidance": self.l_guidance,
            "l_code": self.l_code,
            "l_synth": self.l_synth,
            "wall": self.wall,
        }
