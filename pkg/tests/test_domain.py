"""Report validation, payload schemas, and turn-timing invariants."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from tutorstack.domain import (
    CodeReport,
    EventCategory,
    GradeResult,
    REPORT_FIELDS,
    ReportKind,
    ReportValidationError,
    TurnTiming,
    VideoReport,
    Violation,
    ViolationKind,
    event_category_schema,
    is_pseudonym,
    payload_violations,
    report_violations,
    serialize_report,
    validate_report,
)

GOOD_VIDEO = {
    "relevant_segment": "02:10-03:40",
    "key_insight": "Bloch sphere shows phase",
    "coverage_gap": "none",
}


def test_validate_video_report_happy_path():
    report = validate_report(ReportKind.VIDEO, GOOD_VIDEO)
    assert isinstance(report, VideoReport)
    assert report.coverage_gap == "none"


def test_empty_and_missing_fields_reported_together():
    raw = {"relevant_segment": "02:10", "key_insight": ""}
    violations = report_violations(ReportKind.VIDEO, raw)
    assert Violation(ViolationKind.EMPTY, "key_insight") in violations
    assert Violation(ViolationKind.MISSING, "coverage_gap") in violations
    assert len(violations) == 2


def test_unknown_field_rejected_not_ignored():
    raw = {
        "diagnosis": "H applied twice",
        "correct_components": "imports",
        "next_step": "remove the second H",
        "alternative_approach": "use a single gate",
        "solution_code": "print('x')",
    }
    violations = report_violations(ReportKind.CODE, raw)
    assert violations == [Violation(ViolationKind.UNKNOWN, "solution_code")]


def test_field_length_cap():
    raw = dict(GOOD_VIDEO, key_insight="x" * 1001)
    violations = report_violations(ReportKind.VIDEO, raw)
    assert violations == [Violation(ViolationKind.TOO_LONG, "key_insight")]
    assert report_violations(ReportKind.VIDEO, raw, max_field_length=2000) == []


def test_grade_requires_boolean_passed():
    violations = report_violations(ReportKind.GRADE, {"passed": "yes", "reasoning": "ok"})
    assert violations == [Violation(ViolationKind.INVALID, "passed")]
    result = validate_report(ReportKind.GRADE, {"passed": False, "reasoning": "empty cells"})
    assert isinstance(result, GradeResult) and result.passed is False


def test_validation_error_carries_all_violations():
    with pytest.raises(ReportValidationError) as exc_info:
        validate_report(ReportKind.GUIDANCE, {})
    assert len(exc_info.value.violations) == 3


_TEXT = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=200
).filter(lambda s: s.strip())


def _report_strategy(kind: ReportKind):
    return st.fixed_dictionaries({name: _TEXT for name in REPORT_FIELDS[kind]})


@given(st.sampled_from([ReportKind.VIDEO, ReportKind.GUIDANCE, ReportKind.CODE]).flatmap(
    lambda kind: st.tuples(st.just(kind), _report_strategy(kind))
))
def test_roundtrip_serialize_then_revalidate(kind_and_raw):
    kind, raw = kind_and_raw
    report = validate_report(kind, raw)
    again = validate_report(kind, serialize_report(report))
    assert again == report


@given(
    st.sampled_from([ReportKind.VIDEO, ReportKind.GUIDANCE, ReportKind.CODE]).flatmap(
        lambda kind: st.tuples(st.just(kind), _report_strategy(kind))
    ),
    st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=20),
)
def test_reject_unknown_property(kind_and_raw, extra_key):
    kind, raw = kind_and_raw
    if extra_key in REPORT_FIELDS[kind]:
        return
    poisoned = dict(raw, **{extra_key: "filler"})
    violations = report_violations(kind, poisoned)
    assert violations == [Violation(ViolationKind.UNKNOWN, extra_key)]


# -- event payload schemas


def test_chat_schema_fields():
    schema = event_category_schema(EventCategory.CHAT_MESSAGE)
    assert schema.required == ("sender", "text")


def test_video_schema_fields():
    schema = event_category_schema(EventCategory.VIDEO_PLAYBACK)
    assert schema.required == ("action", "position_s")
    assert set(schema.optional) == {"seek_from_s", "seek_to_s"}
    assert schema.enums["action"] == ("play", "pause", "seek")


def test_checkpoint_schema_fields():
    schema = event_category_schema(EventCategory.CHECKPOINT_EVALUATION)
    assert schema.required == ("checkpoint_id", "cell_id", "passed", "reasoning")


def test_schema_total_over_enum():
    for category in EventCategory:
        assert event_category_schema(category).required


def test_seek_requires_both_positions():
    bad = payload_violations(
        EventCategory.VIDEO_PLAYBACK, {"action": "seek", "position_s": 100}
    )
    assert set(bad) == {"seek_from_s", "seek_to_s"}
    ok = payload_violations(
        EventCategory.VIDEO_PLAYBACK,
        {"action": "seek", "position_s": 100, "seek_from_s": 120.0, "seek_to_s": 100.0},
    )
    assert ok == []


def test_payload_unknown_field_rejected():
    bad = payload_violations(
        EventCategory.CHAT_MESSAGE, {"sender": "student", "text": "hi", "email": "x@y"}
    )
    assert bad == ["email"]


# -- timing


def test_turn_timing_bounds():
    timing = TurnTiming(l_video=400, l_guidance=600, l_code=500, l_synth=300, wall=910)
    assert timing.parallel_max() == 600
    assert timing.within_overhead_budget(250)
    assert not TurnTiming(400, 600, 500, 300, 1200).within_overhead_budget(250)
    assert not TurnTiming(400, 600, 500, 300, 899).within_overhead_budget(250)


def test_pseudonym_shape():
    assert is_pseudonym("c2cade30acee0e1b")
    assert not is_pseudonym("C2CADE30ACEE0E1B")
    assert not is_pseudonym("abc")
