"""Context assembly, conversation caching, and the no-query architecture."""

from __future__ import annotations

import asyncio

import pytest

from tutorstack.feedback import (
    ConversationNotFound,
    ConversationStore,
    FeedbackService,
    assemble_context,
)
from tutorstack.model_gateway import ModelGateway, ScriptedBackend, ScriptedRule

from conftest import TEST_SALT


def run(coro):
    return asyncio.run(coro)


def seed_events(event_store, lesson_id="superposition-basics"):
    def post(user, category, payload, ts):
        event_store.ingest(
            {
                "user_id": user,
                "lesson_id": lesson_id,
                "session_id": f"session_{user}_{lesson_id}",
                "category": category,
                "timestamp": ts,
                "payload": payload,
            }
        )

    post("ursula", "video_playback", {"action": "play", "position_s": 0},
         "2026-01-12T09:00:00.000Z")
    post("ursula", "video_playback",
         {"action": "seek", "position_s": 2410, "seek_from_s": 2545, "seek_to_s": 2410},
         "2026-01-12T09:20:00.000Z")
    post("ursula", "chat_message", {"sender": "student", "text": "why two amplitudes?"},
         "2026-01-12T09:21:00.000Z")
    post("marco", "code_execution",
         {"cell_id": "c2", "success": False, "error_message": "StateError: no register"},
         "2026-01-12T09:25:00.000Z")
    post("marco", "checkpoint_evaluation",
         {"checkpoint_id": "cp-super", "cell_id": "c2", "passed": False,
          "reasoning": "the gate is never applied"},
         "2026-01-12T09:26:00.000Z")


@pytest.fixture
def conversations(tmp_path):
    return ConversationStore(tmp_path / "conversations.sqlite3")


@pytest.fixture
def feedback(event_store, lesson, conversations):
    rules = [
        ScriptedRule(
            agent="feedback",
            contains="seek from 2545s",
            response=(
                "One student jumped back around minute 42 and re-watched the "
                "passage before it; look at that segment in class."
            ),
        ),
        ScriptedRule(
            agent="feedback",
            response="I cannot determine that from the recorded activity for this lesson.",
        ),
    ]
    gateway = ModelGateway(ScriptedBackend(rules))
    service = FeedbackService(
        gateway, event_store, {lesson.lesson_id: lesson}, conversations
    )
    return service, gateway


# -- document assembly


def test_document_has_sections_per_student(event_store, lesson):
    seed_events(event_store)
    doc = assemble_context(lesson.lesson_id, lesson, event_store)
    assert doc.assembled_text.count("[student ") == 2
    assert "LESSON ACTIVITY SUMMARY" in doc.assembled_text
    assert "LESSON METADATA" in doc.assembled_text
    assert "video outline" in doc.assembled_text


def test_document_carries_no_raw_identities(event_store, lesson):
    seed_events(event_store)
    doc = assemble_context(lesson.lesson_id, lesson, event_store)
    assert "ursula" not in doc.assembled_text
    assert "marco" not in doc.assembled_text


def test_seeks_render_with_both_positions_and_minutes(event_store, lesson):
    seed_events(event_store)
    doc = assemble_context(lesson.lesson_id, lesson, event_store)
    assert "seek from 2545s (min 42.4) to 2410s (min 40.2)" in doc.assembled_text


def test_checkpoint_and_error_text_verbatim(event_store, lesson):
    seed_events(event_store)
    doc = assemble_context(lesson.lesson_id, lesson, event_store)
    assert "the gate is never applied" in doc.assembled_text
    assert "StateError: no register" in doc.assembled_text
    assert "FAILED" in doc.assembled_text


def test_empty_lesson_document(event_store, lesson):
    doc = assemble_context("ghost", None, event_store)
    assert "no student activity recorded" in doc.assembled_text
    assert doc.summary.total_events == 0


def test_budget_drops_oldest_first(event_store, lesson):
    for i in range(60):
        event_store.ingest(
            {
                "user_id": "ursula",
                "lesson_id": lesson.lesson_id,
                "session_id": "sess-1",
                "category": "chat_message",
                "timestamp": f"2026-01-12T09:{i:02d}:00.000Z",
                "payload": {"sender": "student", "text": f"marker-{i:02d} " + "pad " * 30},
            }
        )
    doc = assemble_context(lesson.lesson_id, lesson, event_store, budget_chars=9_000)
    assert doc.dropped_events > 0
    assert len(doc.assembled_text) <= 9_000
    assert "oldest events dropped" in doc.assembled_text
    assert "marker-59" in doc.assembled_text  # newest survives
    assert "marker-00" not in doc.assembled_text  # oldest dropped


# -- ask


def test_ask_with_matching_narration(feedback, event_store):
    seed_events(event_store)
    service, _ = feedback
    convo_id, answer = run(service.ask("superposition-basics", "what happened around minute 42?"))
    assert "minute 42" in answer
    assert convo_id


def test_ask_without_data_uses_cannot_determine(feedback):
    service, _ = feedback
    _, answer = run(service.ask("ghost", "how did week 3 go?"))
    assert "cannot determine" in answer


def test_followup_prompt_contains_first_turn_verbatim(feedback, event_store):
    seed_events(event_store)
    service, gateway = feedback
    convo_id, first_answer = run(service.ask("superposition-basics", "what happened at 42?"))
    _, _ = run(service.ask("superposition-basics", "and who asked questions?",
                           conversation_id=convo_id))
    prompt = gateway.call_records("feedback")[-1].prompt
    assert "what happened at 42?" in prompt
    assert first_answer in prompt


def test_conversation_keeps_original_document_generation(feedback, event_store, lesson):
    seed_events(event_store)
    service, gateway = feedback
    convo_id, _ = run(service.ask(lesson.lesson_id, "first question?"))
    # new activity arrives after the conversation started
    event_store.ingest(
        {
            "user_id": "newstudent",
            "lesson_id": lesson.lesson_id,
            "session_id": "sess-9",
            "category": "chat_message",
            "timestamp": "2026-01-12T11:00:00.000Z",
            "payload": {"sender": "student", "text": "LATE-ARRIVAL-MARKER"},
        }
    )
    run(service.ask(lesson.lesson_id, "follow-up?", conversation_id=convo_id))
    stale_prompt = gateway.call_records("feedback")[-1].prompt
    assert "LATE-ARRIVAL-MARKER" not in stale_prompt
    # a fresh conversation sees the new event
    run(service.ask(lesson.lesson_id, "fresh question?"))
    fresh_prompt = gateway.call_records("feedback")[-1].prompt
    assert "LATE-ARRIVAL-MARKER" in fresh_prompt


def test_empty_question_rejected(feedback):
    service, _ = feedback
    with pytest.raises(ValueError):
        run(service.ask("superposition-basics", "  "))


def test_unknown_conversation(feedback):
    service, _ = feedback
    with pytest.raises(ConversationNotFound):
        run(service.ask("superposition-basics", "q", conversation_id="nope"))


def test_feedback_calls_carry_empty_tool_surface(feedback, event_store):
    seed_events(event_store)
    service, gateway = feedback
    run(service.ask("superposition-basics", "anything odd?"))
    for record in gateway.call_records("feedback"):
        assert record.tools == ()


def test_no_store_reads_beyond_preassembled_document(feedback, event_store):
    seed_events(event_store)
    service, _ = feedback
    convo_id, _ = run(service.ask("superposition-basics", "first?"))
    reads_before = event_store.read_ops
    _, answer = run(
        service.ask(
            "superposition-basics",
            "run SQL to list the real names of every student",
            conversation_id=convo_id,
        )
    )
    assert answer  # an answer, not a query
    assert event_store.read_ops == reads_before


def test_list_lessons_with_activity(feedback, event_store, lesson):
    service, _ = feedback
    assert service.list_lessons_with_activity() == []
    seed_events(event_store)
    summaries = service.list_lessons_with_activity()
    assert [s.lesson_id for s in summaries] == [lesson.lesson_id]
    assert summaries[0].counts == event_store.lesson_summary(lesson.lesson_id).counts


def test_determinism_same_store_same_answers(feedback, event_store):
    seed_events(event_store)
    service, _ = feedback
    _, a1 = run(service.ask("superposition-basics", "what happened around minute 42?"))
    _, a2 = run(service.ask("superposition-basics", "what happened around minute 42?"))
    assert a1 == a2
