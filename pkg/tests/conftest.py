"""Shared fixtures: a small lesson, scripted rules, and wired-up components."""

from __future__ import annotations

import pytest

from tutorstack.emit import EventEmitter, LocalEventSink
from tutorstack.events import EventStore
from tutorstack.lessons import parse_lesson
from tutorstack.model_gateway import ModelGateway, ScriptedBackend, ScriptedRule
from tutorstack.session_store import SessionStore

TEST_SALT = "f3a9c2d4e6b81057a1b2c3d4e5f60718"

LESSON_DOC = {
    "lesson_id": "superposition-basics",
    "title": "Superposition basics",
    "objectives": ["prepare a superposition", "measure in the computational basis"],
    "transcript": [
        {"start_s": 0, "end_s": 120, "text": "Welcome back; today we build superpositions."},
        {"start_s": 120, "end_s": 300, "text": "A single gate takes |0> to an equal mix."},
        {"start_s": 300, "end_s": 600, "text": "Measurement collapses the state."},
    ],
    "cells": [
        {"cell_id": "c1", "kind": "markdown", "editable": False, "initial_source": "# Intro"},
        {
            "cell_id": "c2",
            "kind": "code",
            "editable": True,
            "initial_source": "# Build the circuit here\n",
        },
        {
            "cell_id": "c3",
            "kind": "code",
            "editable": True,
            "initial_source": "# Measure here\n",
        },
    ],
    "checkpoints": [
        {
            "checkpoint_id": "cp-super",
            "title": "Prepare a superposition",
            "target_cells": ["c2"],
            "grading_instructions": (
                "Output criteria: the state vector has equal amplitudes. "
                "Approach criteria: a gate is applied rather than hard-coding amplitudes."
            ),
            "transcript_window": [0, 300],
        },
        {
            "checkpoint_id": "cp-measure",
            "title": "Measure the state",
            "target_cells": ["c3"],
            "grading_instructions": (
                "Output criteria: counts close to 50/50. "
                "Approach criteria: measurement is performed on the prepared circuit."
            ),
        },
    ],
    "agent_instructions": {
        "video": "Point to the exact segment; these are graduate students.",
        "guidance": "Engage with the mathematics; do not oversimplify.",
        "code": "Watch for amplitude hard-coding.",
        "synthesizer": "Keep the tone encouraging but precise.",
        "autograder": "Hard-coded amplitudes never pass the approach criteria.",
    },
    "error_catalog": [
        {"pattern": "StateError", "explanation": "the register was never initialized"}
    ],
    "video_outline": [
        {"start_s": 0, "end_s": 300, "label": "building superpositions"},
        {"start_s": 300, "end_s": 600, "label": "measurement"},
    ],
    "editor_language": "python",
}

GOOD_VIDEO_RESPONSE = {
    "relevant_segment": "120s-300s",
    "key_insight": "a single gate creates the equal mix",
    "coverage_gap": "none",
}
GOOD_GUIDANCE_RESPONSE = {
    "conceptual_gap": "amplitudes versus probabilities",
    "pedagogical_approach": "ask what measuring twice would show",
    "misconception_flag": "none",
}
GOOD_CODE_RESPONSE = {
    "diagnosis": "no error; the circuit in c2 is incomplete",
    "correct_components": "imports and register setup",
    "next_step": "apply the gate to qubit 0 in c2",
    "alternative_approach": "construct the state vector directly",
}
SYNTH_RESPONSE = (
    "Your setup in c2 is right so far, but the circuit never applies the gate "
    "that creates the mix. Add the gate to qubit 0 and run the cell."
)


def default_rules() -> list[ScriptedRule]:
    return [
        ScriptedRule(agent="video", response=GOOD_VIDEO_RESPONSE, delay_ms=5),
        ScriptedRule(agent="guidance", response=GOOD_GUIDANCE_RESPONSE, delay_ms=5),
        ScriptedRule(agent="code", response=GOOD_CODE_RESPONSE, delay_ms=5),
        ScriptedRule(agent="synthesizer", response=SYNTH_RESPONSE, delay_ms=5),
        ScriptedRule(
            agent="autograder",
            response={"passed": True, "reasoning": "output and approach criteria both satisfied"},
        ),
        ScriptedRule(
            agent="feedback",
            response="I cannot determine that from the recorded activity for this lesson.",
        ),
    ]


@pytest.fixture
def lesson():
    return parse_lesson(LESSON_DOC)


@pytest.fixture
def gateway():
    return ModelGateway(ScriptedBackend(default_rules()))


@pytest.fixture
def sessions(tmp_path):
    return SessionStore(tmp_path / "sessions.sqlite3", locks_dir=tmp_path / "locks")


@pytest.fixture
def event_store(tmp_path):
    store = EventStore(tmp_path / "events", TEST_SALT)
    yield store
    store.close()


@pytest.fixture
def emitter(event_store):
    return EventEmitter(LocalEventSink(event_store))
