"""Scenario templates.

table1     five synthetic students across five modules; the counted module
           carries the pilot's exact per-category interaction volume and the
           whole store lands on the pilot's reported total.
deadzone   engagement collapse: most of the cohort stops watching inside the
           [40, 44]-minute band while every checkpoint covers earlier content.
confusion  two checkpoint failures that look identical in a gradebook: one
           wrong variable name, one operator-misuse runtime error.
mini       a small mixed scenario for persistence and determinism tests.

Scenarios are deterministic scripts, not models of learning: equal seeds
produce equal scenarios, and replay is byte-stable modulo server-assigned ids
and wall-clock timestamps.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

BASE_EPOCH_MS = 1_768_208_400_000  # 2026-01-12T09:00:00Z, virtual course morning

# Table-row interaction volume for the counted module, and the store-wide
# total. The category rows sum to 8,898; the remaining 1,730 events live in
# the four sibling modules, which is what makes both numbers achievable at
# once.
TABLE1_COUNTS = {
    "video_playback": 7_666,
    "chat_message": 334,
    "code_execution": 387,
    "code_editor": 147,
    "session_management": 124,
    "checkpoint_evaluation": 32,
    "error": 208,
}
TABLE1_STORE_TOTAL = 10_628
TABLE1_EXEC_PASSED = 298
TABLE1_EXEC_FAILED = 89

WRONG_NAME_REASONING = (
    "The checkpoint instructions require the result to be stored in a "
    "variable named bell_state; the submission stores it in bellstate, so "
    "the required output cannot be verified even though the printed values "
    "look right."
)
OPERATOR_ERROR_MESSAGE = (
    "QiskitError: cannot compose operators with '*': elementwise products "
    "are not operator composition; use numpy.dot to compose matrices."
)
OPERATOR_REASONING = (
    "The submission multiplies the operator arrays with Python's '*' "
    "operator where numpy.dot is needed, so execution raises QiskitError "
    "before any state is produced; the approach criteria are not met."
)

DEADZONE_ANSWER = (
    "A cluster of students stopped watching around minute 42 and scrubbed "
    "back and forth just before that point instead of continuing. Checkpoint "
    "coverage ends before minute 44, where the outline moves into "
    "multi-qubit states, so nothing after that transition is assessed. "
    "Consider adding a checkpoint that reaches past minute 44."
)
CONFUSION_ANSWER = (
    "The two failures are not the same kind of mistake. One submission "
    "stored the result in bellstate instead of the required bell_state, "
    "which is a reading slip, while the other hit a QiskitError from using "
    "'*' where numpy.dot composes operators, which is an implementation "
    "gap worth a short demo."
)
CANNOT_DETERMINE_ANSWER = (
    "I cannot determine that from the recorded activity for this lesson."
)


class UnknownTemplate(KeyError):
    pass


@dataclass
class Scenario:
    template: str
    seed: int
    base_epoch_ms: int
    roster: list[str]
    lessons: list[dict[str, Any]]
    rules: list[dict[str, Any]]
    scripts: dict[str, list[dict[str, Any]]]
    expected: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "template": self.template,
            "seed": self.seed,
            "base_epoch_ms": self.base_epoch_ms,
            "roster": list(self.roster),
            "lessons": self.lessons,
            "rules": self.rules,
            "scripts": self.scripts,
            "expected": self.expected,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Scenario":
        return cls(
            template=data["template"],
            seed=data["seed"],
            base_epoch_ms=data["base_epoch_ms"],
            roster=list(data["roster"]),
            lessons=list(data["lessons"]),
            rules=list(data["rules"]),
            scripts={k: list(v) for k, v in data["scripts"].items()},
            expected=dict(data.get("expected", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Shared content helpers


def _default_instructions() -> dict[str, str]:
    return {
        "video": "Cite the exact segment by its timestamps.",
        "guidance": "These are graduate students; engage with the mathematics.",
        "code": "Check operator composition and required variable names first.",
        "synthesizer": "Keep the tone encouraging but concrete.",
        "autograder": (
            "Require the named variables from the instructions and reject "
            "hard-coded outputs."
        ),
    }


def _teaching_rules(delays: tuple[float, float, float, float] = (8, 10, 9, 12)) -> list[dict]:
    d_video, d_guidance, d_code, d_synth = delays
    return [
        {
            "agent": "video",
            "response": {
                "relevant_segment": "the segment right before the checkpoint",
                "key_insight": "the lecture derives exactly this construction",
                "coverage_gap": "none",
            },
            "delay_ms": d_video,
        },
        {
            "agent": "guidance",
            "response": {
                "conceptual_gap": "amplitudes versus probabilities",
                "pedagogical_approach": "ask what a repeated measurement would show",
                "misconception_flag": "none",
            },
            "delay_ms": d_guidance,
        },
        {
            "agent": "code",
            "response": {
                "diagnosis": "the working cell is incomplete but not wrong",
                "correct_components": "imports and register setup",
                "next_step": "apply the gate before measuring",
                "alternative_approach": "build the state vector directly",
            },
            "delay_ms": d_code,
        },
        {
            "agent": "synthesizer",
            "response": (
                "Your setup is right so far, and the lecture segment just before "
                "this checkpoint walks through the same construction. Apply the "
                "gate before you measure, then run the cell."
            ),
            "delay_ms": d_synth,
        },
    ]


def _module_lesson(
    lesson_id: str,
    title: str,
    *,
    n_cells: int = 4,
    outline: list[dict[str, Any]] | None = None,
    checkpoints: list[dict[str, Any]] | None = None,
    transcript: list[dict[str, Any]] | None = None,
) -> dict[str, Any]:
    cells: list[dict[str, Any]] = [
        {
            "cell_id": "intro",
            "kind": "markdown",
            "editable": False,
            "initial_source": f"# {title}",
        }
    ]
    for i in range(1, n_cells + 1):
        cells.append(
            {
                "cell_id": f"w{i}",
                "kind": "code",
                "editable": True,
                "initial_source": f"# Work cell {i}: write your solution here\n",
            }
        )
    return {
        "lesson_id": lesson_id,
        "title": title,
        "objectives": [f"Objective for {title}"],
        "transcript": transcript
        or [
            {"start_s": 0, "end_s": 1200, "text": f"{title}: first half of the lecture."},
            {"start_s": 1200, "end_s": 2400, "text": f"{title}: second half of the lecture."},
        ],
        "cells": cells,
        "checkpoints": checkpoints
        or [
            {
                "checkpoint_id": f"cp{i}",
                "title": f"Checkpoint {i} of {title}",
                "target_cells": [f"w{i}"],
                "grading_instructions": (
                    "Output criteria: the cell prints the expected values. "
                    "Approach criteria: the construction is computed, not hard-coded."
                ),
                "transcript_window": [0, 2400],
            }
            for i in range(1, n_cells + 1)
        ],
        "agent_instructions": _default_instructions(),
        "error_catalog": [
            {
                "pattern": "QiskitError",
                "explanation": "usually an operator composed with '*' instead of numpy.dot",
            }
        ],
        "video_outline": outline
        or [
            {"start_s": 0, "end_s": 1200, "label": f"{title}: part one"},
            {"start_s": 1200, "end_s": 2400, "label": f"{title}: part two"},
        ],
        "editor_language": "python",
    }


def _split_count(total: int, parts: int, rng: random.Random) -> list[int]:
    """Deterministic near-even split that sums exactly to total."""
    base = total // parts
    counts = [base] * parts
    for i in rng.sample(range(parts), total - base * parts):
        counts[i] += 1
    return counts


def _video_payload(rng: random.Random, max_pos_s: float) -> dict[str, Any]:
    action = rng.choices(["play", "pause", "seek"], weights=[5, 4, 2])[0]
    position = round(rng.uniform(0, max_pos_s), 1)
    payload: dict[str, Any] = {"action": action, "position_s": position}
    if action == "seek":
        payload["seek_from_s"] = round(min(max_pos_s, position + rng.uniform(5, 120)), 1)
        payload["seek_to_s"] = position
    return payload


CHAT_POOL = (
    "why does the measurement change the state?",
    "is the phase observable here?",
    "my counts look uneven, is that expected?",
    "which segment derives this identity?",
    "what does the tensor product mean physically?",
    "how do I know the circuit is entangled?",
)


class _ScriptBuilder:
    """Accumulates one student's actions with monotonically increasing
    virtual timestamps."""

    def __init__(self, start_ms: int, step_ms: int = 900):
        self.actions: list[dict[str, Any]] = []
        self.at_ms = start_ms
        self.step_ms = step_ms

    def _tick(self) -> int:
        self.at_ms += self.step_ms
        return self.at_ms

    def add(self, op: str, lesson: str, **fields: Any) -> None:
        self.actions.append({"op": op, "lesson": lesson, "at_ms": self._tick(), **fields})

    def event(self, lesson: str, category: str, payload: dict[str, Any]) -> None:
        self.add("event", lesson, category=category, payload=payload)


# ---------------------------------------------------------------------------
# Templates


def _generate_table1(seed: int) -> Scenario:
    rng = random.Random(seed)
    roster = [f"u{i:02d}x" for i in range(1, 6)]
    primary = "module-1"
    siblings = ["module-2", "module-3", "module-4", "module-5"]

    lessons = [
        _module_lesson(primary, "Foundations of qubit states", n_cells=4)
    ] + [_module_lesson(lid, f"Module {lid[-1]} lecture", n_cells=2) for lid in siblings]

    n = len(roster)
    video_split = _split_count(TABLE1_COUNTS["video_playback"], n, rng)
    chat_split = _split_count(TABLE1_COUNTS["chat_message"] // 2, n, rng)
    exec_split = _split_count(TABLE1_COUNTS["code_execution"], n, rng)
    fail_split = _split_count(TABLE1_EXEC_FAILED, n, rng)
    edit_split = _split_count(TABLE1_COUNTS["code_editor"], n, rng)
    session_pairs = _split_count(TABLE1_COUNTS["session_management"] // 2, n, rng)
    grade_split = _split_count(TABLE1_COUNTS["checkpoint_evaluation"], n, rng)
    error_split = _split_count(TABLE1_COUNTS["error"], n, rng)

    # Sibling volume: 1,730 events bring the store to the reported total.
    sibling_total = TABLE1_STORE_TOTAL - sum(TABLE1_COUNTS.values())
    sibling_sizes = _split_count(sibling_total, len(siblings), rng)
    sibling_session_pairs = 6  # per sibling module: 12 session events

    scripts: dict[str, list[dict[str, Any]]] = {}
    expected_per_lesson: dict[str, dict[str, int]] = {primary: dict(TABLE1_COUNTS)}

    for idx, user in enumerate(roster):
        builder = _ScriptBuilder(start_ms=idx * 211)
        builder.add("create_session", primary)

        pairs = session_pairs[idx]
        videos = video_split[idx]
        chats = chat_split[idx]
        execs = exec_split[idx]
        fails = fail_split[idx]
        edits = edit_split[idx]
        grades = grade_split[idx]
        errors = error_split[idx]

        # success/fail order for this student's executions, fixed by seed
        exec_outcomes = [False] * fails + [True] * (execs - fails)
        rng.shuffle(exec_outcomes)

        per_sitting_videos = _split_count(videos, pairs, rng)
        per_sitting_chats = _split_count(chats, pairs, rng)
        per_sitting_execs = _split_count(execs, pairs, rng)
        # the four mandatory first-sitting edits come out of the edit budget
        per_sitting_edits = _split_count(edits - 4, pairs, rng)
        per_sitting_grades = _split_count(grades, pairs, rng)
        per_sitting_errors = _split_count(errors, pairs, rng)

        exec_cursor = 0
        edit_counter = 0
        grade_counter = 0
        for sitting in range(pairs):
            builder.event(primary, "session_management", {"action": "start"})
            if sitting == 0:
                # touch every checkpoint target before any grading happens
                for i in range(1, 5):
                    builder.add(
                        "edit_cell",
                        primary,
                        cell_id=f"w{i}",
                        source=f"result_{i} = build_state({i})\nprint(result_{i})",
                    )
                    edit_counter += 1
            for _ in range(per_sitting_videos[sitting]):
                builder.event(primary, "video_playback", _video_payload(rng, 4800))
            for _ in range(per_sitting_edits[sitting]):
                edit_counter += 1
                cell = f"w{(edit_counter % 4) + 1}"
                builder.add(
                    "edit_cell",
                    primary,
                    cell_id=cell,
                    source=f"result = build_state({edit_counter})\nprint(result)",
                )
            for _ in range(per_sitting_execs[sitting]):
                ok = exec_outcomes[exec_cursor]
                exec_cursor += 1
                payload: dict[str, Any] = {
                    "cell_id": f"w{(exec_cursor % 4) + 1}",
                    "success": ok,
                    "duration_ms": rng.randint(40, 900),
                }
                if not ok:
                    payload["error_type"] = "QiskitError"
                    payload["error_message"] = "QiskitError: invalid operator composition"
                builder.event(primary, "code_execution", payload)
            for _ in range(per_sitting_errors[sitting]):
                builder.event(
                    primary,
                    "error",
                    {
                        "message": "Traceback: operator shape mismatch in work cell",
                        "error_type": "QiskitError",
                    },
                )
            for _ in range(per_sitting_chats[sitting]):
                builder.add("chat", primary, message=rng.choice(CHAT_POOL))
            for _ in range(per_sitting_grades[sitting]):
                grade_counter += 1
                builder.add("grade", primary, checkpoint_id=f"cp{(grade_counter % 4) + 1}")
            builder.event(primary, "session_management", {"action": "end"})

        scripts[user] = builder.actions

    # sibling modules: video plus session lifecycle, no server round-trips
    for sibling_idx, lesson_id in enumerate(siblings):
        size = sibling_sizes[sibling_idx]
        session_events = sibling_session_pairs * 2
        video_events = size - session_events
        expected_per_lesson[lesson_id] = {
            "video_playback": video_events,
            "session_management": session_events,
        }
        per_student_videos = _split_count(video_events, n, rng)
        per_student_pairs = _split_count(sibling_session_pairs, n, rng)
        for idx, user in enumerate(roster):
            builder = _ScriptBuilder(start_ms=3_600_000 * (sibling_idx + 1) + idx * 307)
            videos_left = per_student_videos[idx]
            pairs = per_student_pairs[idx]
            if pairs == 0 and videos_left == 0:
                continue
            if pairs == 0:
                for _ in range(videos_left):
                    builder.event(lesson_id, "video_playback", _video_payload(rng, 2400))
            else:
                chunk = _split_count(videos_left, pairs, rng)
                for sitting in range(pairs):
                    builder.event(lesson_id, "session_management", {"action": "start"})
                    for _ in range(chunk[sitting]):
                        builder.event(lesson_id, "video_playback", _video_payload(rng, 2400))
                    builder.event(lesson_id, "session_management", {"action": "end"})
            scripts[user].extend(builder.actions)

    rules = _teaching_rules() + [
        {
            "agent": "autograder",
            "response": {
                "passed": True,
                "reasoning": "output matches and the construction is computed, not hard-coded",
            },
        },
        {"agent": "feedback", "response": CANNOT_DETERMINE_ANSWER},
    ]

    return Scenario(
        template="table1",
        seed=seed,
        base_epoch_ms=BASE_EPOCH_MS,
        roster=roster,
        lessons=lessons,
        rules=rules,
        scripts=scripts,
        expected={
            "per_lesson": expected_per_lesson,
            "store_total": TABLE1_STORE_TOTAL,
            "counted_lesson": primary,
            "code_success": {"passed": TABLE1_EXEC_PASSED, "failed": TABLE1_EXEC_FAILED},
        },
    )


def _generate_deadzone(seed: int) -> Scenario:
    rng = random.Random(seed)
    roster = [f"u{i:02d}x" for i in range(1, 6)]
    lesson_id = "module-2"
    outline = [
        {"start_s": 0, "end_s": 600, "label": "recap of single-qubit states"},
        {"start_s": 600, "end_s": 1500, "label": "single-qubit gates worked examples"},
        {"start_s": 1500, "end_s": 2400, "label": "measurement statistics"},
        {"start_s": 2400, "end_s": 2640, "label": "bridge: from one qubit to many"},
        {"start_s": 2640, "end_s": 3600, "label": "multi-qubit states and entanglement"},
    ]
    transcript = [
        {"start_s": 0, "end_s": 1200, "text": "Single-qubit review and gate algebra."},
        {"start_s": 1200, "end_s": 2400, "text": "Measurement statistics in practice."},
        {"start_s": 2400, "end_s": 3600, "text": "Scaling up to multi-qubit systems."},
    ]
    checkpoints = [
        {
            "checkpoint_id": f"cp{i}",
            "title": title,
            "target_cells": [f"w{i}"],
            "grading_instructions": (
                "Output criteria: printed values match the lecture example. "
                "Approach criteria: gates are applied rather than states hard-coded."
            ),
            "transcript_window": window,
        }
        for i, (title, window) in enumerate(
            [
                ("State preparation", [0, 600]),
                ("Gate application", [600, 1500]),
                ("Measurement counts", [1500, 2400]),
                ("Bridge exercise", [2400, 2640]),
            ],
            start=1,
        )
    ]
    lessons = [
        _module_lesson(
            lesson_id,
            "Single-qubit operations",
            n_cells=4,
            outline=outline,
            checkpoints=checkpoints,
            transcript=transcript,
        )
    ]

    scripts: dict[str, list[dict[str, Any]]] = {}
    droppers = set(roster[:4])  # four of five stop inside the dead zone
    for idx, user in enumerate(roster):
        builder = _ScriptBuilder(start_ms=idx * 401)
        builder.add("create_session", lesson_id)
        builder.event(lesson_id, "session_management", {"action": "start"})
        builder.event(lesson_id, "video_playback", {"action": "play", "position_s": 0})
        for position in (600, 1200, 1800):
            builder.event(
                lesson_id,
                "video_playback",
                {"action": "pause", "position_s": float(position)},
            )
            builder.event(
                lesson_id,
                "video_playback",
                {"action": "play", "position_s": float(position)},
            )
        for i in range(1, 5):
            builder.add(
                "edit_cell",
                lesson_id,
                cell_id=f"w{i}",
                source=f"counts_{i} = run_example({i})\nprint(counts_{i})",
            )
            builder.add("grade", lesson_id, checkpoint_id=f"cp{i}")
        if user in droppers:
            # seek cluster and drop-off inside [2400, 2640]s
            for _ in range(3):
                seek_from = round(rng.uniform(2480, 2635), 1)
                seek_to = round(rng.uniform(2405, seek_from - 20), 1)
                builder.event(
                    lesson_id,
                    "video_playback",
                    {
                        "action": "seek",
                        "position_s": seek_to,
                        "seek_from_s": seek_from,
                        "seek_to_s": seek_to,
                    },
                )
            # drop-off pause always lands in the minute-42 band so the
            # rendered document deterministically reads "min 42.x"
            builder.event(
                lesson_id,
                "video_playback",
                {"action": "pause", "position_s": round(rng.uniform(2520, 2579), 1)},
            )
        else:
            builder.event(lesson_id, "video_playback", {"action": "pause", "position_s": 3520.0})
        builder.event(lesson_id, "session_management", {"action": "end"})
        scripts[user] = builder.actions

    expected_per_lesson = {
        lesson_id: {
            "video_playback": sum(
                sum(1 for a in acts if a["op"] == "event" and a["category"] == "video_playback")
                for acts in scripts.values()
            ),
            "session_management": 10,
            "checkpoint_evaluation": 20,
            "code_editor": 20,
            "chat_message": 0,
            "code_execution": 0,
            "error": 0,
        }
    }

    rules = _teaching_rules() + [
        {
            "agent": "autograder",
            "response": {
                "passed": True,
                "reasoning": "gates are applied and the counts match the lecture example",
            },
        },
        {"agent": "feedback", "contains": "(min 42", "response": DEADZONE_ANSWER},
        {"agent": "feedback", "response": CANNOT_DETERMINE_ANSWER},
    ]

    return Scenario(
        template="deadzone",
        seed=seed,
        base_epoch_ms=BASE_EPOCH_MS,
        roster=roster,
        lessons=lessons,
        rules=rules,
        scripts=scripts,
        expected={
            "per_lesson": expected_per_lesson,
            "store_total": sum(expected_per_lesson[lesson_id].values()),
            "counted_lesson": lesson_id,
        },
    )


def _generate_confusion(seed: int) -> Scenario:
    roster = ["u01x", "u02x"]
    lesson_id = "module-3"
    lesson = _module_lesson(lesson_id, "Composing operators", n_cells=2)
    lesson["checkpoints"] = [
        {
            "checkpoint_id": "cp-bell",
            "title": "Build the Bell state",
            "target_cells": ["w1"],
            "grading_instructions": (
                "Output criteria: print the Bell state amplitudes from a variable "
                "named bell_state. Approach criteria: compose the operators with "
                "numpy.dot (or an equivalent matrix product), not elementwise '*'."
            ),
            "transcript_window": [0, 2400],
        }
    ]
    lessons = [lesson]

    scripts: dict[str, list[dict[str, Any]]] = {}

    wrong_name = _ScriptBuilder(start_ms=0)
    wrong_name.add("create_session", lesson_id)
    wrong_name.event(lesson_id, "session_management", {"action": "start"})
    wrong_name.add(
        "edit_cell",
        lesson_id,
        cell_id="w1",
        source="bellstate = compose_circuit()\nprint(bellstate)",
    )
    wrong_name.event(
        lesson_id,
        "code_execution",
        {"cell_id": "w1", "success": True, "duration_ms": 120},
    )
    wrong_name.add(
        "record_result", lesson_id, cell_id="w1", output="[0.7071, 0, 0, 0.7071]", error=None
    )
    wrong_name.add("grade", lesson_id, checkpoint_id="cp-bell")
    wrong_name.event(lesson_id, "session_management", {"action": "end"})
    scripts["u01x"] = wrong_name.actions

    op_misuse = _ScriptBuilder(start_ms=500)
    op_misuse.add("create_session", lesson_id)
    op_misuse.event(lesson_id, "session_management", {"action": "start"})
    op_misuse.add(
        "edit_cell",
        lesson_id,
        cell_id="w1",
        source="bell_state = op_h * op_cx\nprint(bell_state)",
    )
    op_misuse.event(
        lesson_id,
        "code_execution",
        {
            "cell_id": "w1",
            "success": False,
            "error_type": "QiskitError",
            "error_message": OPERATOR_ERROR_MESSAGE,
            "duration_ms": 95,
        },
    )
    op_misuse.event(
        lesson_id,
        "error",
        {"message": OPERATOR_ERROR_MESSAGE, "error_type": "QiskitError", "cell_id": "w1"},
    )
    op_misuse.add(
        "record_result", lesson_id, cell_id="w1", output="", error=OPERATOR_ERROR_MESSAGE
    )
    op_misuse.add("grade", lesson_id, checkpoint_id="cp-bell")
    op_misuse.event(lesson_id, "session_management", {"action": "end"})
    scripts["u02x"] = op_misuse.actions

    rules = _teaching_rules() + [
        {
            "agent": "autograder",
            "contains": "bellstate =",
            "response": {"passed": False, "reasoning": WRONG_NAME_REASONING},
        },
        {
            "agent": "autograder",
            "contains": "op_h * op_cx",
            "response": {"passed": False, "reasoning": OPERATOR_REASONING},
        },
        {
            "agent": "autograder",
            "response": {"passed": True, "reasoning": "both criteria satisfied"},
        },
        {"agent": "feedback", "contains": "bellstate", "response": CONFUSION_ANSWER},
        {"agent": "feedback", "response": CANNOT_DETERMINE_ANSWER},
    ]

    expected_per_lesson = {
        lesson_id: {
            "video_playback": 0,
            "chat_message": 0,
            "code_execution": 2,
            "code_editor": 2,
            "session_management": 4,
            "checkpoint_evaluation": 2,
            "error": 1,
        }
    }
    return Scenario(
        template="confusion",
        seed=seed,
        base_epoch_ms=BASE_EPOCH_MS,
        roster=roster,
        lessons=lessons,
        rules=rules,
        scripts=scripts,
        expected={
            "per_lesson": expected_per_lesson,
            "store_total": sum(expected_per_lesson[lesson_id].values()),
            "counted_lesson": lesson_id,
            "failure_texts": [WRONG_NAME_REASONING, OPERATOR_ERROR_MESSAGE],
        },
    )


def _generate_mini(seed: int) -> Scenario:
    rng = random.Random(seed)
    roster = ["u01x", "u02x"]
    lesson_id = "module-9"
    lessons = [_module_lesson(lesson_id, "Mini module", n_cells=2)]
    scripts: dict[str, list[dict[str, Any]]] = {}
    for idx, user in enumerate(roster):
        builder = _ScriptBuilder(start_ms=idx * 173)
        builder.add("create_session", lesson_id)
        builder.event(lesson_id, "session_management", {"action": "start"})
        for i in range(3):
            builder.event(lesson_id, "video_playback", _video_payload(rng, 2400))
        builder.add(
            "edit_cell",
            lesson_id,
            cell_id="w1",
            source=f"answer = solve({idx})\nprint(answer)",
        )
        builder.add("chat", lesson_id, message=rng.choice(CHAT_POOL))
        builder.add("grade", lesson_id, checkpoint_id="cp1")
        builder.add("chat", lesson_id, message=rng.choice(CHAT_POOL))
        builder.add(
            "edit_cell",
            lesson_id,
            cell_id="w2",
            source=f"followup = refine(answer, {idx})\nprint(followup)",
        )
        builder.event(lesson_id, "video_playback", _video_payload(rng, 2400))
        builder.add("chat", lesson_id, message=rng.choice(CHAT_POOL))
        builder.add("grade", lesson_id, checkpoint_id="cp2")
        builder.add("chat", lesson_id, message=rng.choice(CHAT_POOL))
        builder.event(lesson_id, "session_management", {"action": "end"})
        scripts[user] = builder.actions
    rules = _teaching_rules() + [
        {
            "agent": "autograder",
            "response": {"passed": True, "reasoning": "computed, and the output matches"},
        },
        {"agent": "feedback", "response": CANNOT_DETERMINE_ANSWER},
    ]
    expected_per_lesson = {
        lesson_id: {
            "video_playback": 8,
            "chat_message": 16,
            "code_execution": 0,
            "code_editor": 4,
            "session_management": 4,
            "checkpoint_evaluation": 4,
            "error": 0,
        }
    }
    return Scenario(
        template="mini",
        seed=seed,
        base_epoch_ms=BASE_EPOCH_MS,
        roster=roster,
        lessons=lessons,
        rules=rules,
        scripts=scripts,
        expected={
            "per_lesson": expected_per_lesson,
            "store_total": sum(expected_per_lesson[lesson_id].values()),
            "counted_lesson": lesson_id,
        },
    )


_TEMPLATES = {
    "table1": _generate_table1,
    "deadzone": _generate_deadzone,
    "confusion": _generate_confusion,
    "mini": _generate_mini,
}


def generate(template: str, seed: int) -> Scenario:
    try:
        builder = _TEMPLATES[template]
    except KeyError:
        raise UnknownTemplate(template) from None
    return builder(seed)


def split_scenario(scenario: Scenario, fraction: float = 0.5) -> tuple[Scenario, Scenario]:
    """Split every student's script at ``fraction``; the halves replay against
    the same sessions, so the pair exercises persistence across restarts.
    Expectation blocks are dropped (they describe the whole scenario)."""
    first_scripts: dict[str, list[dict[str, Any]]] = {}
    second_scripts: dict[str, list[dict[str, Any]]] = {}
    for user, actions in scenario.scripts.items():
        cut = max(1, int(len(actions) * fraction))
        first_scripts[user] = actions[:cut]
        second_scripts[user] = actions[cut:]

    def clone(scripts: dict[str, list[dict[str, Any]]]) -> Scenario:
        return Scenario(
            template=scenario.template,
            seed=scenario.seed,
            base_epoch_ms=scenario.base_epoch_ms,
            roster=list(scenario.roster),
            lessons=scenario.lessons,
            rules=scenario.rules,
            scripts=scripts,
            expected={},
        )

    return clone(first_scripts), clone(second_scripts)
