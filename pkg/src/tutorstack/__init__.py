"""Parallel specialist-agent tutoring stack.

Layers: a teaching pipeline (three parallel specialists feeding one
synthesizer, plus a checkpoint autograder), an operational layer (session
store, pseudonymizing event pipeline, HTTP services), an instructor feedback
agent over pseudonymized per-lesson activity, and a deterministic classroom
simulator that drives the whole stack offline.
"""

__version__ = "0.1.0"
