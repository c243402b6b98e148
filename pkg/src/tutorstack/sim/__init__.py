"""Classroom simulator: deterministic synthetic cohorts driven through the
real service endpoints, with reports checked against declared expectations."""

from .scenarios import Scenario, UnknownTemplate, generate, split_scenario
from .replay import EndpointConfig, ReplayError, RunReport, replay, self_host_replay
from .report import render_report

__all__ = [
    "EndpointConfig",
    "ReplayError",
    "RunReport",
    "Scenario",
    "UnknownTemplate",
    "generate",
    "render_report",
    "replay",
    "self_host_replay",
    "split_scenario",
]
