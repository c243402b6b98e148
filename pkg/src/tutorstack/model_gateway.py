"""The only path to any language model.

Agent specifications (template, temperature, output schema), single-pass
placeholder injection, structured-output completion with validate-and-retry,
and two backends: a deterministic scripted backend for offline runs and tests,
and an HTTP provider backend for live deployments. No other module renders
prompts or contacts a provider.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import re
import threading
from collections import Counter, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

from .domain import (
    GradeResult,
    ReportKind,
    ReportValidationError,
    SpecialistReport,
    validate_report,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_RETRIES = 2
DEFAULT_CALL_TIMEOUT_S = 30.0

# Paper-default sampling temperatures; deliberately configurable, they were
# never systematically tuned. Autograder and feedback lean deterministic.
DEFAULT_TEMPERATURES = {
    "video": 0.3,
    "guidance": 0.4,
    "code": 0.2,
    "synthesizer": 0.5,
    "autograder": 0.2,
    "feedback": 0.2,
}


class GatewayError(Exception):
    pass


class UnboundPlaceholder(GatewayError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"template placeholder {{{name}}} has no binding")


class SchemaFailure(GatewayError):
    def __init__(self, agent: str, attempts: int, violations: list):
        self.agent = agent
        self.attempts = attempts
        self.violations = violations
        detail = ", ".join(str(v) for v in violations)
        super().__init__(f"{agent}: invalid structured output after {attempts} attempts: {detail}")


class EmptyResponse(GatewayError):
    pass


class BackendUnavailable(GatewayError):
    pass


class Timeout(GatewayError):
    pass


class NoMatchingRule(GatewayError):
    def __init__(self, agent: str, prompt: str):
        digest = hashlib.sha256(prompt.encode()).hexdigest()[:12]
        super().__init__(f"no scripted rule matches agent={agent} prompt_sha={digest}")


@dataclass(frozen=True)
class AgentSpec:
    """One agent's calling convention: template, temperature, output schema."""

    name: str
    instruction_template: str
    temperature: float
    output_schema: ReportKind | None = None
    thinking_enabled: bool = False
    tools: tuple[str, ...] = ()


_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


def render_template(template: str, bindings: Mapping[str, str]) -> str:
    """Substitute every ``{name}`` placeholder in a single pass.

    Bindings are inserted verbatim; braces inside a binding are never
    re-expanded. Unused bindings are logged, not fatal.
    """
    used: set[str] = set()

    def replace(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise UnboundPlaceholder(name)
        used.add(name)
        return str(bindings[name])

    rendered = _PLACEHOLDER_RE.sub(replace, template)
    for name in bindings:
        if name not in used:
            log.warning("unused template binding: %s", name)
    return rendered


# ---------------------------------------------------------------------------
# Backends


class ModelBackend(Protocol):
    kind: str

    async def complete(
        self,
        *,
        agent: str,
        prompt: str,
        temperature: float,
        schema: str | None,
        tools: Sequence[str],
    ) -> str | Mapping[str, Any]: ...


@dataclass(frozen=True)
class ScriptedRule:
    """One canned response: first rule whose predicate matches the prompt fires."""

    agent: str
    contains: str = ""
    regex: str | None = None
    response: str | Mapping[str, Any] = ""
    delay_ms: float = 0.0
    fail: str | None = None  # "unavailable" simulates a dead backend

    def matches(self, agent: str, prompt: str) -> bool:
        if self.agent != agent:
            return False
        if self.regex is not None:
            return re.search(self.regex, prompt) is not None
        return self.contains in prompt


class ScriptedBackend:
    """Deterministic rule-driven stand-in for a model provider.

    No network activity; injected delays are honored with a real sleep so
    latency-structure tests measure genuine concurrency.
    """

    kind = "scripted"

    def __init__(self, rules: Sequence[ScriptedRule]):
        self._rules = tuple(rules)

    async def complete(
        self,
        *,
        agent: str,
        prompt: str,
        temperature: float,
        schema: str | None,
        tools: Sequence[str],
    ) -> str | Mapping[str, Any]:
        for rule in self._rules:
            if rule.matches(agent, prompt):
                if rule.delay_ms:
                    await asyncio.sleep(rule.delay_ms / 1000.0)
                if rule.fail == "unavailable":
                    raise BackendUnavailable(f"scripted backend unavailable for {agent}")
                return rule.response
        raise NoMatchingRule(agent, prompt)


def load_scripted_rules(path: str | Path) -> list[ScriptedRule]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [rules_from_json(item) for item in data]


def rules_from_json(item: Mapping[str, Any]) -> ScriptedRule:
    return ScriptedRule(
        agent=item["agent"],
        contains=item.get("contains", ""),
        regex=item.get("regex"),
        response=item.get("response", ""),
        delay_ms=float(item.get("delay_ms", 0.0)),
        fail=item.get("fail"),
    )


class HttpProviderBackend:
    """POSTs completions to a configured provider endpoint.

    Credentials come from an environment variable reference, never from
    config files.
    """

    kind = "http_provider"

    def __init__(self, endpoint: str, model: str, api_key: str, timeout_s: float = 60.0):
        import httpx  # imported here: the one provider-facing HTTP client

        self._endpoint = endpoint
        self._model = model
        self._client = httpx.AsyncClient(
            timeout=timeout_s, headers={"Authorization": f"Bearer {api_key}"}
        )

    async def complete(
        self,
        *,
        agent: str,
        prompt: str,
        temperature: float,
        schema: str | None,
        tools: Sequence[str],
    ) -> str | Mapping[str, Any]:
        import httpx

        body = {
            "model": self._model,
            "temperature": temperature,
            "system": f"agent:{agent}",
            "user": prompt,
        }
        if schema is not None:
            body["response_schema"] = schema
        try:
            resp = await self._client.post(self._endpoint, json=body)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if resp.status_code >= 500:
            raise BackendUnavailable(f"provider returned {resp.status_code}")
        data = resp.json()
        return data.get("content", "")


@dataclass(frozen=True)
class CallRecord:
    """One backend invocation, captured at the gateway seam."""

    agent: str
    prompt: str
    tools: tuple[str, ...]
    response_text: str
    attempt: int


class ModelGateway:
    """Completion entry point shared by every agent in the system.

    Counts calls per agent, keeps a bounded call log for structural
    assertions, and optionally appends each call to a capture file.
    """

    def __init__(
        self,
        backend: ModelBackend,
        *,
        max_retries: int = DEFAULT_MAX_RETRIES,
        call_timeout_s: float = DEFAULT_CALL_TIMEOUT_S,
        capture_path: str | Path | None = None,
        call_log_size: int = 5_000,
    ):
        self.backend = backend
        self.max_retries = max_retries
        self.call_timeout_s = call_timeout_s
        self._counts: Counter[str] = Counter()
        self._records: deque[CallRecord] = deque(maxlen=call_log_size)
        self._capture_path = Path(capture_path) if capture_path else None
        self._lock = threading.Lock()

    # -- bookkeeping

    def call_count(self, agent: str | None = None) -> int:
        with self._lock:
            return sum(self._counts.values()) if agent is None else self._counts[agent]

    def call_records(self, agent: str | None = None) -> list[CallRecord]:
        with self._lock:
            records = list(self._records)
        return records if agent is None else [r for r in records if r.agent == agent]

    def _record(self, record: CallRecord) -> None:
        with self._lock:
            self._counts[record.agent] += 1
            self._records.append(record)
        if self._capture_path is not None:
            line = json.dumps(
                {
                    "agent": record.agent,
                    "prompt": record.prompt,
                    "tools": list(record.tools),
                    "response": record.response_text,
                    "attempt": record.attempt,
                }
            )
            with self._lock:
                with self._capture_path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    async def _invoke(self, spec: AgentSpec, prompt: str, attempt: int) -> str | Mapping[str, Any]:
        schema = spec.output_schema.value if spec.output_schema else None
        try:
            response = await asyncio.wait_for(
                self.backend.complete(
                    agent=spec.name,
                    prompt=prompt,
                    temperature=spec.temperature,
                    schema=schema,
                    tools=spec.tools,
                ),
                timeout=self.call_timeout_s,
            )
        except asyncio.TimeoutError as exc:
            raise Timeout(f"{spec.name}: no response within {self.call_timeout_s}s") from exc
        text = response if isinstance(response, str) else json.dumps(response)
        self._record(CallRecord(spec.name, prompt, tuple(spec.tools), text, attempt))
        return response

    # -- completions

    async def complete_structured(
        self, spec: AgentSpec, bindings: Mapping[str, str]
    ) -> SpecialistReport | GradeResult:
        """Render, call, validate; on schema failure retry with the violation
        list appended to the prompt. Never returns a partially valid record."""
        if spec.output_schema is None:
            raise ValueError(f"{spec.name} has no output schema")
        base_prompt = render_template(spec.instruction_template, bindings)
        prompt = base_prompt
        violations: list = []
        attempts = self.max_retries + 1
        for attempt in range(1, attempts + 1):
            response = await self._invoke(spec, prompt, attempt)
            raw = _as_record(response)
            if raw is None:
                violations = [f"response is not a JSON object: {str(response)[:80]!r}"]
            else:
                try:
                    return validate_report(spec.output_schema, raw)
                except ReportValidationError as exc:
                    violations = list(exc.violations)
            detail = ", ".join(str(v) for v in violations)
            prompt = (
                prompt
                + f"\n\n[validation-retry attempt={attempt + 1}] The previous response"
                + f" failed validation: {detail}. Respond again with the complete"
                + " JSON object and nothing else."
            )
        raise SchemaFailure(spec.name, attempts, violations)

    async def complete_text(self, spec: AgentSpec, bindings: Mapping[str, str]) -> str:
        """As complete_structured, but free text; empty responses are errors."""
        base_prompt = render_template(spec.instruction_template, bindings)
        prompt = base_prompt
        attempts = self.max_retries + 1
        for attempt in range(1, attempts + 1):
            response = await self._invoke(spec, prompt, attempt)
            text = response if isinstance(response, str) else json.dumps(response)
            if text.strip():
                return text.strip()
            prompt = (
                prompt
                + f"\n\n[validation-retry attempt={attempt + 1}] The previous response"
                + " was empty. Respond with the answer text."
            )
        raise EmptyResponse(f"{spec.name}: empty response after {attempts} attempts")


def _as_record(response: str | Mapping[str, Any]) -> dict[str, Any] | None:
    if isinstance(response, Mapping):
        return dict(response)
    try:
        parsed = json.loads(response)
    except (json.JSONDecodeError, TypeError):
        return None
    return dict(parsed) if isinstance(parsed, dict) else None


def build_backend(config: Mapping[str, Any]) -> ModelBackend:
    """Construct the configured backend. Exactly one backend per gateway."""
    kind = config.get("kind", "scripted")
    if kind == "scripted":
        rules_path = config.get("rules_path")
        rules = load_scripted_rules(rules_path) if rules_path else []
        return ScriptedBackend(rules)
    if kind == "http_provider":
        import os

        key_env = config["api_key_env"]
        api_key = os.environ.get(key_env, "")
        if not api_key:
            raise BackendUnavailable(f"provider credential env {key_env} is not set")
        return HttpProviderBackend(
            endpoint=config["endpoint"],
            model=config.get("model", "default"),
            api_key=api_key,
        )
    raise ValueError(f"unknown backend kind {kind!r}")
