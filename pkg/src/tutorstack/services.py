"""The HTTP surface: four services, bearer auth, health, request logging.

teaching  POST /run, session endpoints, /execute proxy
autograde POST /grade
events    POST /events (fire-and-forget callers)
feedback  GET /feedback/lessons, POST /feedback/ask

Dev mode runs all four listeners in one process; production runs one service
per process (the classroom simulator's fault tests rely on being able to kill
them independently). /health never requires the token; everything else does.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import re
import time
from pathlib import Path

import uvicorn
from fastapi import Depends, FastAPI, HTTPException, Request, Response, status
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .autograder import Autograder, GradingUnavailable
from .config import SERVICE_NAMES, GatewayConfig, load_config
from .emit import EventEmitter, EventSink, HttpEventSink
from .events import EventStore, MissingSalt, SchemaRejection, StorageFailure
from .feedback import ConversationNotFound, ConversationStore, FeedbackService
from .lessons import UnknownCheckpoint, load_lesson_dir
from .model_gateway import GatewayError, ModelGateway, build_backend
from .session_store import InvalidId, SessionNotFound, SessionStore, session_key as make_session_key
from .teaching import TeachingOrchestrator

log = logging.getLogger(__name__)

_SESSION_KEY_IN_PATH = re.compile(r"session_[^_/]+_")


def _redact(path: str) -> str:
    return _SESSION_KEY_IN_PATH.sub("session_[redacted]_", path)


def _auth_dependency(token: str):
    def check(request: Request) -> None:
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status.HTTP_401_UNAUTHORIZED, "missing or invalid bearer token")

    return check


def _install_middleware(app: FastAPI, service: str) -> None:
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.middleware("http")
    async def access_log(request: Request, call_next):
        start = time.monotonic()
        response = await call_next(request)
        log.info(
            "%s %s %s %d %.1fms",
            service,
            request.method,
            _redact(request.url.path),
            response.status_code,
            (time.monotonic() - start) * 1000,
        )
        return response


def _gateway_for(cfg: GatewayConfig, service: str) -> ModelGateway:
    capture = None
    if cfg.capture_dir:
        capture = Path(cfg.capture_dir) / f"model_calls_{service}.jsonl"
        capture.parent.mkdir(parents=True, exist_ok=True)
    return ModelGateway(build_backend(cfg.backend), capture_path=capture)


# ---------------------------------------------------------------------------
# Request bodies


class RunRequest(BaseModel):
    session_id: str
    message: str


class GradeRequest(BaseModel):
    session_id: str
    checkpoint_id: str


class SessionCreateRequest(BaseModel):
    user_id: str
    lesson_id: str


class CellEditRequest(BaseModel):
    source: str


class CellResultRequest(BaseModel):
    output: str = ""
    error: str | None = None


class ExecuteRequest(BaseModel):
    session_id: str
    cell_id: str
    code: str


class AskRequest(BaseModel):
    lesson_id: str
    question: str
    conversation_id: str | None = None


# ---------------------------------------------------------------------------
# Apps


def build_teaching_app(cfg: GatewayConfig, sink: EventSink | None = None) -> FastAPI:
    token = cfg.token()
    lessons = load_lesson_dir(cfg.lesson_dir)
    sessions = SessionStore(cfg.session_db)
    gateway = _gateway_for(cfg, "teaching")
    emitter = EventEmitter(sink or HttpEventSink(cfg.service_url("events"), token))
    orchestrator = TeachingOrchestrator(
        gateway,
        sessions,
        lessons,
        emitter,
        chat_history_turns=cfg.chat_history_turns,
        overhead_budget_ms=cfg.overhead_budget_ms,
    )

    app = FastAPI(title="teaching")
    _install_middleware(app, "teaching")
    auth = Depends(_auth_dependency(token))
    app.state.gateway = gateway
    app.state.sessions = sessions

    @app.get("/health")
    async def health():
        ok = sessions.healthy()
        body = {
            "status": "ok" if ok else "degraded",
            "service": "teaching",
            "backend": gateway.backend.kind,
            "store_reachable": ok,
            "model_calls": gateway.call_count(),
        }
        return JSONResponse(body, status_code=200 if ok else 503)

    @app.post("/run")
    async def run_turn(body: RunRequest, _=auth):
        try:
            result = await orchestrator.handle_chat_turn(body.session_id, body.message)
        except SessionNotFound:
            raise HTTPException(404, "session not found")
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return {
            "response": result.text,
            "timing": result.timing.to_json(),
            "format_findings": [f.value for f in result.format_findings],
            "degraded": result.degraded,
        }

    @app.post("/sessions")
    async def create_session(body: SessionCreateRequest, response: Response, _=auth):
        lesson = lessons.get(body.lesson_id)
        if lesson is None:
            raise HTTPException(404, f"unknown lesson {body.lesson_id}")
        try:
            key = make_session_key(body.user_id, body.lesson_id)
            existed = sessions.exists(key)
            state = sessions.create(body.user_id, lesson)
        except InvalidId as exc:
            raise HTTPException(400, str(exc))
        response.status_code = 200 if existed else 201
        return state.to_json()

    @app.get("/sessions/{key}")
    async def get_session(key: str, _=auth):
        try:
            return sessions.load(key).to_json()
        except SessionNotFound:
            raise HTTPException(404, "session not found")

    @app.put("/sessions/{key}/cells/{cell_id}")
    async def edit_cell(key: str, cell_id: str, body: CellEditRequest, _=auth):
        try:
            state = sessions.load(key)
        except SessionNotFound:
            raise HTTPException(404, "session not found")
        lesson = lessons[state.lesson_id]
        try:
            cell = lesson.cell(cell_id)
        except KeyError:
            raise HTTPException(400, f"unknown cell {cell_id}")
        if not cell.editable:
            raise HTTPException(400, f"cell {cell_id} is not editable")
        async with sessions.session_lock(key):
            state = sessions.load(key)
            state.cell_contents[cell_id] = body.source
            sessions.save(key, state)
        await emitter.emit(
            user_id=state.user_id,
            lesson_id=state.lesson_id,
            session_id=key,
            category="code_editor",
            payload={"cell_id": cell_id, "action": "edit"},
        )
        return {"ok": True}

    @app.post("/sessions/{key}/cells/{cell_id}/result")
    async def record_result(key: str, cell_id: str, body: CellResultRequest, _=auth):
        # Execution outcome lands in the session so the teaching agents and
        # the autograder see the same outputs the student saw.
        try:
            async with sessions.session_lock(key):
                state = sessions.load(key)
                state.cell_results[cell_id] = {"output": body.output, "error": body.error}
                sessions.save(key, state)
        except SessionNotFound:
            raise HTTPException(404, "session not found")
        return {"ok": True}

    @app.post("/execute")
    async def execute(body: ExecuteRequest, _=auth):
        if not cfg.executor_url:
            raise HTTPException(503, "no execution service configured")
        try:
            state = sessions.load(body.session_id)
        except SessionNotFound:
            raise HTTPException(404, "session not found")
        import httpx

        try:
            async with httpx.AsyncClient(timeout=60.0) as client:
                resp = await client.post(
                    f"{cfg.executor_url}/execute",
                    json={
                        "session_id": body.session_id,
                        "cell_id": body.cell_id,
                        "code": body.code,
                    },
                )
        except httpx.HTTPError as exc:
            raise HTTPException(503, f"execution service unreachable: {exc}")
        if resp.status_code >= 400:
            raise HTTPException(503, "execution service error")
        result = resp.json()
        async with sessions.session_lock(body.session_id):
            state = sessions.load(body.session_id)
            state.cell_contents[body.cell_id] = body.code
            state.cell_results[body.cell_id] = {
                "output": result.get("result_repr") or result.get("stdout", ""),
                "error": (result.get("error") or {}).get("message")
                if result.get("error")
                else None,
            }
            sessions.save(body.session_id, state)
        return result

    return app


def build_autograde_app(cfg: GatewayConfig, sink: EventSink | None = None) -> FastAPI:
    token = cfg.token()
    lessons = load_lesson_dir(cfg.lesson_dir)
    sessions = SessionStore(cfg.session_db)
    gateway = _gateway_for(cfg, "autograde")
    emitter = EventEmitter(sink or HttpEventSink(cfg.service_url("events"), token))
    grader = Autograder(gateway, sessions, lessons, emitter)

    app = FastAPI(title="autograde")
    _install_middleware(app, "autograde")
    auth = Depends(_auth_dependency(token))
    app.state.gateway = gateway

    @app.get("/health")
    async def health():
        ok = sessions.healthy()
        return JSONResponse(
            {
                "status": "ok" if ok else "degraded",
                "service": "autograde",
                "backend": gateway.backend.kind,
                "store_reachable": ok,
                "model_calls": gateway.call_count(),
            },
            status_code=200 if ok else 503,
        )

    @app.post("/grade")
    async def grade(body: GradeRequest, _=auth):
        try:
            result = await grader.handle_submission(body.session_id, body.checkpoint_id)
        except SessionNotFound:
            raise HTTPException(404, "session not found")
        except UnknownCheckpoint:
            raise HTTPException(404, "unknown checkpoint")
        except GradingUnavailable:
            raise HTTPException(503, "grading temporarily unavailable; please retry")
        return {"passed": result.passed, "reasoning": result.reasoning}

    return app


def build_events_app(cfg: GatewayConfig) -> FastAPI:
    token = cfg.token()
    store = EventStore(cfg.event_store_dir, cfg.course_salt())

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        store.close()

    app = FastAPI(title="events", lifespan=lifespan)
    _install_middleware(app, "events")
    auth = Depends(_auth_dependency(token))
    app.state.store = store

    @app.get("/health")
    async def health():
        ok = store.healthy()
        return JSONResponse(
            {
                "status": "ok" if ok else "degraded",
                "service": "events",
                "store_reachable": ok,
            },
            status_code=200 if ok else 503,
        )

    @app.post("/events", status_code=202)
    async def ingest(request: Request, _=auth):
        try:
            raw = await request.json()
        except Exception:
            raise HTTPException(400, "body must be a JSON event")
        if not isinstance(raw, dict):
            raise HTTPException(400, "body must be a JSON object")
        try:
            event = store.ingest(raw)
        except SchemaRejection as exc:
            return JSONResponse({"detail": "schema rejection", "fields": exc.fields}, 400)
        except (StorageFailure, MissingSalt) as exc:
            log.error("event store failure: %s", exc)
            return JSONResponse({"detail": "storage failure"}, 500)
        return {"event_id": event.event_id}

    return app


def build_feedback_app(cfg: GatewayConfig) -> FastAPI:
    token = cfg.token()
    lessons = load_lesson_dir(cfg.lesson_dir)
    store = EventStore(cfg.event_store_dir)  # reader: no salt held here
    gateway = _gateway_for(cfg, "feedback")
    conversations = ConversationStore(cfg.conversations_path())
    service = FeedbackService(
        gateway,
        store,
        lessons,
        conversations,
        context_budget_chars=cfg.context_budget_chars,
    )

    app = FastAPI(title="feedback")
    _install_middleware(app, "feedback")
    auth = Depends(_auth_dependency(token))
    app.state.gateway = gateway
    app.state.store = store

    @app.get("/health")
    async def health():
        ok = store.healthy()
        return JSONResponse(
            {
                "status": "ok" if ok else "degraded",
                "service": "feedback",
                "backend": gateway.backend.kind,
                "store_reachable": ok,
            },
            status_code=200 if ok else 503,
        )

    @app.get("/feedback/lessons")
    async def lessons_with_activity(_=auth):
        return [summary.to_json() for summary in service.list_lessons_with_activity()]

    @app.post("/feedback/ask")
    async def ask(body: AskRequest, _=auth):
        try:
            conversation_id, answer = await service.ask(
                body.lesson_id, body.question, conversation_id=body.conversation_id
            )
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        except ConversationNotFound:
            raise HTTPException(404, "conversation not found")
        except GatewayError as exc:
            raise HTTPException(503, f"feedback agent unavailable: {exc}")
        return {"conversation_id": conversation_id, "answer": answer}

    return app


_BUILDERS = {
    "teaching": build_teaching_app,
    "autograde": build_autograde_app,
    "events": build_events_app,
    "feedback": build_feedback_app,
}


def build_app(cfg: GatewayConfig, service: str) -> FastAPI:
    return _BUILDERS[service](cfg)


async def _serve(cfg: GatewayConfig, names: list[str]) -> None:
    servers = []
    for name in names:
        app = build_app(cfg, name)
        # keep-alive far above any client's pool expiry so the server never
        # closes an idle connection the client still considers live
        uv_config = uvicorn.Config(
            app,
            host=cfg.host,
            port=cfg.ports[name],
            log_level="warning",
            access_log=False,
            timeout_keep_alive=75,
        )
        servers.append(uvicorn.Server(uv_config))
    await asyncio.gather(*(server.serve() for server in servers))


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="run the tutoring stack services")
    parser.add_argument("--config", required=True, help="path to config JSON")
    parser.add_argument(
        "--service",
        default="all",
        choices=[*SERVICE_NAMES, "all"],
        help="which service to run (default: all four listeners in one process)",
    )
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    cfg = load_config(args.config)
    names = list(SERVICE_NAMES) if args.service == "all" else [args.service]
    asyncio.run(_serve(cfg, names))


if __name__ == "__main__":
    main()
