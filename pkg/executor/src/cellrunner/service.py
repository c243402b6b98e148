"""The execution service: /execute, /health, /info, /session/{id}/reset.

Requests to one session are serialized (a namespace is single-threaded by
contract); different sessions run in parallel on their own workers. Runtime
errors, timeouts, and worker crashes all come back as structured error
results, never 5xx.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import uvicorn
from fastapi import FastAPI
from pydantic import BaseModel

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_MEMORY_BYTES = 2 * 1024**3  # circuit simulation is memory-hungry


@dataclass
class Limits:
    timeout_s: float = DEFAULT_TIMEOUT_S
    memory_bytes: int = DEFAULT_MEMORY_BYTES
    preload: str = "numpy,scipy,matplotlib"

    @classmethod
    def from_env(cls) -> "Limits":
        return cls(
            timeout_s=float(os.environ.get("CELLRUNNER_TIMEOUT_S", DEFAULT_TIMEOUT_S)),
            memory_bytes=int(os.environ.get("CELLRUNNER_MEMORY_BYTES", DEFAULT_MEMORY_BYTES)),
            preload=os.environ.get("CELLRUNNER_PRELOAD", "numpy,scipy,matplotlib"),
        )


class _Worker:
    """Owns one session's subprocess."""

    def __init__(self, limits: Limits):
        self.limits = limits
        self.proc: asyncio.subprocess.Process | None = None
        self.preloaded: list[str] = []
        self.lock = asyncio.Lock()

    async def ensure_started(self) -> None:
        if self.proc is not None and self.proc.returncode is None:
            return
        env = {
            **os.environ,
            "CELLRUNNER_MEMORY_BYTES": str(self.limits.memory_bytes),
            "CELLRUNNER_PRELOAD": self.limits.preload,
        }
        self.proc = await asyncio.create_subprocess_exec(
            sys.executable,
            "-m",
            "cellrunner.worker",
            stdin=asyncio.subprocess.PIPE,
            stdout=asyncio.subprocess.PIPE,
            stderr=asyncio.subprocess.DEVNULL,
            env=env,
        )
        ready = await asyncio.wait_for(self.proc.stdout.readline(), timeout=30.0)
        self.preloaded = json.loads(ready).get("preloaded", [])

    async def kill(self) -> None:
        if self.proc is not None and self.proc.returncode is None:
            self.proc.kill()
            await self.proc.wait()
        self.proc = None

    async def execute(self, code: str) -> dict:
        await self.ensure_started()
        assert self.proc is not None and self.proc.stdin is not None
        start = time.monotonic()
        try:
            self.proc.stdin.write((json.dumps({"code": code}) + "\n").encode())
            await self.proc.stdin.drain()
            line = await asyncio.wait_for(
                self.proc.stdout.readline(), timeout=self.limits.timeout_s
            )
        except asyncio.TimeoutError:
            await self.kill()
            return {
                "stdout": "",
                "stderr": "",
                "result_repr": "",
                "error": {
                    "type": "TimeoutExceeded",
                    "message": f"execution exceeded {self.limits.timeout_s:.0f}s"
                    " and the session worker was recycled",
                },
                "duration_ms": round((time.monotonic() - start) * 1000, 1),
            }
        except (BrokenPipeError, ConnectionResetError):
            line = b""
        duration_ms = round((time.monotonic() - start) * 1000, 1)
        if not line:  # the worker died mid-request
            await self.kill()
            return {
                "stdout": "",
                "stderr": "",
                "result_repr": "",
                "error": {
                    "type": "WorkerCrashed",
                    "message": "the session worker terminated unexpectedly and was recycled",
                },
                "duration_ms": duration_ms,
            }
        result = json.loads(line)
        result["duration_ms"] = duration_ms
        return result


class ExecuteRequest(BaseModel):
    session_id: str
    cell_id: str = ""
    code: str


def build_app(limits: Limits | None = None) -> FastAPI:
    limits = limits or Limits.from_env()
    workers: dict[str, _Worker] = {}
    app = FastAPI(title="cellrunner")
    app.state.workers = workers

    def worker_for(session_id: str) -> _Worker:
        if session_id not in workers:
            workers[session_id] = _Worker(limits)
        return workers[session_id]

    @app.post("/execute")
    async def execute(body: ExecuteRequest):
        worker = worker_for(body.session_id)
        async with worker.lock:
            return await worker.execute(body.code)

    @app.post("/session/{session_id}/reset")
    async def reset(session_id: str):
        worker = workers.pop(session_id, None)
        if worker is not None:
            async with worker.lock:
                await worker.kill()
        return {"ok": True}

    @app.get("/info")
    async def info():
        preloaded = sorted(
            {name for worker in workers.values() for name in worker.preloaded}
        ) or [w.strip() for w in limits.preload.split(",") if w.strip()]
        return {
            "preloaded": preloaded,
            "limits": {
                "timeout_s": limits.timeout_s,
                "memory_bytes": limits.memory_bytes,
            },
            "sessions": len(workers),
        }

    @app.get("/health")
    async def health():
        return {"status": "ok", "sessions": len(workers)}

    return app


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="sandboxed code execution service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8805)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    uvicorn.run(build_app(), host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
