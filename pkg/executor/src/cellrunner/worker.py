"""Worker subprocess: one session namespace, newline-delimited JSON protocol.

Reads {"code": ...} requests on stdin and answers one JSON line per request
with {stdout, stderr, result_repr, error}. The namespace persists for the
lifetime of the process. At startup the worker applies the memory ceiling,
disables network egress, and imports whatever preload modules are available.

Run as: python -m cellrunner.worker
Environment: CELLRUNNER_MEMORY_BYTES, CELLRUNNER_PRELOAD (comma-separated).
"""

from __future__ import annotations

import ast
import contextlib
import io
import json
import os
import resource
import socket
import sys
import traceback


def _apply_memory_limit() -> None:
    limit = int(os.environ.get("CELLRUNNER_MEMORY_BYTES", 2 * 1024**3))
    try:
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    except (ValueError, OSError):
        pass  # some kernels refuse; the service still enforces timeouts


def _disable_network() -> None:
    # student code must not reach internal services; this is a speed bump,
    # not a hardened boundary (deployment-level isolation handles that)
    def blocked(*args, **kwargs):
        raise OSError("network access is disabled inside the execution sandbox")

    socket.socket = blocked  # type: ignore[assignment]
    socket.create_connection = blocked  # type: ignore[assignment]
    socket.getaddrinfo = blocked  # type: ignore[assignment]


def _preload(namespace: dict) -> list[str]:
    wanted = os.environ.get("CELLRUNNER_PRELOAD", "numpy,scipy,matplotlib").split(",")
    loaded = []
    for name in [w.strip() for w in wanted if w.strip()]:
        try:
            if name == "matplotlib":
                import matplotlib

                matplotlib.use("Agg")  # headless
                namespace[name] = matplotlib
            else:
                namespace[name] = __import__(name)
            loaded.append(name)
        except Exception:
            continue
    return loaded


def run_cell(code: str, namespace: dict) -> dict:
    """Execute one cell; the value of a trailing expression becomes result_repr."""
    stdout, stderr = io.StringIO(), io.StringIO()
    result_repr = ""
    error = None
    try:
        tree = ast.parse(code, mode="exec")
        trailing_expr = None
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            trailing_expr = ast.Expression(tree.body.pop().value)
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            exec(compile(tree, "<cell>", "exec"), namespace)
            if trailing_expr is not None:
                value = eval(compile(trailing_expr, "<cell>", "eval"), namespace)
                if value is not None:
                    result_repr = repr(value)
    except MemoryError:
        error = {"type": "MemoryExceeded", "message": "the memory ceiling was exceeded"}
    except BaseException as exc:  # student code can raise anything
        error = {
            "type": type(exc).__name__,
            "message": str(exc) or type(exc).__name__,
        }
        stderr.write(traceback.format_exc(limit=8))
    return {
        "stdout": stdout.getvalue(),
        "stderr": stderr.getvalue(),
        "result_repr": result_repr,
        "error": error,
    }


def main() -> None:
    _apply_memory_limit()
    _disable_network()
    namespace: dict = {"__name__": "__main__"}
    loaded = _preload(namespace)
    sys.stdout.write(json.dumps({"ready": True, "preloaded": loaded}) + "\n")
    sys.stdout.flush()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            continue
        response = run_cell(request.get("code", ""), namespace)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
