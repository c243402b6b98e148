"""Multi-process service launcher.

Spawns one OS process per service against a shared config file, waits for
health, and can kill or restart individual services. This is the deployment
topology the fault-injection and persistence tests exercise: each service
must survive the others dying.
"""

from __future__ import annotations

import json
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx

from .config import SERVICE_NAMES, GatewayConfig


def free_port() -> int:
    with socket.socket() as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def free_ports(count: int) -> list[int]:
    """Distinct free ports. All sockets are held open together, so the kernel
    cannot hand the same port out twice within one allocation."""
    socks = [socket.socket() for _ in range(count)]
    try:
        for sock in socks:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind(("127.0.0.1", 0))
        return [sock.getsockname()[1] for sock in socks]
    finally:
        for sock in socks:
            sock.close()


class ClusterError(RuntimeError):
    pass


class ServiceCluster:
    """Owns the subprocesses of one stack instance."""

    def __init__(self, cfg: GatewayConfig, workdir: str | Path, env: dict[str, str] | None = None):
        self.cfg = cfg
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.config_path = self.workdir / "stack_config.json"
        self.config_path.write_text(json.dumps(cfg.to_json(), indent=2))
        self.env = {**os.environ, **(env or {})}
        self.processes: dict[str, subprocess.Popen] = {}

    def endpoints(self) -> dict[str, str]:
        return {name: self.cfg.service_url(name) for name in SERVICE_NAMES}

    def start(self, names: list[str] | None = None, timeout_s: float = 30.0) -> None:
        for name in names or list(SERVICE_NAMES):
            self._spawn(name)
        self.wait_healthy(names, timeout_s=timeout_s)

    def _spawn(self, name: str) -> None:
        log_path = self.workdir / f"{name}.log"
        self.processes[name] = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "tutorstack.services",
                "--config",
                str(self.config_path),
                "--service",
                name,
            ],
            stdout=log_path.open("a"),
            stderr=subprocess.STDOUT,
            env=self.env,
        )

    def wait_healthy(self, names: list[str] | None = None, timeout_s: float = 30.0) -> None:
        deadline = time.monotonic() + timeout_s
        for name in names or list(self.processes):
            url = f"{self.cfg.service_url(name)}/health"
            while True:
                proc = self.processes.get(name)
                if proc is not None and proc.poll() is not None:
                    raise ClusterError(
                        f"{name} exited with {proc.returncode}: {self._log_tail(name)}"
                    )
                try:
                    if httpx.get(url, timeout=1.0).status_code in (200, 503):
                        break
                except httpx.HTTPError:
                    pass
                if time.monotonic() > deadline:
                    raise ClusterError(
                        f"{name} did not become healthy at {url}: {self._log_tail(name)}"
                    )
                time.sleep(0.1)

    def _log_tail(self, name: str, lines: int = 12) -> str:
        path = self.workdir / f"{name}.log"
        if not path.exists():
            return "(no log)"
        return " | ".join(path.read_text(errors="replace").splitlines()[-lines:])

    def kill(self, name: str, sig: int = signal.SIGKILL) -> None:
        proc = self.processes.pop(name, None)
        if proc is None:
            return
        proc.send_signal(sig)
        proc.wait(timeout=10)

    def restart(self, name: str, timeout_s: float = 20.0) -> None:
        self.kill(name)
        self._spawn(name)
        self.wait_healthy([name], timeout_s=timeout_s)

    def restart_all(self, timeout_s: float = 30.0) -> None:
        for name in list(self.processes):
            self.kill(name)
        self.start(timeout_s=timeout_s)

    def stop(self) -> None:
        for name in list(self.processes):
            self.kill(name, sig=signal.SIGTERM)

    def __enter__(self) -> "ServiceCluster":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()
