#!/usr/bin/env python3
"""Run a complete local stack for manual exploration.

Materializes a demo scenario's lessons and scripted rules, starts the four
services as subprocesses, prints the endpoints and a ready-to-use token, and
keeps running until interrupted. Point the web console or `sim replay`
at the printed endpoint file.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import signal
import sys
import time
from pathlib import Path

from tutorstack.cluster import ServiceCluster, free_ports
from tutorstack.config import SERVICE_NAMES, GatewayConfig
from tutorstack.sim.replay import materialize_stack_inputs
from tutorstack.sim.scenarios import generate


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="dev-stack", help="state directory")
    parser.add_argument("--template", default="mini", help="scenario template for lessons/rules")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--executor-url", default=None, help="sandboxed execution service URL")
    parser.add_argument(
        "--fixed-ports", action="store_true", help="use the default 8801-8804 ports"
    )
    args = parser.parse_args()

    workdir = Path(args.workdir)
    scenario = generate(args.template, args.seed)
    lesson_dir, rules_path = materialize_stack_inputs(scenario, workdir)

    ports = (
        None
        if args.fixed_ports
        else dict(zip(SERVICE_NAMES, free_ports(len(SERVICE_NAMES))))
    )
    cfg = GatewayConfig(
        lesson_dir=str(lesson_dir),
        session_db=str(workdir / "data" / "sessions.sqlite3"),
        event_store_dir=str(workdir / "data" / "events"),
        backend={"kind": "scripted", "rules_path": str(rules_path)},
        executor_url=args.executor_url,
        **({"ports": ports} if ports else {}),
    )
    # respect externally provided secrets so callers (e2e harnesses) can
    # know the token without parsing stdout
    token = os.environ.get("TUTORSTACK_TOKEN") or secrets.token_hex(12)
    env = {
        "COURSE_SALT": os.environ.get("COURSE_SALT") or secrets.token_hex(16),
        "TUTORSTACK_TOKEN": token,
    }

    endpoints = {name: cfg.service_url(name) for name in SERVICE_NAMES}
    endpoints_file = workdir / "endpoints.json"
    endpoints_file.write_text(json.dumps({**endpoints, "token_env": "TUTORSTACK_TOKEN"}, indent=2))

    with ServiceCluster(cfg, workdir / "cluster", env=env) as cluster:
        cluster.start()
        print("stack is up:")
        for name, url in endpoints.items():
            print(f"  {name:<10} {url}")
        print(f"  token      {token}   (export TUTORSTACK_TOKEN={token})")
        print(f"  endpoints  {endpoints_file}")
        print(f"  lessons    {[l['lesson_id'] for l in scenario.lessons]}")
        print("Ctrl-C to stop.")
        stop = []
        signal.signal(signal.SIGINT, lambda *a: stop.append(1))
        signal.signal(signal.SIGTERM, lambda *a: stop.append(1))
        while not stop:
            time.sleep(0.3)
    print("stack stopped")
    return 0


if __name__ == "__main__":
    sys.exit(main())
