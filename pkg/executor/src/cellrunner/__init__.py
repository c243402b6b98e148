"""Sandboxed per-session code execution.

One worker subprocess per session: variables persist across cells within a
session, sessions share nothing, and a dead or hung worker is recycled
without taking the service down.
"""

__version__ = "0.1.0"
