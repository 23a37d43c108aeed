"""Common error base for every pipeline in the toolkit.

Each stage module defines its own error subclasses; they all derive from
:class:`WorkbotError` so callers (and the CLI) can catch pipeline failures
in one place and report them with a stable machine-readable code.
"""

from __future__ import annotations


class WorkbotError(Exception):
    """Base class for all recoverable pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def payload(self) -> dict:
        return {"error": self.code, "message": str(self)}
