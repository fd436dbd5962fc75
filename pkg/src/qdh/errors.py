"""Error type shared by every hub subsystem.

All domain failures carry a stable machine-readable ``code`` (the strings
API clients and tests branch on) plus an optional ``details`` mapping.
Transport layers map codes to HTTP statuses; the CLI maps them to exit
codes. Validation findings are *data* (see ``ValidationReport``), not
errors, and never raise.
"""

from __future__ import annotations

from typing import Any


class QdhError(Exception):
    """A domain error with a stable code, e.g. ``FK_VIOLATION`` or ``NOT_OWNER``."""

    def __init__(self, code: str, message: str, **details: Any):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


class QuerySyntaxError(QdhError):
    """Raised by the query parser; carries the offending position."""

    def __init__(self, message: str, line: int, col: int, expected: str = ""):
        super().__init__("SYNTAX_ERROR", message, line=line, col=col, expected=expected)
        self.line = line
        self.col = col
        self.expected = expected
