"""User-facing regex handling shared by pattern filters and the
characterization dictionary.

Patterns are matched against the *whole* string; substring matching needs
explicit wildcards (``.*Heating.*``), mirroring the graph query ``=~``
convention. The accepted dialect is the POSIX-extended-compatible subset
of Python's ``re`` syntax; backreference-free patterns behave identically
in both.
"""

from __future__ import annotations

import re

from qdh.errors import QdhError


def compile_user_regex(pattern: str) -> re.Pattern:
    try:
        return re.compile(pattern)
    except re.error as exc:
        raise QdhError("BAD_REGEX", f"cannot compile regex {pattern!r}: {exc}") from None


def regex_matches(compiled: re.Pattern, text: str) -> bool:
    return compiled.fullmatch(text) is not None
