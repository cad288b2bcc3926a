"""The regular-expression dialect of the ``~`` operator.

Supported: ``^``, ``$``, ``.``, bracket classes ``[...]`` (with ``^``
negation and ranges), the postfix operators ``*``, ``+``, ``?``,
alternation ``|`` and grouping ``( )``.  A backslash makes the following
character literal.  Every other character matches itself, so there are no
backreferences, counted repetition, or lookaround.  Patterns are translated
into Python :mod:`re` syntax and matched with ``search`` (unanchored).
"""

from __future__ import annotations

import functools
import re


class PatternError(ValueError):
    def __init__(self, pattern: str, message: str):
        super().__init__(f"invalid pattern {pattern!r}: {message}")
        self.pattern = pattern


def _bracket(pattern: str, i: int) -> tuple[str, int]:
    """Translate the class starting at ``pattern[i] == '['``; return (re, next i)."""
    out = ["["]
    i += 1
    if i < len(pattern) and pattern[i] == "^":
        out.append("^")
        i += 1
    first = True
    while True:
        if i >= len(pattern):
            raise PatternError(pattern, "unterminated [")
        char = pattern[i]
        if char == "]" and not first:
            out.append("]")
            return "".join(out), i + 1
        if char == "\\":
            if i + 1 >= len(pattern):
                raise PatternError(pattern, "trailing backslash")
            char = pattern[i + 1]
            i += 1
        if char == "-" and not first and i + 1 < len(pattern) and pattern[i + 1] != "]":
            out.append("-")
        else:
            out.append(re.escape(char))
        first = False
        i += 1


def translate(pattern: str) -> str:
    out = []
    depth = 0
    can_repeat = False
    i = 0
    while i < len(pattern):
        char = pattern[i]
        if char in "*+?":
            if not can_repeat:
                raise PatternError(pattern, f"nothing to repeat at offset {i}")
            out.append(char)
            can_repeat = False
            i += 1
            continue
        if char == "\\":
            if i + 1 >= len(pattern):
                raise PatternError(pattern, "trailing backslash")
            out.append(re.escape(pattern[i + 1]))
            can_repeat = True
            i += 2
            continue
        if char == "[":
            piece, i = _bracket(pattern, i)
            out.append(piece)
            can_repeat = True
            continue
        if char == "(":
            depth += 1
            out.append("(?:")
            can_repeat = False
        elif char == ")":
            if depth == 0:
                raise PatternError(pattern, f"unbalanced ) at offset {i}")
            depth -= 1
            out.append(")")
            can_repeat = True
        elif char == "|":
            out.append("|")
            can_repeat = False
        elif char == "^":
            out.append("^")
            can_repeat = False
        elif char == "$":
            out.append(r"\Z")  # re's $ would also match before a final newline
            can_repeat = False
        elif char == ".":
            out.append(".")
            can_repeat = True
        else:
            out.append(re.escape(char))
            can_repeat = True
        i += 1
    if depth:
        raise PatternError(pattern, "unbalanced (")
    return "".join(out)


@functools.lru_cache(maxsize=512)
def compile_pattern(pattern: str) -> re.Pattern:
    try:
        return re.compile(translate(pattern), re.DOTALL)
    except re.error as exc:
        raise PatternError(pattern, str(exc)) from None


def search(pattern: str, text: str) -> bool:
    return compile_pattern(pattern).search(text) is not None
