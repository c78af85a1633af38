"""Independent reference implementations used to cross-check the package.

Everything here is written in the most obvious way possible and imports
nothing from assist_bridge, so the tests compare two unrelated derivations
of the same value.  Text-editing checks work on plain Python strings and
character indexes; the package works on UTF-8 bytes and (line, byte
column) pairs, which makes agreement between the two meaningful.
"""
from __future__ import annotations

from typing import List, Tuple


def char_position(content: str, index: int) -> Tuple[int, int]:
    """(line, byte column) of the character index, derived from the string."""
    before = content[:index]
    line = before.count("\n")
    column = len(before.rsplit("\n", 1)[-1].encode("utf-8"))
    return line, column


def byte_offset_of_index(content: str, index: int) -> int:
    return len(content[:index].encode("utf-8"))


def string_splice(content: str, start_index: int, end_index: int, text: str) -> str:
    """Replace content[start_index:end_index] with text, as plain slicing."""
    return content[:start_index] + text + content[end_index:]


def apply_char_edits(content: str, edits: List[Tuple[int, int, str]]) -> str:
    """Apply (start, end, text) char-index edits, last-to-first.

    Edits must be non-overlapping; applying from the back keeps earlier
    indexes valid without any offset arithmetic.
    """
    for start, end, text in sorted(edits, key=lambda e: e[0], reverse=True):
        content = string_splice(content, start, end, text)
    return content


def slowest_gcd(a: int, b: int) -> int:
    """Greatest common divisor by checking every candidate from min(a, b) down."""
    for candidate in range(min(a, b), 0, -1):
        if a % candidate == 0 and b % candidate == 0:
            return candidate
    return 1


def slowest_lcm(a: int, b: int) -> int:
    """Least common multiple by walking multiples of the larger operand."""
    step = max(a, b)
    candidate = step
    while candidate % min(a, b) != 0:
        candidate += step
    return candidate
