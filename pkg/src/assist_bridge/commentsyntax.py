"""Per-language comment syntax registry.

Comment-mode presentation wraps suggestions in comments, which only works
for languages that have them.  Formats without a comment mechanism (JSON,
CSV) resolve to None so callers can refuse comment mode instead of
corrupting the buffer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple


@dataclass(frozen=True)
class CommentSyntax:
    language_id: str
    line_prefix: Optional[str] = None
    block: Optional[Tuple[str, str]] = None

    @property
    def supported(self) -> bool:
        return self.line_prefix is not None or self.block is not None


def _line(lang: str, prefix: str) -> CommentSyntax:
    return CommentSyntax(language_id=lang, line_prefix=prefix)


_DEFAULTS: Dict[str, Optional[CommentSyntax]] = {
    "swift": _line("swift", "//"),
    "c": _line("c", "//"),
    "cpp": _line("cpp", "//"),
    "go": _line("go", "//"),
    "rust": _line("rust", "//"),
    "typescript": _line("typescript", "//"),
    "javascript": _line("javascript", "//"),
    "java": _line("java", "//"),
    "python": _line("python", "#"),
    "shell": _line("shell", "#"),
    "toml": _line("toml", "#"),
    "yaml": _line("yaml", "#"),
    "ruby": _line("ruby", "#"),
    "html": CommentSyntax(language_id="html", block=("<!--", "-->")),
    "xml": CommentSyntax(language_id="xml", block=("<!--", "-->")),
    # No comment mechanism; comment mode must be refused.
    "json": None,
    "csv": None,
}


class SyntaxRegistry:
    """Case-insensitive languageId → CommentSyntax lookup.

    Overrides shadow the shipped defaults; mapping a language to None
    forces it to be treated as comment-unsupported.
    """

    def __init__(self, overrides: Optional[Mapping[str, Optional[CommentSyntax]]] = None):
        self._entries: Dict[str, Optional[CommentSyntax]] = dict(_DEFAULTS)
        for lang, syntax in (overrides or {}).items():
            self._entries[lang.lower()] = syntax

    def lookup(self, language_id: str) -> Optional[CommentSyntax]:
        syntax = self._entries.get(language_id.lower())
        if syntax is not None and not syntax.supported:
            return None
        return syntax
