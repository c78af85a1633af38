"""Prompt context assembly and template rendering.

Builds the provider-facing view of a document: text before and after the
cursor, the selected span, rendered diagnostics, and the file path.  Large
fields are clipped to byte caps, snapping to line boundaries so providers
never see half a line.  Templates substitute a closed set of placeholders.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Optional

from .errors import MissingInstruction, UnknownPlaceholder
from .workspace import Document, Position, Range, resolve_offset

TRUNCATION_MARKER = "…[truncated]"

PLACEHOLDERS = (
    "prefix",
    "suffix",
    "selection",
    "file_path",
    "language",
    "diagnostics",
    "cursor",
    "instruction",
)

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


@dataclass(frozen=True)
class ContextCaps:
    prefix_bytes: int = 8000
    suffix_bytes: int = 2000
    selection_bytes: int = 4000


@dataclass(frozen=True)
class Selection:
    range: Range
    text: str


@dataclass(frozen=True)
class PromptContext:
    relative_path: str
    language_id: str
    cursor: Position
    prefix: str
    suffix: str
    selection: Optional[Selection]
    diagnostics_rendered: str
    truncated: bool


@dataclass(frozen=True)
class Template:
    name: str
    body: str

    def __post_init__(self):
        # Any "{{" must open a known placeholder; anything else would
        # survive rendering and leak into the prompt.
        pos = 0
        while True:
            pos = self.body.find("{{", pos)
            if pos == -1:
                break
            match = _PLACEHOLDER_RE.match(self.body, pos)
            if match is None:
                raise UnknownPlaceholder(
                    f"template {self.name!r} has a malformed placeholder at offset {pos}",
                    {"template": self.name},
                )
            if match.group(1) not in PLACEHOLDERS:
                raise UnknownPlaceholder(
                    f"template {self.name!r} uses unknown placeholder "
                    f"{{{{{match.group(1)}}}}}",
                    {"template": self.name, "placeholder": match.group(1)},
                )
            pos = match.end()


def _clip_tail_to_line_start(data: bytes, cap: int) -> bytes:
    """Last ≤ cap bytes of data, starting at a line start when possible."""
    window = data[-cap:]
    nl = window.find(b"\n")
    if nl != -1:
        return window[nl + 1 :]
    # No line boundary inside the window; drop any leading partial char.
    return window.decode("utf-8", errors="ignore").encode("utf-8")


def _clip_head_to_line_end(data: bytes, cap: int) -> bytes:
    """First ≤ cap bytes of data, ending just after a newline when possible."""
    window = data[:cap]
    nl = window.rfind(b"\n")
    if nl != -1:
        return window[: nl + 1]
    return window.decode("utf-8", errors="ignore").encode("utf-8")


def render_diagnostics(doc: Document) -> str:
    lines = []
    for diag in doc.diagnostics:
        start = diag.range.start
        lines.append(f"{diag.severity} {start.line}:{start.column} {diag.message}")
    return "\n".join(lines)


def assemble_context(
    doc: Document,
    cursor: Position,
    selection: Optional[Range] = None,
    caps: ContextCaps = ContextCaps(),
) -> PromptContext:
    data = doc.content.encode("utf-8")
    cursor_off = resolve_offset(doc.content, cursor)
    truncated = False

    prefix_bytes = data[:cursor_off]
    if len(prefix_bytes) > caps.prefix_bytes:
        prefix_bytes = _clip_tail_to_line_start(prefix_bytes, caps.prefix_bytes)
        truncated = True

    suffix_bytes = data[cursor_off:]
    if len(suffix_bytes) > caps.suffix_bytes:
        suffix_bytes = _clip_head_to_line_end(suffix_bytes, caps.suffix_bytes)
        truncated = True

    sel: Optional[Selection] = None
    if selection is not None:
        start = resolve_offset(doc.content, selection.start)
        end = resolve_offset(doc.content, selection.end)
        sel_bytes = data[start:end]
        if len(sel_bytes) > caps.selection_bytes:
            clipped = sel_bytes[: caps.selection_bytes].decode("utf-8", errors="ignore")
            sel = Selection(range=selection, text=clipped + TRUNCATION_MARKER)
            truncated = True
        else:
            sel = Selection(range=selection, text=sel_bytes.decode("utf-8"))

    return PromptContext(
        relative_path=doc.uri,
        language_id=doc.language_id,
        cursor=cursor,
        prefix=prefix_bytes.decode("utf-8"),
        suffix=suffix_bytes.decode("utf-8"),
        selection=sel,
        diagnostics_rendered=render_diagnostics(doc),
        truncated=truncated,
    )


def render_template(
    template: Template, ctx: PromptContext, instruction: Optional[str] = None
) -> str:
    """Substitute every placeholder in the template body.

    Rendering is pure; the same inputs always yield the same output.
    """
    values: Dict[str, str] = {
        "prefix": ctx.prefix,
        "suffix": ctx.suffix,
        "selection": ctx.selection.text if ctx.selection else "",
        "file_path": ctx.relative_path,
        "language": ctx.language_id,
        "diagnostics": ctx.diagnostics_rendered,
        "cursor": f"{ctx.cursor.line}:{ctx.cursor.column}",
    }
    if "{{instruction}}" in template.body:
        if instruction is None or instruction == "":
            raise MissingInstruction(
                f"template {template.name!r} requires an instruction",
                {"template": template.name},
            )
        values["instruction"] = instruction

    def _sub(match: re.Match) -> str:
        return values.get(match.group(1), "")

    return _PLACEHOLDER_RE.sub(_sub, template.body)
