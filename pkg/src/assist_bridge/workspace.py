"""Versioned document buffers with byte-addressed positions.

The daemon mirrors editor buffers as UTF-8 text.  Positions name a line
(0-based) and a byte column within that line's UTF-8 encoding; ranges are
half-open.  Every mutation bumps the document version by exactly one, and
listeners are told about each change so higher layers can invalidate state
bound to older versions.
"""
from __future__ import annotations

import asyncio
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import (
    AlreadyOpen,
    InvalidPosition,
    NotOpen,
    OverlappingEdits,
    RangeOutOfBounds,
    VersionMismatch,
)

SEVERITIES = ("error", "warning")


@dataclass(frozen=True)
class Position:
    line: int
    column: int  # byte offset within the line's UTF-8 encoding

    def to_wire(self) -> Dict[str, int]:
        return {"line": self.line, "column": self.column}

    @staticmethod
    def from_wire(raw: dict) -> "Position":
        return Position(line=int(raw["line"]), column=int(raw["column"]))


@dataclass(frozen=True)
class Range:
    start: Position
    end: Position

    def to_wire(self) -> Dict[str, dict]:
        return {"start": self.start.to_wire(), "end": self.end.to_wire()}

    @staticmethod
    def from_wire(raw: dict) -> "Range":
        return Range(Position.from_wire(raw["start"]), Position.from_wire(raw["end"]))


@dataclass(frozen=True)
class Diagnostic:
    range: Range
    severity: str
    message: str

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be one of {SEVERITIES}, got {self.severity!r}")

    def to_wire(self) -> dict:
        return {
            "range": self.range.to_wire(),
            "severity": self.severity,
            "message": self.message,
        }

    @staticmethod
    def from_wire(raw: dict) -> "Diagnostic":
        return Diagnostic(
            range=Range.from_wire(raw["range"]),
            severity=str(raw["severity"]),
            message=str(raw["message"]),
        )


@dataclass
class Document:
    uri: str
    language_id: str
    version: int
    content: str
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def to_wire(self) -> dict:
        return {
            "uri": self.uri,
            "languageId": self.language_id,
            "version": self.version,
            "content": self.content,
            "diagnostics": [d.to_wire() for d in self.diagnostics],
        }


def _is_continuation_byte(b: int) -> bool:
    return (b & 0xC0) == 0x80


def line_starts(data: bytes) -> List[int]:
    """Byte offsets where each line begins; lines are separated by \\n only."""
    starts = [0]
    idx = data.find(b"\n")
    while idx != -1:
        starts.append(idx + 1)
        idx = data.find(b"\n", idx + 1)
    return starts


def resolve_offset(content: str, pos: Position) -> int:
    """Map a (line, byte column) position to an absolute byte offset.

    Raises InvalidPosition when the line does not exist, the column runs
    past the end of the line, or the offset would land inside a multi-byte
    UTF-8 sequence.
    """
    if pos.line < 0 or pos.column < 0:
        raise InvalidPosition(
            f"negative coordinates in position {pos.line}:{pos.column}",
            {"position": pos.to_wire()},
        )
    data = content.encode("utf-8")
    starts = line_starts(data)
    if pos.line >= len(starts):
        raise InvalidPosition(
            f"line {pos.line} out of range (document has {len(starts)} lines)",
            {"position": pos.to_wire()},
        )
    start = starts[pos.line]
    end = starts[pos.line + 1] - 1 if pos.line + 1 < len(starts) else len(data)
    offset = start + pos.column
    if offset > end:
        raise InvalidPosition(
            f"column {pos.column} past end of line {pos.line}",
            {"position": pos.to_wire()},
        )
    if offset < len(data) and _is_continuation_byte(data[offset]):
        raise InvalidPosition(
            f"position {pos.line}:{pos.column} is inside a multi-byte character",
            {"position": pos.to_wire()},
        )
    return offset


def position_at(content: str, offset: int) -> Position:
    """Inverse of resolve_offset for a known-valid byte offset."""
    data = content.encode("utf-8")
    if offset < 0 or offset > len(data):
        raise InvalidPosition(f"byte offset {offset} out of range")
    line = data.count(b"\n", 0, offset)
    last_nl = data.rfind(b"\n", 0, offset)
    return Position(line=line, column=offset - (last_nl + 1))


def end_position(content: str) -> Position:
    return position_at(content, len(content.encode("utf-8")))


def advance(content: str, pos: Position, text: str) -> Position:
    """Position reached by walking len(text) bytes forward from pos.

    Assumes text is already part of content at pos (used to compute the
    span occupied by freshly inserted text).
    """
    return position_at(content, resolve_offset(content, pos) + len(text.encode("utf-8")))


def _resolve_range(content: str, rng: Range) -> Tuple[int, int]:
    try:
        start = resolve_offset(content, rng.start)
        end = resolve_offset(content, rng.end)
    except InvalidPosition as exc:
        raise RangeOutOfBounds(str(exc), exc.data) from exc
    if start > end:
        raise RangeOutOfBounds(
            "range start is past range end", {"range": rng.to_wire()}
        )
    return start, end


def splice(content: str, rng: Range, new_text: str) -> str:
    """Replace the half-open byte range with new_text."""
    data = content.encode("utf-8")
    start, end = _resolve_range(content, rng)
    return (data[:start] + new_text.encode("utf-8") + data[end:]).decode("utf-8")


def splice_many(content: str, edits: Sequence[Tuple[Range, str]]) -> str:
    """Apply several non-overlapping range edits to one base content.

    All ranges are interpreted against the original content.  Edits are
    applied in descending offset order so earlier ones cannot shift later
    ones; same-offset inserts keep their list order.
    """
    data = content.encode("utf-8")
    resolved = []
    for idx, (rng, new_text) in enumerate(edits):
        start, end = _resolve_range(content, rng)
        resolved.append((start, end, idx, new_text))
    ordered = sorted(resolved, key=lambda r: (r[0], r[2]))
    for (s1, e1, _, _), (s2, _, _, _) in zip(ordered, ordered[1:]):
        if s2 < e1:
            raise OverlappingEdits(
                f"edit starting at byte {s2} overlaps edit ending at byte {e1}"
            )
    for start, end, _, new_text in reversed(ordered):
        data = data[:start] + new_text.encode("utf-8") + data[end:]
    return data.decode("utf-8")


ChangeListener = Callable[[str, Document, Optional[str]], None]


class DocumentStore:
    """Open documents keyed by uri, with change notification.

    Mutations are synchronous; under asyncio that makes each edit atomic
    with respect to concurrently running requests.  The per-uri locks are
    for multi-step operations (fetch then edit) that must not interleave.
    """

    def __init__(self):
        self._docs: Dict[str, Document] = {}
        self._listeners: List[ChangeListener] = []
        self._locks: Dict[str, asyncio.Lock] = {}

    def add_listener(self, listener: ChangeListener) -> None:
        self._listeners.append(listener)

    def lock(self, uri: str) -> asyncio.Lock:
        if uri not in self._locks:
            self._locks[uri] = asyncio.Lock()
        return self._locks[uri]

    def open(self, uri: str, language_id: str, content: str) -> Document:
        if uri in self._docs:
            raise AlreadyOpen(f"document already open: {uri}", {"uri": uri})
        doc = Document(uri=uri, language_id=language_id, version=0, content=content)
        self._docs[uri] = doc
        return doc

    def get(self, uri: str) -> Document:
        doc = self._docs.get(uri)
        if doc is None:
            raise NotOpen(f"document not open: {uri}", {"uri": uri})
        return doc

    def uris(self) -> List[str]:
        return sorted(self._docs)

    def _check_version(self, doc: Document, expected_version: int) -> None:
        if doc.version != expected_version:
            raise VersionMismatch(
                f"document {doc.uri} is at version {doc.version}, "
                f"edit targeted {expected_version}",
                {"uri": doc.uri, "version": doc.version, "expected": expected_version},
            )

    def _commit(self, doc: Document, content: str, origin: Optional[str]) -> Document:
        doc.content = content
        doc.version += 1
        for listener in list(self._listeners):
            listener(doc.uri, doc, origin)
        return doc

    def apply_edit(
        self,
        uri: str,
        expected_version: int,
        rng: Range,
        new_text: str,
        origin: Optional[str] = None,
    ) -> Document:
        doc = self.get(uri)
        self._check_version(doc, expected_version)
        return self._commit(doc, splice(doc.content, rng, new_text), origin)

    def apply_batch(
        self,
        uri: str,
        expected_version: int,
        edits: Sequence[Tuple[Range, str]],
        origin: Optional[str] = None,
    ) -> Document:
        """Apply several edits atomically with a single version bump."""
        doc = self.get(uri)
        self._check_version(doc, expected_version)
        return self._commit(doc, splice_many(doc.content, edits), origin)

    def set_diagnostics(self, uri: str, diagnostics: Sequence[Diagnostic]) -> Document:
        doc = self.get(uri)
        for diag in diagnostics:
            _resolve_range(doc.content, diag.range)
        doc.diagnostics = list(diagnostics)
        return doc

    def snapshot(self, uri: str) -> Document:
        doc = self.get(uri)
        return replace(doc, diagnostics=list(doc.diagnostics))
