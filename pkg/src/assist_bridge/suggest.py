"""Suggestion lifecycle: fetch, present, cycle, accept, reject.

A fetch produces a SuggestionSession bound to the (document, version,
cursor) it was computed against.  Sessions present a list of candidate
completions the client can cycle through; accepting splices the active
one into the buffer, rejecting dismisses it.  Any document edit (other
than the session's own splice) invalidates every Presenting session on
that document, so stale text is never applied against moved offsets.

Real-time mode debounces fetches behind a quiet period; prefetch mode
warms an LRU cache keyed by (uri, version, cursor).  Comment mode renders
the active suggestion into the buffer as comments and is refused for
languages without comment syntax.
"""
from __future__ import annotations

import asyncio
import enum
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .commentsyntax import CommentSyntax, SyntaxRegistry
from .context import ContextCaps, assemble_context
from .errors import (
    AllProvidersFailed,
    EmptySession,
    InvalidParams,
    SessionNotFound,
    SessionNotPresenting,
    StaleSession,
    UnsupportedCommentSyntax,
)
from .providers import CompletionRequest, CompletionResult
from .workspace import (
    Document,
    DocumentStore,
    Position,
    Range,
    advance,
    line_starts,
    position_at,
    resolve_offset,
)


class SessionState(enum.Enum):
    PRESENTING = "Presenting"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    INVALIDATED = "Invalidated"


NEARBY_TEXT_CURSOR = "NearbyTextCursor"
FLOATING_WIDGET = "FloatingWidget"
PRESENTATION_MODES = (NEARBY_TEXT_CURSOR, FLOATING_WIDGET)


@dataclass(frozen=True)
class Suggestion:
    id: str
    replace_range: Range
    text: str
    provider_id: str
    ordinal: int

    def to_wire(self) -> dict:
        return {
            "id": self.id,
            "replaceRange": self.replace_range.to_wire(),
            "text": self.text,
            "providerId": self.provider_id,
            "ordinal": self.ordinal,
        }


@dataclass
class SuggestionSession:
    session_id: str
    document_id: str
    bound_version: int
    cursor: Position
    suggestions: List[Suggestion]
    active_index: int
    state: SessionState
    mode: str
    comment_block: Optional[Range] = None

    @property
    def active(self) -> Suggestion:
        return self.suggestions[self.active_index]

    def to_wire(self) -> dict:
        return {
            "sessionId": self.session_id,
            "documentId": self.document_id,
            "boundVersion": self.bound_version,
            "cursor": self.cursor.to_wire(),
            "suggestions": [s.to_wire() for s in self.suggestions],
            "activeIndex": self.active_index,
            "state": self.state.value,
            "mode": self.mode,
            "commentBlock": (
                {"insertedRange": self.comment_block.to_wire()}
                if self.comment_block is not None
                else None
            ),
        }


def compute_anchor(doc: Document, cursor: Position, mode: str) -> Position:
    """Where a suggestion attaches: the cursor itself, or the start of the
    next line (end of document on the last line) for the floating widget."""
    resolve_offset(doc.content, cursor)
    if mode not in PRESENTATION_MODES:
        raise InvalidParams(f"unknown presentation mode {mode!r}")
    if mode == NEARBY_TEXT_CURSOR:
        return cursor
    data = doc.content.encode("utf-8")
    starts = line_starts(data)
    if cursor.line + 1 < len(starts):
        return Position(line=cursor.line + 1, column=0)
    return position_at(doc.content, len(data))


def render_comment_mode(s: Suggestion, total: int, syntax: Optional[CommentSyntax]) -> str:
    """Render a suggestion as a comment block for in-buffer presentation.

    total is the session's suggestion count, shown in the header line.
    """
    if syntax is None or not syntax.supported:
        lang = syntax.language_id if syntax is not None else "unknown"
        raise UnsupportedCommentSyntax(
            f"comment mode is not available for language {lang!r}",
            {"languageId": lang},
        )
    header = f"suggestion {s.ordinal + 1}/{total} from {s.provider_id}"
    if syntax.line_prefix is not None:
        prefix = syntax.line_prefix
        lines = [header]
        if s.text:
            lines.extend(s.text.split("\n"))
        return "\n".join(f"{prefix} {line}" if line else prefix for line in lines)
    open_mark, close_mark = syntax.block
    body = f"{open_mark} {header}\n"
    if s.text:
        body += s.text + "\n"
    return body + close_mark


CacheKey = Tuple[str, int, int, int]  # uri, version, cursor line, cursor column
Notifier = Callable[[str, dict], None]
RawResults = List[Tuple[str, CompletionResult]]


class SuggestionEngine:
    def __init__(
        self,
        store: DocumentStore,
        providers: List[object],
        registry: Optional[SyntaxRegistry] = None,
        debounce_ms: int = 300,
        prefetch_capacity: int = 32,
        caps: ContextCaps = ContextCaps(),
        notify: Optional[Notifier] = None,
    ):
        self._store = store
        self._registry = registry or SyntaxRegistry()
        self._debounce_ms = debounce_ms
        self._prefetch_capacity = prefetch_capacity
        self._caps = caps
        self.notify = notify
        self._completion_providers = sorted(
            (p for p in providers if p.config.kind in ("completion", "mock")),
            key=lambda p: p.config.priority,
        )
        self._sessions: Dict[str, SuggestionSession] = {}
        self._next_session = 1
        self._cache: "OrderedDict[CacheKey, RawResults]" = OrderedDict()
        self._prefetch_inflight: Dict[CacheKey, asyncio.Task] = {}
        self._fetch_locks: Dict[str, asyncio.Lock] = {}
        # uri -> (target version, cursor, timer task)
        self._realtime_pending: Dict[str, Tuple[int, Position, asyncio.Task]] = {}
        store.add_listener(self._on_document_changed)

    # ----- session registry -------------------------------------------------

    def _session(self, session_id: str) -> SuggestionSession:
        session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFound(f"no such session: {session_id}")
        return session

    def session(self, session_id: str) -> SuggestionSession:
        return self._session(session_id)

    def _on_document_changed(self, uri: str, doc: Document, origin: Optional[str]) -> None:
        for session in self._sessions.values():
            if (
                session.document_id == uri
                and session.state is SessionState.PRESENTING
                and session.session_id != origin
            ):
                session.state = SessionState.INVALIDATED
        pending = self._realtime_pending.get(uri)
        if pending is not None and origin is None:
            # The quiet period restarts on every editor edit, and the
            # eventual fetch targets the newest version.
            _, cursor, task = pending
            task.cancel()
            try:
                self._start_realtime_timer(uri, doc.version, cursor)
            except RuntimeError:
                del self._realtime_pending[uri]

    # ----- fetching ---------------------------------------------------------

    def _fetch_lock(self, uri: str) -> asyncio.Lock:
        if uri not in self._fetch_locks:
            self._fetch_locks[uri] = asyncio.Lock()
        return self._fetch_locks[uri]

    async def _fetch(self, doc: Document, cursor: Position) -> RawResults:
        ctx = assemble_context(doc, cursor, None, self._caps)
        req = CompletionRequest(
            prefix=ctx.prefix,
            suffix=ctx.suffix,
            language_id=ctx.language_id,
            relative_path=ctx.relative_path,
            max_results=10,
        )
        results: RawResults = []
        failures: List[str] = []
        for provider in self._completion_providers:
            try:
                for item in await provider.fetch_completions(req):
                    results.append((provider.config.id, item))
            except asyncio.CancelledError:
                raise
            except Exception as exc:
                failures.append(f"{provider.config.id}: {exc}")
        if failures and not results and len(failures) == len(self._completion_providers):
            raise AllProvidersFailed(
                "every completion provider errored", {"failures": failures}
            )
        return results

    async def _locked_fetch(self, uri: str, doc: Document, cursor: Position) -> RawResults:
        async with self._fetch_lock(uri):
            return await self._fetch(doc, cursor)

    def _key(self, uri: str, version: int, cursor: Position) -> CacheKey:
        return (uri, version, cursor.line, cursor.column)

    def _cache_put(self, key: CacheKey, raw: RawResults) -> None:
        self._cache[key] = raw
        self._cache.move_to_end(key)
        while len(self._cache) > self._prefetch_capacity:
            self._cache.popitem(last=False)

    # ----- explicit get -----------------------------------------------------

    async def get_suggestions(
        self,
        uri: str,
        cursor: Position,
        mode: str = NEARBY_TEXT_CURSOR,
        comment_mode: bool = False,
    ) -> SuggestionSession:
        doc = self._store.get(uri)
        resolve_offset(doc.content, cursor)
        if mode not in PRESENTATION_MODES:
            raise InvalidParams(f"unknown presentation mode {mode!r}")
        syntax = None
        if comment_mode:
            # Refuse before fetching; comment mode must never touch a
            # buffer whose language cannot carry comments.
            syntax = self._registry.lookup(doc.language_id)
            if syntax is None:
                raise UnsupportedCommentSyntax(
                    f"comment mode is not available for language "
                    f"{doc.language_id!r}",
                    {"languageId": doc.language_id},
                )

        fetch_version = doc.version
        key = self._key(uri, fetch_version, cursor)
        inflight = self._prefetch_inflight.get(key)
        raw: Optional[RawResults] = None
        if inflight is not None:
            try:
                raw = await inflight
            except asyncio.CancelledError:
                raise
            except Exception:
                raw = None
        if raw is None and key in self._cache:
            raw = self._cache[key]
            self._cache.move_to_end(key)
        if raw is None:
            raw = await self._locked_fetch(uri, doc, cursor)

        session_id = f"s{self._next_session}"
        self._next_session += 1
        suggestions = [
            Suggestion(
                id=f"{session_id}-{ordinal}",
                replace_range=Range(cursor, cursor),
                text=result.text,
                provider_id=provider_id,
                ordinal=ordinal,
            )
            for ordinal, (provider_id, result) in enumerate(raw)
        ]
        session = SuggestionSession(
            session_id=session_id,
            document_id=uri,
            bound_version=fetch_version,
            cursor=cursor,
            suggestions=suggestions,
            active_index=0,
            state=SessionState.PRESENTING,
            mode=mode,
        )

        current = self._store.get(uri)
        if current.version != fetch_version:
            # The buffer moved while providers were thinking; the fetch
            # is already stale at birth.
            session.state = SessionState.INVALIDATED
        elif comment_mode and suggestions:
            self._insert_comment_block(session, current, syntax)

        self._sessions[session_id] = session
        return session

    def _insert_comment_block(
        self, session: SuggestionSession, doc: Document, syntax: CommentSyntax
    ) -> None:
        anchor = compute_anchor(doc, session.cursor, session.mode)
        rendered = render_comment_mode(session.active, len(session.suggestions), syntax)
        block_text = rendered + "\n"
        if anchor.column != 0:
            block_text = "\n" + block_text
        new_doc = self._store.apply_edit(
            doc.uri,
            doc.version,
            Range(anchor, anchor),
            block_text,
            origin=session.session_id,
        )
        session.comment_block = Range(anchor, advance(new_doc.content, anchor, block_text))
        session.bound_version = new_doc.version

    # ----- cycling ----------------------------------------------------------

    def _presenting(self, session_id: str) -> SuggestionSession:
        session = self._session(session_id)
        if session.state is not SessionState.PRESENTING:
            raise SessionNotPresenting(
                f"session {session_id} is {session.state.value}",
                {"sessionId": session_id, "state": session.state.value},
            )
        return session

    def next_suggestion(self, session_id: str) -> SuggestionSession:
        session = self._presenting(session_id)
        if not session.suggestions:
            raise EmptySession(f"session {session_id} has no suggestions")
        session.active_index = (session.active_index + 1) % len(session.suggestions)
        return session

    def previous_suggestion(self, session_id: str) -> SuggestionSession:
        session = self._presenting(session_id)
        if not session.suggestions:
            raise EmptySession(f"session {session_id} has no suggestions")
        n = len(session.suggestions)
        session.active_index = (session.active_index - 1 + n) % n
        return session

    # ----- accept / reject --------------------------------------------------

    def accept_suggestion(self, session_id: str) -> Tuple[Document, Range]:
        session = self._session(session_id)
        if session.state is SessionState.INVALIDATED:
            raise StaleSession(
                f"the document changed after session {session_id} was fetched",
                {"sessionId": session_id},
            )
        if session.state is not SessionState.PRESENTING:
            raise SessionNotPresenting(
                f"session {session_id} is {session.state.value}",
                {"sessionId": session_id, "state": session.state.value},
            )
        if not session.suggestions:
            raise EmptySession(f"session {session_id} has no suggestions")
        doc = self._store.get(session.document_id)
        if doc.version != session.bound_version:
            raise StaleSession(
                f"document {doc.uri} is at version {doc.version}, "
                f"session bound {session.bound_version}",
                {"sessionId": session_id},
            )
        active = session.active
        target = session.comment_block or active.replace_range
        new_doc = self._store.apply_edit(
            session.document_id,
            session.bound_version,
            target,
            active.text,
            origin=session.session_id,
        )
        session.state = SessionState.ACCEPTED
        applied = Range(target.start, advance(new_doc.content, target.start, active.text))
        return new_doc, applied

    def reject_suggestion(self, session_id: str) -> Document:
        session = self._presenting(session_id)
        if session.comment_block is not None:
            # Presenting implies no foreign edit happened, so the recorded
            # range still addresses exactly the inserted block.
            self._store.apply_edit(
                session.document_id,
                session.bound_version,
                session.comment_block,
                "",
                origin=session.session_id,
            )
        session.state = SessionState.REJECTED
        return self._store.get(session.document_id)

    # ----- real-time --------------------------------------------------------

    def schedule_realtime(self, uri: str, version: int, cursor: Position) -> dict:
        self._store.get(uri)
        pending = self._realtime_pending.get(uri)
        if pending is not None:
            pending[2].cancel()
        self._start_realtime_timer(uri, version, cursor)
        return {"scheduled": True, "debounceMs": self._debounce_ms}

    def _start_realtime_timer(self, uri: str, version: int, cursor: Position) -> None:
        loop = asyncio.get_running_loop()
        task = loop.create_task(self._realtime_fire(uri, version, cursor))
        self._realtime_pending[uri] = (version, cursor, task)

    async def _realtime_fire(self, uri: str, version: int, cursor: Position) -> None:
        await asyncio.sleep(self._debounce_ms / 1000)
        current_pending = self._realtime_pending.get(uri)
        if current_pending is None or current_pending[2] is not asyncio.current_task():
            return
        del self._realtime_pending[uri]
        try:
            doc = self._store.get(uri)
        except Exception:
            return
        if doc.version != version:
            return
        try:
            resolve_offset(doc.content, cursor)
        except Exception:
            return
        try:
            raw = await self._locked_fetch(uri, doc, cursor)
        except asyncio.CancelledError:
            raise
        except Exception:
            return
        fresh = self._store.get(uri)
        if fresh.version != version:
            # Stale-drop: never notify for a superseded version.
            return
        session_id = f"s{self._next_session}"
        self._next_session += 1
        suggestions = [
            Suggestion(
                id=f"{session_id}-{ordinal}",
                replace_range=Range(cursor, cursor),
                text=result.text,
                provider_id=provider_id,
                ordinal=ordinal,
            )
            for ordinal, (provider_id, result) in enumerate(raw)
        ]
        session = SuggestionSession(
            session_id=session_id,
            document_id=uri,
            bound_version=version,
            cursor=cursor,
            suggestions=suggestions,
            active_index=0,
            state=SessionState.PRESENTING,
            mode=NEARBY_TEXT_CURSOR,
        )
        self._sessions[session_id] = session
        if self.notify is not None:
            self.notify("suggest/realtimeReady", {"session": session.to_wire()})

    # ----- prefetch ---------------------------------------------------------

    def prefetch(self, uri: str, cursor: Position) -> dict:
        doc = self._store.get(uri)
        resolve_offset(doc.content, cursor)
        key = self._key(uri, doc.version, cursor)
        if key not in self._cache and key not in self._prefetch_inflight:
            task = asyncio.get_running_loop().create_task(
                self._prefetch_task(key, uri, cursor)
            )
            self._prefetch_inflight[key] = task
        return {"scheduled": True}

    async def _prefetch_task(
        self, key: CacheKey, uri: str, cursor: Position
    ) -> Optional[RawResults]:
        try:
            doc = self._store.get(uri)
            if doc.version != key[1]:
                return None
            raw = await self._locked_fetch(uri, doc, cursor)
            self._cache_put(key, raw)
            return raw
        finally:
            self._prefetch_inflight.pop(key, None)

    def cache_keys(self) -> List[CacheKey]:
        return list(self._cache.keys())

    async def drain(self) -> None:
        """Wait for background prefetch and realtime work; test helper."""
        tasks = list(self._prefetch_inflight.values())
        tasks.extend(t for _, _, t in self._realtime_pending.values())
        for task in tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass

    async def aclose(self) -> None:
        """Cancel pending debounce timers and prefetches before shutdown."""
        tasks = list(self._prefetch_inflight.values())
        tasks.extend(t for _, _, t in self._realtime_pending.values())
        for task in tasks:
            task.cancel()
        for task in tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        self._realtime_pending.clear()
        self._prefetch_inflight.clear()
