"""Client-daemon protocol: framing, dispatch, cancellation, transports.

Frames are JSON objects, one per line on stdio and TCP, one per message
frame on WebSocket.  Requests carry a strictly increasing positive
integer id and are answered exactly once, possibly out of order; frames
without an id are notifications and are never answered.  Serialization
is canonical (sorted keys, no whitespace) so that transcripts are
byte-reproducible.

Requests touching the same document serialize; everything else may run
concurrently.  A running request can be cancelled with "$/cancel", which
makes it answer with error code -32800.
"""
from __future__ import annotations

import asyncio
import json
import sys
from typing import Any, Awaitable, Callable, Dict, List, Optional, Set, Tuple

from . import errors
from .chat import ChatService, Patch
from .commentsyntax import SyntaxRegistry
from .config import Config, load_config
from .context import assemble_context
from .errors import BridgeError, InvalidParams, MethodNotFound
from .providers import build_provider
from .suggest import NEARBY_TEXT_CURSOR, SuggestionEngine, compute_anchor
from .workspace import Diagnostic, DocumentStore, Position, Range

PROTOCOL = "assist-bridge/1"

READ_LIMIT = 4 * 1024 * 1024  # max inbound frame size on stream transports


def encode_frame(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# ----- request parameter extraction ----------------------------------------


def _params_dict(raw: Any) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise InvalidParams("params must be an object")
    return raw


def _require(params: dict, key: str) -> Any:
    if key not in params:
        raise InvalidParams(f"missing required param {key!r}")
    return params[key]


def _param_str(params: dict, key: str) -> str:
    value = _require(params, key)
    if not isinstance(value, str):
        raise InvalidParams(f"param {key!r} must be a string")
    return value


def _param_int(params: dict, key: str) -> int:
    value = _require(params, key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvalidParams(f"param {key!r} must be an integer")
    return value


def _param_position(params: dict, key: str) -> Position:
    value = _require(params, key)
    try:
        return Position.from_wire(value)
    except (KeyError, TypeError, ValueError):
        raise InvalidParams(f"param {key!r} must be a position {{line, column}}")


def _param_range(params: dict, key: str) -> Range:
    value = _require(params, key)
    try:
        return Range.from_wire(value)
    except (KeyError, TypeError, ValueError):
        raise InvalidParams(f"param {key!r} must be a range {{start, end}}")


# ----- connection -----------------------------------------------------------


class Connection:
    """One client link: frame parsing, id bookkeeping, in-flight tasks.

    enqueue must be a synchronous callable taking one serialized frame;
    synchronous enqueueing is what makes the exactly-once response
    guarantee immune to cancellation races.
    """

    def __init__(self, daemon: "Daemon", enqueue: Callable[[str], None]):
        self._daemon = daemon
        self._enqueue = enqueue
        self._last_id = 0
        self._answered: Set[int] = set()
        self._inflight: Dict[int, asyncio.Task] = {}
        self._cancel_requested: Set[int] = set()

    # -- outbound

    def _send(self, obj: dict) -> None:
        self._enqueue(encode_frame(obj))

    def send_notification(self, method: str, params: dict) -> None:
        self._send({"method": method, "params": params})

    def _respond_result(self, request_id: int, result: dict) -> None:
        if request_id in self._answered:
            return
        self._answered.add(request_id)
        self._send({"id": request_id, "result": result})

    def _respond_error(
        self,
        request_id: Optional[int],
        code: int,
        message: str,
        data: Optional[dict] = None,
    ) -> None:
        if request_id is not None:
            if request_id in self._answered:
                return
            self._answered.add(request_id)
        error: Dict[str, Any] = {"code": code, "message": message}
        if data is not None:
            error["data"] = data
        self._send({"id": request_id, "error": error})

    # -- inbound

    async def handle_raw(self, raw: "str | bytes") -> None:
        """Process one inbound frame.  Never raises."""
        try:
            parsed = json.loads(raw)
        except (ValueError, UnicodeDecodeError, RecursionError):
            # RecursionError: deeply nested input blows the parser's stack.
            self._respond_error(None, errors.PARSE_ERROR, "frame is not valid JSON")
            return
        if not isinstance(parsed, dict):
            self._respond_error(
                None, errors.INVALID_REQUEST, "frame must be a JSON object"
            )
            return
        method = parsed.get("method")
        if "id" not in parsed or parsed["id"] is None:
            # Notification: never answered.  Unknown methods are ignored.
            if method == "$/cancel":
                try:
                    self._cancel(_param_int(_params_dict(parsed.get("params")), "id"))
                except InvalidParams:
                    pass
            return
        request_id = parsed["id"]
        if not isinstance(request_id, int) or isinstance(request_id, bool) or request_id < 1:
            self._respond_error(
                None, errors.INVALID_REQUEST, "request id must be a positive integer"
            )
            return
        if request_id <= self._last_id:
            # Reused or decreasing id: the original answer stands.
            self._respond_error(
                None,
                errors.INVALID_REQUEST,
                f"request id {request_id} is not strictly increasing",
            )
            return
        self._last_id = request_id
        if not isinstance(method, str):
            self._respond_error(
                request_id, errors.INVALID_REQUEST, "method must be a string"
            )
            return
        task = asyncio.get_running_loop().create_task(
            self._run(request_id, method, parsed.get("params"))
        )
        self._inflight[request_id] = task

    async def _run(self, request_id: int, method: str, params: Any) -> None:
        try:
            result = await self._daemon.dispatch(self, method, _params_dict(params))
            self._respond_result(request_id, result)
        except asyncio.CancelledError:
            self._respond_error(request_id, errors.REQUEST_CANCELLED, "request cancelled")
        except BridgeError as exc:
            wire = exc.to_wire()
            self._respond_error(request_id, wire["code"], wire["message"], wire["data"])
        except Exception as exc:
            self._respond_error(
                request_id,
                errors.INTERNAL_ERROR,
                f"internal error: {type(exc).__name__}",
            )
        finally:
            self._inflight.pop(request_id, None)

    def _cancel(self, target_id: int) -> bool:
        task = self._inflight.get(target_id)
        if task is None or target_id in self._cancel_requested:
            return False
        self._cancel_requested.add(target_id)
        task.cancel()
        return True

    def cancel_request(self, target_id: int) -> bool:
        return self._cancel(target_id)

    async def drain_inflight(self) -> None:
        for task in list(self._inflight.values()):
            try:
                await task
            except asyncio.CancelledError:
                pass


# ----- daemon ---------------------------------------------------------------


Handler = Callable[[Connection, dict], Awaitable[dict]]


class Daemon:
    """Wires the document store, suggestion engine, and chat service to
    the protocol, and fans notifications out to every connection."""

    def __init__(self, config: Optional[Config] = None, providers: Optional[List[object]] = None):
        self.config = config if config is not None else load_config(None)
        self.store = DocumentStore()
        if providers is None:
            providers = [build_provider(cfg) for cfg in self.config.providers]
        self.providers = providers
        registry = SyntaxRegistry(self.config.comment_overrides)
        self.engine = SuggestionEngine(
            store=self.store,
            providers=providers,
            registry=registry,
            debounce_ms=self.config.debounce_ms,
            prefetch_capacity=self.config.prefetch_capacity,
            caps=self.config.caps,
            notify=self.notify_all,
        )
        chat_candidates = sorted(
            (p for p in providers if p.config.kind in ("chat", "mock")),
            key=lambda p: p.config.priority,
        )
        self.chat = ChatService(
            store=self.store,
            provider=chat_candidates[0] if chat_candidates else None,
            templates=self.config.templates,
            state_dir=self.config.state_dir,
            history_cap=self.config.history_cap,
            caps=self.config.caps,
            temperature=self.config.temperature,
            notify=self.notify_all,
        )
        self.connections: List[Connection] = []
        self.shutdown_event = asyncio.Event()
        self._methods: Dict[str, Handler] = {
            "workspace/open": self._h_workspace_open,
            "workspace/edit": self._h_workspace_edit,
            "workspace/diagnostics": self._h_workspace_diagnostics,
            "suggest/get": self._h_suggest_get,
            "suggest/next": self._h_suggest_next,
            "suggest/previous": self._h_suggest_previous,
            "suggest/accept": self._h_suggest_accept,
            "suggest/reject": self._h_suggest_reject,
            "suggest/realtime": self._h_suggest_realtime,
            "suggest/prefetch": self._h_suggest_prefetch,
            "suggest/anchor": self._h_suggest_anchor,
            "chat/new": self._h_chat_new,
            "chat/send": self._h_chat_send,
            "chat/promptToCode": self._h_chat_prompt_to_code,
            "chat/applyPatch": self._h_chat_apply_patch,
            "admin/shutdown": self._h_admin_shutdown,
            "$/cancel": self._h_cancel,
        }

    # -- connection lifecycle

    def connect(self, enqueue: Callable[[str], None]) -> Connection:
        conn = Connection(self, enqueue)
        self.connections.append(conn)
        return conn

    def disconnect(self, conn: Connection) -> None:
        if conn in self.connections:
            self.connections.remove(conn)

    async def aclose(self) -> None:
        """Cancel background engine work and release provider resources."""
        await self.engine.aclose()
        for provider in self.providers:
            close = getattr(provider, "aclose", None)
            if close is not None:
                await close()

    def notify_all(self, method: str, params: dict) -> None:
        for conn in list(self.connections):
            conn.send_notification(method, params)

    # -- dispatch

    async def dispatch(self, conn: Connection, method: str, params: dict) -> dict:
        handler = self._methods.get(method)
        if handler is None:
            raise MethodNotFound(f"unknown method {method!r}", {"method": method})
        return await handler(conn, params)

    # -- workspace

    async def _h_workspace_open(self, conn: Connection, params: dict) -> dict:
        doc = self.store.open(
            _param_str(params, "uri"),
            _param_str(params, "languageId"),
            _param_str(params, "content"),
        )
        return {"document": doc.to_wire()}

    async def _h_workspace_edit(self, conn: Connection, params: dict) -> dict:
        uri = _param_str(params, "uri")
        expected = _param_int(params, "expectedVersion")
        rng = _param_range(params, "range")
        new_text = _param_str(params, "newText")
        async with self.store.lock(uri):
            doc = self.store.apply_edit(uri, expected, rng, new_text)
        return {"document": doc.to_wire()}

    async def _h_workspace_diagnostics(self, conn: Connection, params: dict) -> dict:
        uri = _param_str(params, "uri")
        raw = _require(params, "diagnostics")
        if not isinstance(raw, list):
            raise InvalidParams("param 'diagnostics' must be an array")
        try:
            diagnostics = [Diagnostic.from_wire(entry) for entry in raw]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParams(f"malformed diagnostic: {exc}")
        async with self.store.lock(uri):
            doc = self.store.set_diagnostics(uri, diagnostics)
        return {"document": doc.to_wire()}

    # -- suggestions

    async def _h_suggest_get(self, conn: Connection, params: dict) -> dict:
        uri = _param_str(params, "uri")
        cursor = _param_position(params, "cursor")
        mode = params.get("mode", NEARBY_TEXT_CURSOR)
        if not isinstance(mode, str):
            raise InvalidParams("param 'mode' must be a string")
        comment_mode = params.get("commentMode", False)
        if not isinstance(comment_mode, bool):
            raise InvalidParams("param 'commentMode' must be a boolean")
        async with self.store.lock(uri):
            session = await self.engine.get_suggestions(uri, cursor, mode, comment_mode)
        return {"session": session.to_wire()}

    async def _h_suggest_next(self, conn: Connection, params: dict) -> dict:
        session = self.engine.next_suggestion(_param_str(params, "sessionId"))
        return {"session": session.to_wire()}

    async def _h_suggest_previous(self, conn: Connection, params: dict) -> dict:
        session = self.engine.previous_suggestion(_param_str(params, "sessionId"))
        return {"session": session.to_wire()}

    async def _h_suggest_accept(self, conn: Connection, params: dict) -> dict:
        session_id = _param_str(params, "sessionId")
        session = self.engine.session(session_id)
        async with self.store.lock(session.document_id):
            doc, applied = self.engine.accept_suggestion(session_id)
        return {"document": doc.to_wire(), "appliedRange": applied.to_wire()}

    async def _h_suggest_reject(self, conn: Connection, params: dict) -> dict:
        session_id = _param_str(params, "sessionId")
        session = self.engine.session(session_id)
        async with self.store.lock(session.document_id):
            doc = self.engine.reject_suggestion(session_id)
        return {"document": doc.to_wire()}

    async def _h_suggest_realtime(self, conn: Connection, params: dict) -> dict:
        return self.engine.schedule_realtime(
            _param_str(params, "uri"),
            _param_int(params, "version"),
            _param_position(params, "cursor"),
        )

    async def _h_suggest_prefetch(self, conn: Connection, params: dict) -> dict:
        return self.engine.prefetch(
            _param_str(params, "uri"), _param_position(params, "cursor")
        )

    async def _h_suggest_anchor(self, conn: Connection, params: dict) -> dict:
        doc = self.store.get(_param_str(params, "uri"))
        anchor = compute_anchor(
            doc,
            _param_position(params, "cursor"),
            _param_str(params, "mode"),
        )
        return {"anchor": anchor.to_wire()}

    # -- chat

    async def _h_chat_new(self, conn: Connection, params: dict) -> dict:
        conv = self.chat.new_conversation()
        return {"conversationId": conv.id}

    async def _h_chat_send(self, conn: Connection, params: dict) -> dict:
        conversation_id = _param_str(params, "conversationId")
        text = _param_str(params, "text")
        attach_raw = params.get("attach")
        attach = None
        if attach_raw is not None:
            if not isinstance(attach_raw, dict):
                raise InvalidParams("param 'attach' must be an object")
            uri = _param_str(attach_raw, "uri")
            doc = self.store.get(uri)
            selection = None
            if "selection" in attach_raw:
                selection = _param_range(attach_raw, "selection")
            if "cursor" in attach_raw:
                cursor = _param_position(attach_raw, "cursor")
            elif selection is not None:
                cursor = selection.start
            else:
                cursor = Position(0, 0)
            attach = assemble_context(doc, cursor, selection, self.config.caps)
        message = await self.chat.send_message(conversation_id, text, attach)
        return {"conversationId": conversation_id, "message": message.to_wire()}

    async def _h_chat_prompt_to_code(self, conn: Connection, params: dict) -> dict:
        patch = await self.chat.prompt_to_code(
            _param_str(params, "uri"),
            _param_range(params, "range"),
            _param_str(params, "instruction"),
        )
        return {"patch": patch.to_wire()}

    async def _h_chat_apply_patch(self, conn: Connection, params: dict) -> dict:
        uri = _param_str(params, "uri")
        raw = _require(params, "patch")
        try:
            patch = Patch.from_wire(raw)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParams(f"malformed patch: {exc}")
        async with self.store.lock(uri):
            doc = self.chat.apply_patch(uri, patch)
        return {"document": doc.to_wire()}

    # -- admin

    async def _h_admin_shutdown(self, conn: Connection, params: dict) -> dict:
        self.shutdown_event.set()
        return {"ok": True, "protocol": PROTOCOL}

    async def _h_cancel(self, conn: Connection, params: dict) -> dict:
        return {"cancelled": conn.cancel_request(_param_int(params, "id"))}


# ----- transports -----------------------------------------------------------


async def serve_tcp(daemon: Daemon, host: str, port: int) -> None:
    async def on_client(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        def enqueue(line: str) -> None:
            writer.write(line.encode("utf-8") + b"\n")

        conn = daemon.connect(enqueue)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if line.strip():
                    await conn.handle_raw(line)
        finally:
            daemon.disconnect(conn)
            writer.close()

    try:
        server = await asyncio.start_server(on_client, host, port, limit=READ_LIMIT)
    except OSError as exc:
        raise errors.BindFailed(f"cannot bind tcp {host}:{port}: {exc.strerror}")
    async with server:
        await daemon.shutdown_event.wait()
    await daemon.aclose()


async def serve_stdio(daemon: Daemon) -> None:
    loop = asyncio.get_running_loop()
    reader = asyncio.StreamReader(limit=READ_LIMIT)
    protocol = asyncio.StreamReaderProtocol(reader)
    await loop.connect_read_pipe(lambda: protocol, sys.stdin)

    def enqueue(line: str) -> None:
        sys.stdout.write(line + "\n")
        sys.stdout.flush()

    conn = daemon.connect(enqueue)
    stop = loop.create_task(daemon.shutdown_event.wait())
    try:
        while not daemon.shutdown_event.is_set():
            read = loop.create_task(reader.readline())
            done, _ = await asyncio.wait({read, stop}, return_when=asyncio.FIRST_COMPLETED)
            if read in done:
                line = read.result()
                if not line:
                    break
                if line.strip():
                    await conn.handle_raw(line)
            else:
                read.cancel()
                break
        await conn.drain_inflight()
    finally:
        stop.cancel()
        daemon.disconnect(conn)
        await daemon.aclose()


async def serve_websocket(daemon: Daemon, host: str, port: int) -> None:
    import websockets

    async def on_client(websocket):
        outbox: asyncio.Queue = asyncio.Queue()

        async def pump():
            while True:
                frame = await outbox.get()
                await websocket.send(frame)

        sender = asyncio.get_running_loop().create_task(pump())
        conn = daemon.connect(outbox.put_nowait)
        try:
            async for message in websocket:
                await conn.handle_raw(message)
        except websockets.ConnectionClosed:
            pass
        finally:
            daemon.disconnect(conn)
            sender.cancel()

    try:
        server = await websockets.serve(on_client, host, port, max_size=READ_LIMIT)
    except OSError as exc:
        raise errors.BindFailed(f"cannot bind ws {host}:{port}: {exc.strerror}")
    async with server:
        await daemon.shutdown_event.wait()
    await daemon.aclose()


# ----- in-process client (tests, replay, eval) ------------------------------


class WireError(Exception):
    def __init__(self, code: int, message: str, data: Optional[dict] = None):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message
        self.data = data or {}


class InProcessClient:
    """Drives a daemon through the real frame path without a socket.

    Keeps every received frame, in arrival order, for transcript output.
    """

    def __init__(self, daemon: Daemon):
        self._daemon = daemon
        self._inbox: "asyncio.Queue[str]" = asyncio.Queue()
        self._conn = daemon.connect(self._inbox.put_nowait)
        self._next_id = 1
        self.sent: List[str] = []
        self.received: List[str] = []
        self._pending_notifications: List[dict] = []
        self._orphan_responses: List[dict] = []

    @property
    def connection(self) -> Connection:
        return self._conn

    def close(self) -> None:
        self._daemon.disconnect(self._conn)

    async def send_raw(self, raw: str) -> None:
        self.sent.append(raw)
        await self._conn.handle_raw(raw)

    async def next_frame(self) -> dict:
        frame = await self._inbox.get()
        self.received.append(frame)
        return json.loads(frame)

    async def settle(self) -> List[dict]:
        """Wait out in-flight requests, then drain every queued frame."""
        await self._conn.drain_inflight()
        frames: List[dict] = []
        while not self._inbox.empty():
            frames.append(await self.next_frame())
        return frames

    async def send_envelope(self, envelope: dict) -> Optional[dict]:
        """Send a pre-built envelope; await its response when it has an id.

        Unlike request(), error responses are returned, not raised, so a
        replayed transcript can include failure frames.
        """
        await self.send_raw(encode_frame(envelope))
        request_id = envelope.get("id")
        if request_id is None:
            return None
        while True:
            frame = await self.next_frame()
            if frame.get("id") == request_id:
                return frame
            if "method" in frame:
                self._pending_notifications.append(frame)
            else:
                self._orphan_responses.append(frame)

    async def request(self, method: str, params: Optional[dict] = None) -> dict:
        request_id = self._next_id
        self._next_id += 1
        envelope: Dict[str, Any] = {"id": request_id, "method": method}
        if params is not None:
            envelope["params"] = params
        await self.send_raw(encode_frame(envelope))
        while True:
            frame = await self.next_frame()
            if frame.get("id") == request_id:
                if "error" in frame:
                    err = frame["error"]
                    raise WireError(err["code"], err["message"], err.get("data"))
                return frame["result"]
            if "method" in frame:
                self._pending_notifications.append(frame)
            else:
                self._orphan_responses.append(frame)

    async def notify(self, method: str, params: Optional[dict] = None) -> None:
        envelope: Dict[str, Any] = {"method": method}
        if params is not None:
            envelope["params"] = params
        await self.send_raw(encode_frame(envelope))

    async def await_notification(self, method: str, timeout: float = 5.0) -> dict:
        for i, frame in enumerate(self._pending_notifications):
            if frame.get("method") == method:
                return self._pending_notifications.pop(i)["params"]
        deadline = asyncio.get_running_loop().time() + timeout
        while True:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                raise asyncio.TimeoutError(f"no {method!r} notification arrived")
            frame = await asyncio.wait_for(self.next_frame(), remaining)
            if frame.get("method") == method:
                return frame["params"]
            if "method" in frame:
                self._pending_notifications.append(frame)
            else:
                self._orphan_responses.append(frame)
