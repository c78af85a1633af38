"""Chat conversations, prompt-to-code, and patch application.

Conversations carry full message history to the chat provider and stream
replies back chunk by chunk.  Editor context can be attached to a message,
in which case it is rendered through the chat template around the user's
question.  prompt-to-code turns an instruction over a selected range into
a Patch: an atomic set of non-overlapping range edits applied with one
version bump.

Each conversation is persisted as an append-only JSON-lines file under
the state directory, one file per conversation id.
"""
from __future__ import annotations

import asyncio
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .context import ContextCaps, PromptContext, Template, assemble_context, render_template
from .errors import (
    AllProvidersFailed,
    ConversationNotFound,
    ConversationTooLong,
    InvalidParams,
    MissingTemplate,
    NoCodeBlockInReply,
)
from .providers import ChatMessage, ChatRequest
from .workspace import Document, DocumentStore, Range, resolve_offset

_FENCE_RE = re.compile(r"```[^`\n]*\n(.*?)```", re.DOTALL)

DEFAULT_SYSTEM_PROMPT = "You are a careful coding assistant embedded in an editor."


@dataclass(frozen=True)
class PatchEdit:
    range: Range
    new_text: str

    def to_wire(self) -> dict:
        return {"range": self.range.to_wire(), "newText": self.new_text}

    @staticmethod
    def from_wire(raw: dict) -> "PatchEdit":
        return PatchEdit(range=Range.from_wire(raw["range"]), new_text=str(raw["newText"]))


@dataclass(frozen=True)
class Patch:
    document_id: str
    base_version: int
    edits: Tuple[PatchEdit, ...]

    def to_wire(self) -> dict:
        return {
            "documentId": self.document_id,
            "baseVersion": self.base_version,
            "edits": [e.to_wire() for e in self.edits],
        }

    @staticmethod
    def from_wire(raw: dict) -> "Patch":
        return Patch(
            document_id=str(raw["documentId"]),
            base_version=int(raw["baseVersion"]),
            edits=tuple(PatchEdit.from_wire(e) for e in raw["edits"]),
        )


@dataclass
class Conversation:
    id: str
    messages: List[ChatMessage] = field(default_factory=list)
    attachments: List[PromptContext] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)


def extract_first_fenced_block(text: str) -> Optional[str]:
    """First triple-backtick fenced block's content; language tag ignored."""
    match = _FENCE_RE.search(text)
    if match is None:
        return None
    return match.group(1)


PluginHandler = Callable[[str], str]
Notifier = Callable[[str, dict], None]


def _echo_plugin(arg: str) -> str:
    return arg if arg else "(nothing to echo)"


class ChatService:
    def __init__(
        self,
        store: DocumentStore,
        provider: object,
        templates: Dict[str, Template],
        state_dir: Optional[Path] = None,
        history_cap: int = 64,
        caps: ContextCaps = ContextCaps(),
        temperature: float = 0.7,
        notify: Optional[Notifier] = None,
        system_prompt: str = DEFAULT_SYSTEM_PROMPT,
    ):
        self._store = store
        self._provider = provider
        self._templates = templates
        self._state_dir = state_dir
        self._history_cap = history_cap
        self._caps = caps
        self._temperature = temperature
        self.notify = notify
        self._system_prompt = system_prompt
        self._conversations: Dict[str, Conversation] = {}
        self._locks: Dict[str, asyncio.Lock] = {}
        self._next_id = 1
        self.plugins: Dict[str, PluginHandler] = {"echo": _echo_plugin}
        if state_dir is not None:
            state_dir.mkdir(parents=True, exist_ok=True)

    # ----- conversation bookkeeping -----------------------------------------

    def new_conversation(self) -> Conversation:
        conv = Conversation(id=f"c{self._next_id}")
        self._next_id += 1
        if self._system_prompt:
            conv.messages.append(ChatMessage(role="system", content=self._system_prompt))
        self._conversations[conv.id] = conv
        self._locks[conv.id] = asyncio.Lock()
        self._persist(conv, {"event": "created", "conversationId": conv.id})
        for message in conv.messages:
            self._persist_message(conv, message)
        return conv

    def conversation(self, conversation_id: str) -> Conversation:
        conv = self._conversations.get(conversation_id)
        if conv is None:
            raise ConversationNotFound(f"no such conversation: {conversation_id}")
        return conv

    def _chat_provider(self):
        if self._provider is None:
            raise AllProvidersFailed("no chat-capable provider is configured")
        return self._provider

    def _template(self, name: str) -> Template:
        template = self._templates.get(name)
        if template is None:
            raise MissingTemplate(f"no template named {name!r}", {"template": name})
        return template

    def _persist(self, conv: Conversation, record: dict) -> None:
        if self._state_dir is None:
            return
        record = dict(record)
        record.setdefault("at", time.time())
        path = self._state_dir / f"{conv.id}.jsonl"
        with path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")

    def _persist_message(self, conv: Conversation, message: ChatMessage) -> None:
        self._persist(
            conv, {"event": "message", "role": message.role, "content": message.content}
        )

    def _append(self, conv: Conversation, message: ChatMessage) -> None:
        conv.messages.append(message)
        self._persist_message(conv, message)
        while len(conv.messages) > self._history_cap:
            droppable = next(
                (i for i, m in enumerate(conv.messages) if m.role != "system"), None
            )
            if droppable is None:
                raise ConversationTooLong(
                    f"conversation {conv.id} cannot fit within "
                    f"{self._history_cap} messages",
                    {"conversationId": conv.id},
                )
            dropped = conv.messages.pop(droppable)
            self._persist(
                conv, {"event": "dropped", "role": dropped.role}
            )

    # ----- messaging --------------------------------------------------------

    async def send_message(
        self,
        conversation_id: str,
        text: str,
        attach: Optional[PromptContext] = None,
    ) -> ChatMessage:
        if text == "":
            raise InvalidParams("message text must be non-empty")
        conv = self.conversation(conversation_id)
        async with self._locks[conversation_id]:
            if text.startswith("/"):
                name, _, arg = text[1:].partition(" ")
                handler = self.plugins.get(name)
                if handler is not None:
                    self._append(conv, ChatMessage(role="user", content=text))
                    reply = ChatMessage(role="assistant", content=handler(arg))
                    self._append(conv, reply)
                    return reply
            content = text
            if attach is not None:
                conv.attachments.append(attach)
                self._persist(
                    conv,
                    {"event": "attachment", "path": attach.relative_path},
                )
                content = render_template(self._template("chat"), attach, instruction=text)
            self._append(conv, ChatMessage(role="user", content=content))

            def _on_chunk(chunk: str) -> None:
                if self.notify is not None:
                    self.notify(
                        "chat/streamChunk",
                        {"conversationId": conv.id, "chunk": chunk},
                    )

            provider = self._chat_provider()
            request = ChatRequest(
                messages=tuple(conv.messages),
                temperature=self._temperature,
                model_name=provider.config.model_name,
            )
            reply = await provider.chat(request, _on_chunk)
            self._append(conv, reply)
            return reply

    # ----- prompt-to-code ---------------------------------------------------

    async def prompt_to_code(self, uri: str, rng: Range, instruction: str) -> Patch:
        if instruction == "":
            raise InvalidParams("instruction must be non-empty")
        doc = self._store.get(uri)
        ctx = assemble_context(doc, rng.start, selection=rng, caps=self._caps)
        prompt = render_template(
            self._template("prompt_to_code"), ctx, instruction=instruction
        )
        messages = []
        if self._system_prompt:
            messages.append(ChatMessage(role="system", content=self._system_prompt))
        messages.append(ChatMessage(role="user", content=prompt))
        provider = self._chat_provider()
        request = ChatRequest(
            messages=tuple(messages),
            temperature=self._temperature,
            model_name=provider.config.model_name,
        )
        reply = await provider.chat(request, None)
        block = extract_first_fenced_block(reply.content)
        if block is None:
            raise NoCodeBlockInReply(
                "the reply contained no fenced code block; try rephrasing"
            )
        data = doc.content.encode("utf-8")
        span = data[
            resolve_offset(doc.content, rng.start) : resolve_offset(doc.content, rng.end)
        ].decode("utf-8")
        block = block.rstrip("\n")
        if span.endswith("\n"):
            block += "\n"
        return Patch(
            document_id=uri,
            base_version=doc.version,
            edits=(PatchEdit(range=rng, new_text=block),),
        )

    # ----- patches ----------------------------------------------------------

    def apply_patch(self, uri: str, patch: Patch) -> Document:
        if patch.document_id != uri:
            raise InvalidParams(
                f"patch targets {patch.document_id!r}, not {uri!r}",
                {"uri": uri, "patch": patch.document_id},
            )
        return self._store.apply_batch(
            uri,
            patch.base_version,
            [(edit.range, edit.new_text) for edit in patch.edits],
        )
