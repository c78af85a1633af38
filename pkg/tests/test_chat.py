"""Chat conversations, streaming, persistence, prompt-to-code, patches."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from assist_bridge.chat import (
    ChatService,
    Patch,
    PatchEdit,
    extract_first_fenced_block,
)
from assist_bridge.config import default_templates
from assist_bridge.context import assemble_context
from assist_bridge.errors import (
    ConversationNotFound,
    ConversationTooLong,
    InvalidParams,
    MissingTemplate,
    NoCodeBlockInReply,
    OverlappingEdits,
    VersionMismatch,
)
from assist_bridge.providers import (
    HCF_BRUTEFORCE_SWIFT,
    ChatMessage,
    MockProvider,
)
from assist_bridge.workspace import DocumentStore, Position, Range

URI = "file:///play/main.swift"


def rng(l1: int, c1: int, l2: int, c2: int) -> Range:
    return Range(Position(l1, c1), Position(l2, c2))


def service(
    state_dir: Path | None = None,
    provider: MockProvider | None = None,
    history_cap: int = 64,
    notify=None,
    templates=None,
):
    store = DocumentStore()
    provider = provider or MockProvider()
    svc = ChatService(
        store=store,
        provider=provider,
        templates=default_templates() if templates is None else templates,
        state_dir=state_dir,
        history_cap=history_cap,
        notify=notify,
    )
    return store, svc, provider


# ---- fenced block extraction ------------------------------------------------


def test_fenced_block_extraction():
    text = "Sure:\n\n```swift\nlet a = 1\nlet b = 2\n```\nDone."
    assert extract_first_fenced_block(text) == "let a = 1\nlet b = 2\n"


def test_fenced_block_takes_the_first_of_several():
    text = "```\none\n```\nand\n```\ntwo\n```"
    assert extract_first_fenced_block(text) == "one\n"


def test_fenced_block_absent():
    assert extract_first_fenced_block("no code here") is None


# ---- conversations ----------------------------------------------------------


async def test_conversation_ids_and_system_prompt():
    store, svc, _ = service()
    first = svc.new_conversation()
    second = svc.new_conversation()
    assert (first.id, second.id) == ("c1", "c2")
    assert first.messages[0].role == "system"


async def test_ping_pong_round_trip():
    store, svc, mock = service()
    conv = svc.new_conversation()
    reply = await svc.send_message(conv.id, "ping")
    assert reply.content == "pong"
    assert [m.role for m in conv.messages] == ["system", "user", "assistant"]
    assert len(mock.calls("chat")) == 1


async def test_full_history_travels_with_every_request():
    store, svc, mock = service()
    conv = svc.new_conversation()
    await svc.send_message(conv.id, "ping")
    await svc.send_message(conv.id, "and again: ping")
    request = mock.calls("chat")[1].request
    assert [m.role for m in request.messages] == [
        "system", "user", "assistant", "user",
    ]


async def test_unknown_conversation_and_empty_text():
    store, svc, _ = service()
    with pytest.raises(ConversationNotFound):
        await svc.send_message("c404", "hello")
    conv = svc.new_conversation()
    with pytest.raises(InvalidParams):
        await svc.send_message(conv.id, "")


async def test_stream_chunks_are_notified_and_join_to_the_reply():
    notes = []
    store, svc, _ = service(notify=lambda m, p: notes.append((m, p)))
    conv = svc.new_conversation()
    reply = await svc.send_message(conv.id, "Find the LCM of Two Numbers")
    chunk_notes = [p for m, p in notes if m == "chat/streamChunk"]
    assert len(chunk_notes) > 1
    assert all(p["conversationId"] == conv.id for p in chunk_notes)
    assert "".join(p["chunk"] for p in chunk_notes) == reply.content


# ---- plugins ----------------------------------------------------------------


async def test_echo_plugin_answers_locally():
    store, svc, mock = service()
    conv = svc.new_conversation()
    reply = await svc.send_message(conv.id, "/echo hello there")
    assert reply.content == "hello there"
    assert (await svc.send_message(conv.id, "/echo")).content == "(nothing to echo)"
    assert mock.calls("chat") == []  # plugins never hit the provider


async def test_registered_plugins_extend_the_table():
    store, svc, _ = service()
    svc.plugins["rev"] = lambda arg: arg[::-1]
    conv = svc.new_conversation()
    assert (await svc.send_message(conv.id, "/rev abc")).content == "cba"


async def test_unknown_slash_command_falls_through_to_the_provider():
    store, svc, mock = service()
    conv = svc.new_conversation()
    reply = await svc.send_message(conv.id, "/frobnicate the build")
    assert reply.content == mock.fallback_reply
    assert len(mock.calls("chat")) == 1


# ---- attachments ------------------------------------------------------------


async def test_attachment_renders_context_into_the_user_message():
    store, svc, mock = service()
    store.open(URI, "swift", "let total = price * 2\n")
    ctx = assemble_context(
        store.get(URI), Position(0, 0), selection=rng(0, 0, 0, 21)
    )
    conv = svc.new_conversation()
    await svc.send_message(conv.id, "what does this do?", attach=ctx)
    sent = mock.calls("chat")[0].request.messages[-1]
    assert sent.role == "user"
    assert URI in sent.content
    assert "let total = price * 2" in sent.content
    assert "what does this do?" in sent.content
    assert conv.attachments == [ctx]


# ---- history cap ------------------------------------------------------------


async def test_history_cap_drops_the_oldest_non_system_message():
    store, svc, _ = service(history_cap=4)
    conv = svc.new_conversation()
    await svc.send_message(conv.id, "ping")        # system,u,a
    await svc.send_message(conv.id, "ping again")  # drops to 4
    assert len(conv.messages) == 4
    assert conv.messages[0].role == "system"
    assert all(m.role != "system" for m in conv.messages[1:])


async def test_history_that_is_all_system_messages_cannot_shrink():
    store, svc, _ = service(history_cap=1)
    conv = svc.new_conversation()
    with pytest.raises(ConversationTooLong):
        svc._append(conv, ChatMessage(role="system", content="another"))


# ---- persistence ------------------------------------------------------------


async def test_conversation_log_is_append_only_jsonl(tmp_path):
    store, svc, _ = service(state_dir=tmp_path)
    store.open(URI, "swift", "let a = 1\n")
    conv = svc.new_conversation()
    await svc.send_message(conv.id, "ping")
    ctx = assemble_context(store.get(URI), Position(0, 0))
    await svc.send_message(conv.id, "look", attach=ctx)

    log = tmp_path / f"{conv.id}.jsonl"
    assert log.exists()
    records = [json.loads(line) for line in log.read_text().splitlines()]
    events = [r["event"] for r in records]
    assert events[0] == "created"
    assert events.count("attachment") == 1
    assert events.count("message") >= 5  # system + 2 user + 2 assistant
    assert all("at" in r for r in records[1:])
    roles = [r["role"] for r in records if r["event"] == "message"]
    assert roles[0] == "system"


async def test_dropped_messages_are_logged(tmp_path):
    store, svc, _ = service(state_dir=tmp_path, history_cap=3)
    conv = svc.new_conversation()
    await svc.send_message(conv.id, "ping")
    await svc.send_message(conv.id, "ping")
    records = [
        json.loads(line)
        for line in (tmp_path / f"{conv.id}.jsonl").read_text().splitlines()
    ]
    assert any(r["event"] == "dropped" for r in records)


# ---- prompt-to-code ---------------------------------------------------------


async def test_prompt_to_code_builds_a_single_edit_patch():
    store, svc, _ = service()
    content = "// Assignment\nlet placeholder = 0\n"
    store.open(URI, "swift", content)
    selection = rng(1, 0, 2, 0)
    patch = await svc.prompt_to_code(URI, selection, "Find the HCF of Two Numbers")
    assert patch.document_id == URI
    assert patch.base_version == 0
    assert len(patch.edits) == 1
    edit = patch.edits[0]
    assert edit.range == selection
    # the selected span ends with a newline, so the patch keeps one
    assert edit.new_text == HCF_BRUTEFORCE_SWIFT + "\n"
    doc = svc.apply_patch(URI, patch)
    assert doc.content == "// Assignment\n" + HCF_BRUTEFORCE_SWIFT + "\n"
    assert doc.version == 1


async def test_prompt_to_code_without_trailing_newline_in_selection():
    provider = MockProvider(chat_rules={"fence me": "```\ncode()\n```"})
    store, svc, _ = service(provider=provider)
    store.open(URI, "swift", "a + b")
    patch = await svc.prompt_to_code(URI, rng(0, 0, 0, 5), "fence me")
    assert patch.edits[0].new_text == "code()"


async def test_prompt_to_code_needs_a_fenced_reply():
    store, svc, _ = service()
    store.open(URI, "swift", "let a = 1\n")
    with pytest.raises(NoCodeBlockInReply):
        await svc.prompt_to_code(URI, rng(0, 0, 1, 0), "please chat about nothing")


async def test_prompt_to_code_requires_an_instruction():
    store, svc, _ = service()
    store.open(URI, "swift", "x")
    with pytest.raises(InvalidParams):
        await svc.prompt_to_code(URI, rng(0, 0, 0, 1), "")


async def test_missing_template_is_reported():
    store, svc, _ = service(templates={})
    store.open(URI, "swift", "x")
    with pytest.raises(MissingTemplate):
        await svc.prompt_to_code(URI, rng(0, 0, 0, 1), "do something")


# ---- patches ----------------------------------------------------------------


def patch_for(edits, base_version: int = 0, document_id: str = URI) -> Patch:
    return Patch(
        document_id=document_id,
        base_version=base_version,
        edits=tuple(PatchEdit(range=r, new_text=t) for r, t in edits),
    )


async def test_apply_patch_example():
    store, svc, _ = service()
    store.open(URI, "swift", "abcdef")
    doc = svc.apply_patch(
        URI, patch_for([(rng(0, 0, 0, 1), "X"), (rng(0, 3, 0, 4), "Y")])
    )
    assert (doc.content, doc.version) == ("XbcYef", 1)


async def test_apply_patch_edit_order_does_not_matter():
    edits = [(rng(0, 3, 0, 4), "Y"), (rng(0, 0, 0, 1), "X")]
    store, svc, _ = service()
    store.open(URI, "swift", "abcdef")
    doc = svc.apply_patch(URI, patch_for(edits))
    assert doc.content == "XbcYef"


async def test_apply_patch_overlap_is_atomic():
    store, svc, _ = service()
    store.open(URI, "swift", "abcd")
    with pytest.raises(OverlappingEdits):
        svc.apply_patch(
            URI, patch_for([(rng(0, 0, 0, 2), "X"), (rng(0, 1, 0, 3), "Y")])
        )
    doc = store.get(URI)
    assert (doc.content, doc.version) == ("abcd", 0)


async def test_apply_patch_stale_base_version():
    store, svc, _ = service()
    store.open(URI, "swift", "abcd")
    store.apply_edit(URI, 0, rng(0, 0, 0, 0), "z")
    with pytest.raises(VersionMismatch):
        svc.apply_patch(URI, patch_for([(rng(0, 0, 0, 1), "X")], base_version=0))


async def test_apply_patch_to_the_wrong_document_is_refused():
    store, svc, _ = service()
    store.open(URI, "swift", "abcd")
    with pytest.raises(InvalidParams):
        svc.apply_patch(URI, patch_for([], document_id="file:///other.swift"))


async def test_apply_patch_with_no_edits_still_bumps_the_version():
    store, svc, _ = service()
    store.open(URI, "swift", "abcd")
    doc = svc.apply_patch(URI, patch_for([]))
    assert (doc.content, doc.version) == ("abcd", 1)


def test_patch_wire_round_trip():
    patch = patch_for([(rng(0, 1, 2, 3), "new")], base_version=7)
    assert Patch.from_wire(patch.to_wire()) == patch
