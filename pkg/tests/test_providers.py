"""Provider backends: deterministic mock, HTTP completion, SSE chat.

HTTP paths run against an in-memory httpx transport, so no sockets are
involved and failure injection is exact.
"""
from __future__ import annotations

import json

import httpx
import pytest

from assist_bridge.errors import AuthFailed, ProviderProtocolError, ProviderTimeout
from assist_bridge.providers import (
    ChatMessage,
    ChatRequest,
    CompletionRequest,
    HttpCompletionProvider,
    MockProvider,
    OpenAiChatProvider,
    ProviderConfig,
    build_provider,
)


def completion_request(prefix: str, max_results: int = 10) -> CompletionRequest:
    return CompletionRequest(
        prefix=prefix, suffix="", language_id="swift",
        relative_path="file:///a.swift", max_results=max_results,
    )


def chat_request(*user_texts: str) -> ChatRequest:
    return ChatRequest(
        messages=tuple(ChatMessage(role="user", content=t) for t in user_texts)
    )


# ---- request validation -----------------------------------------------------


def test_completion_request_bounds():
    with pytest.raises(ValueError):
        completion_request("x", max_results=0)
    with pytest.raises(ValueError):
        completion_request("x", max_results=11)


def test_chat_message_roles():
    with pytest.raises(ValueError):
        ChatMessage(role="tool", content="x")
    with pytest.raises(ValueError):
        ChatMessage(role="user", content="")
    ChatMessage(role="system", content="")  # system may be empty


def test_chat_request_needs_a_user_message():
    with pytest.raises(ValueError):
        ChatRequest(messages=(ChatMessage(role="system", content="s"),))
    with pytest.raises(ValueError):
        ChatRequest(
            messages=(ChatMessage(role="user", content="u"),), temperature=3.0
        )


def test_provider_config_validation():
    with pytest.raises(ValueError):
        ProviderConfig(id="p", kind="telepathy")
    with pytest.raises(ValueError):
        ProviderConfig(id="p", kind="mock", timeout_ms=0)


# ---- deterministic mock -----------------------------------------------------


async def test_mock_completions_match_on_prefix_end():
    mock = MockProvider()
    results = await mock.fetch_completions(completion_request("main()\nlet x = "))
    assert [r.text for r in results] == ["42"]
    assert await mock.fetch_completions(completion_request("nothing here")) == []


async def test_mock_is_deterministic_across_calls():
    mock = MockProvider()
    req = completion_request("func gcd(")
    first = await mock.fetch_completions(req)
    second = await mock.fetch_completions(req)
    assert first == second
    assert len(mock.calls("completions")) == 2
    assert mock.calls("completions")[0].request is req


async def test_mock_truncates_to_max_results():
    mock = MockProvider(completion_rules={"x": ("a", "b", "c")})
    results = await mock.fetch_completions(completion_request("fix", max_results=1))
    assert [r.text for r in results] == ["a"]


async def test_mock_chat_answers_ping():
    mock = MockProvider()
    reply = await mock.chat(chat_request("ping"))
    assert reply.content == "pong"
    assert reply.role == "assistant"


async def test_mock_chat_prefers_the_longest_matching_key():
    mock = MockProvider()
    reply = await mock.chat(
        chat_request("Find the HCF of Two Numbers by Euclidean Algorithm")
    )
    # must pick the Euclid rule, not its shorter "HCF of Two Numbers" prefix
    assert "while b != 0" in reply.content
    assert "result -= 1" not in reply.content


async def test_mock_chat_matches_the_last_user_message_only():
    mock = MockProvider()
    reply = await mock.chat(chat_request("ping", "tell me a story"))
    assert reply.content == mock.fallback_reply
    assert "```" not in reply.content


async def test_mock_chat_streams_chunks_that_join_to_the_reply():
    mock = MockProvider()
    chunks: list[str] = []
    reply = await mock.chat(
        chat_request("Find the LCM of Two Numbers"), chunks.append
    )
    assert "".join(chunks) == reply.content
    assert len(chunks) > 1  # multi-line replies stream line by line


async def test_mock_failure_injection_still_logs_the_call():
    mock = MockProvider(fail=RuntimeError("backend down"))
    with pytest.raises(RuntimeError):
        await mock.fetch_completions(completion_request("let x = "))
    assert len(mock.calls("completions")) == 1


def test_build_provider_maps_kinds():
    assert isinstance(
        build_provider(ProviderConfig(id="a", kind="completion")), HttpCompletionProvider
    )
    assert isinstance(
        build_provider(ProviderConfig(id="b", kind="chat")), OpenAiChatProvider
    )
    assert isinstance(build_provider(ProviderConfig(id="c", kind="mock")), MockProvider)


# ---- HTTP completion provider ----------------------------------------------


def completion_config(**kw) -> ProviderConfig:
    base = dict(
        id="comp", kind="completion", endpoint="https://api.example.test/v1/complete"
    )
    base.update(kw)
    return ProviderConfig(**base)


async def test_http_completion_round_trip(monkeypatch):
    monkeypatch.setenv("COMP_KEY", "k-123")
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(
            200, json={"completions": [{"text": "one"}, {"text": "two"}]}
        )

    provider = HttpCompletionProvider(
        completion_config(credential_ref="COMP_KEY"),
        transport=httpx.MockTransport(handler),
    )
    results = await provider.fetch_completions(
        completion_request("prefix text", max_results=2)
    )
    assert [r.text for r in results] == ["one", "two"]
    assert seen["auth"] == "Bearer k-123"
    assert seen["body"] == {
        "prefix": "prefix text",
        "suffix": "",
        "languageId": "swift",
        "path": "file:///a.swift",
        "maxResults": 2,
    }


async def test_http_completion_truncates_oversized_reply():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(
            200, json={"completions": [{"text": t} for t in "abcde"]}
        )

    provider = HttpCompletionProvider(
        completion_config(), transport=httpx.MockTransport(handler)
    )
    results = await provider.fetch_completions(completion_request("p", max_results=2))
    assert len(results) == 2


@pytest.mark.parametrize("status", [401, 403])
async def test_http_completion_auth_rejection(status):
    provider = HttpCompletionProvider(
        completion_config(),
        transport=httpx.MockTransport(lambda r: httpx.Response(status)),
    )
    with pytest.raises(AuthFailed):
        await provider.fetch_completions(completion_request("p"))


async def test_http_completion_server_error():
    provider = HttpCompletionProvider(
        completion_config(),
        transport=httpx.MockTransport(lambda r: httpx.Response(500)),
    )
    with pytest.raises(ProviderProtocolError):
        await provider.fetch_completions(completion_request("p"))


async def test_http_completion_malformed_body():
    provider = HttpCompletionProvider(
        completion_config(),
        transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})),
    )
    with pytest.raises(ProviderProtocolError):
        await provider.fetch_completions(completion_request("p"))


async def test_http_completion_timeout_and_unreachable():
    def time_out(request):
        raise httpx.ConnectTimeout("too slow")

    provider = HttpCompletionProvider(
        completion_config(), transport=httpx.MockTransport(time_out)
    )
    with pytest.raises(ProviderTimeout):
        await provider.fetch_completions(completion_request("p"))

    def refuse(request):
        raise httpx.ConnectError("no route")

    provider = HttpCompletionProvider(
        completion_config(), transport=httpx.MockTransport(refuse)
    )
    with pytest.raises(ProviderTimeout):
        await provider.fetch_completions(completion_request("p"))


async def test_http_completion_rejects_chat():
    provider = HttpCompletionProvider(completion_config())
    with pytest.raises(ValueError):
        await provider.chat(chat_request("hello"))


# ---- SSE chat provider ------------------------------------------------------


def chat_config(**kw) -> ProviderConfig:
    base = dict(
        id="llm", kind="chat", endpoint="https://api.example.test/v1/chat",
        model_name="demo-model",
    )
    base.update(kw)
    return ProviderConfig(**base)


def sse(*events: str) -> bytes:
    return "".join(f"data: {event}\n\n" for event in events).encode("utf-8")


def delta(text: str) -> str:
    return json.dumps({"choices": [{"delta": {"content": text}}]})


async def test_sse_chat_streams_and_joins(monkeypatch):
    monkeypatch.setenv("LLM_KEY", "k-999")
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["body"] = json.loads(request.content)
        return httpx.Response(
            200, content=sse(delta("Hel"), delta("lo "), delta("there"), "[DONE]")
        )

    provider = OpenAiChatProvider(
        chat_config(credential_ref="LLM_KEY"), transport=httpx.MockTransport(handler)
    )
    chunks: list[str] = []
    reply = await provider.chat(chat_request("hi"), chunks.append)
    assert reply.content == "Hello there"
    assert chunks == ["Hel", "lo ", "there"]
    assert seen["body"]["model"] == "demo-model"
    assert seen["body"]["stream"] is True
    assert seen["body"]["messages"] == [{"role": "user", "content": "hi"}]


async def test_sse_chat_stops_at_done_marker():
    def handler(request):
        return httpx.Response(
            200, content=sse(delta("before"), "[DONE]", delta("after"))
        )

    provider = OpenAiChatProvider(
        chat_config(), transport=httpx.MockTransport(handler)
    )
    reply = await provider.chat(chat_request("hi"))
    assert reply.content == "before"


async def test_sse_chat_rejects_malformed_event():
    provider = OpenAiChatProvider(
        chat_config(),
        transport=httpx.MockTransport(
            lambda r: httpx.Response(200, content=b"data: {not json}\n\n")
        ),
    )
    with pytest.raises(ProviderProtocolError):
        await provider.chat(chat_request("hi"))


async def test_sse_chat_rejects_empty_stream():
    provider = OpenAiChatProvider(
        chat_config(),
        transport=httpx.MockTransport(
            lambda r: httpx.Response(200, content=sse("[DONE]"))
        ),
    )
    with pytest.raises(ProviderProtocolError):
        await provider.chat(chat_request("hi"))


async def test_sse_chat_auth_rejection():
    provider = OpenAiChatProvider(
        chat_config(),
        transport=httpx.MockTransport(lambda r: httpx.Response(401, content=b"denied")),
    )
    with pytest.raises(AuthFailed):
        await provider.chat(chat_request("hi"))


# ---- credential handling ----------------------------------------------------


async def test_missing_credential_names_the_variable_not_a_value(monkeypatch):
    monkeypatch.delenv("NOT_SET_ANYWHERE", raising=False)
    provider = HttpCompletionProvider(
        completion_config(credential_ref="NOT_SET_ANYWHERE")
    )
    with pytest.raises(AuthFailed) as info:
        await provider.fetch_completions(completion_request("p"))
    assert "NOT_SET_ANYWHERE" in str(info.value)


async def test_secret_value_never_appears_in_errors(monkeypatch):
    secret = "sk-live-T0PSECRET-4242"
    monkeypatch.setenv("HYGIENE_KEY", secret)

    failures = [
        httpx.MockTransport(lambda r: httpx.Response(401)),
        httpx.MockTransport(lambda r: httpx.Response(500)),
        httpx.MockTransport(lambda r: httpx.Response(200, json={"bad": True})),
    ]

    def raise_timeout(request):
        raise httpx.ConnectTimeout("too slow")

    failures.append(httpx.MockTransport(raise_timeout))

    for transport in failures:
        provider = HttpCompletionProvider(
            completion_config(credential_ref="HYGIENE_KEY"), transport=transport
        )
        with pytest.raises(Exception) as info:
            await provider.fetch_completions(completion_request("p"))
        exc = info.value
        surfaces = [str(exc), repr(exc)]
        if hasattr(exc, "to_wire"):
            surfaces.append(json.dumps(exc.to_wire()))
        for text in surfaces:
            assert secret not in text
