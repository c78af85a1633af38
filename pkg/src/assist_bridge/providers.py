"""Pluggable completion and chat backends.

Two HTTP provider kinds are supported: "completion" speaks a single POST
endpoint taking prefix/suffix context, "chat" speaks an OpenAI-compatible
chat-completions endpoint with server-sent-event streaming.  The "mock"
kind answers from deterministic in-repo tables and records every call so
tests can count fetches and inspect requests.

Credentials are always environment-variable indirection: config carries
the variable NAME, never the secret.  Secret values must not appear in
any error message or log line.
"""
from __future__ import annotations

import asyncio
import json
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import httpx

from .errors import AuthFailed, ProviderProtocolError, ProviderTimeout

KINDS = ("completion", "chat", "mock")
ROLES = ("system", "user", "assistant")

ChunkSink = Optional[Callable[[str], None]]


@dataclass(frozen=True)
class ProviderConfig:
    id: str
    kind: str
    endpoint: str = ""
    credential_ref: str = ""  # name of the env var holding the secret
    model_name: str = ""
    timeout_ms: int = 10_000
    priority: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"provider kind must be one of {KINDS}, got {self.kind!r}")
        if self.timeout_ms < 1:
            raise ValueError("timeoutMs must be >= 1")


@dataclass(frozen=True)
class CompletionRequest:
    prefix: str
    suffix: str
    language_id: str
    relative_path: str
    max_results: int = 10

    def __post_init__(self):
        if not 1 <= self.max_results <= 10:
            raise ValueError("maxResults must be in [1, 10]")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    replace_hint: str = "atCursor"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.role in ("user", "assistant") and self.content == "":
            raise ValueError(f"{self.role} message content must be non-empty")

    def to_wire(self) -> Dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatRequest:
    messages: Tuple[ChatMessage, ...]
    temperature: float = 0.7
    model_name: str = ""

    def __post_init__(self):
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("chat request needs at least one user message")
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be in [0, 2]")


def _resolve_credential(config: ProviderConfig) -> Optional[str]:
    if not config.credential_ref:
        return None
    secret = os.environ.get(config.credential_ref)
    if secret is None or secret == "":
        # Name the variable, never the value.
        raise AuthFailed(
            f"credential environment variable {config.credential_ref!r} is not set",
            {"providerId": config.id, "credentialRef": config.credential_ref},
        )
    return secret


def _headers(config: ProviderConfig) -> Dict[str, str]:
    secret = _resolve_credential(config)
    headers = {"content-type": "application/json"}
    if secret is not None:
        headers["authorization"] = f"Bearer {secret}"
    return headers


def _raise_for_status(config: ProviderConfig, response: httpx.Response) -> None:
    if response.status_code in (401, 403):
        raise AuthFailed(
            f"provider {config.id} rejected the credential "
            f"(HTTP {response.status_code})",
            {"providerId": config.id, "status": response.status_code},
        )
    if response.status_code >= 400:
        raise ProviderProtocolError(
            f"provider {config.id} answered HTTP {response.status_code}",
            {"providerId": config.id, "status": response.status_code},
        )


class HttpCompletionProvider:
    """POST {prefix, suffix, languageId, path, maxResults} -> {completions: [...]}"""

    def __init__(self, config: ProviderConfig, transport: Optional[httpx.AsyncBaseTransport] = None):
        if config.kind != "completion":
            raise ValueError("HttpCompletionProvider requires kind 'completion'")
        self.config = config
        self._transport = transport

    async def fetch_completions(self, req: CompletionRequest) -> List[CompletionResult]:
        payload = {
            "prefix": req.prefix,
            "suffix": req.suffix,
            "languageId": req.language_id,
            "path": req.relative_path,
            "maxResults": req.max_results,
        }
        timeout = self.config.timeout_ms / 1000
        headers = _headers(self.config)
        try:
            async with httpx.AsyncClient(timeout=timeout, transport=self._transport) as client:
                response = await client.post(
                    self.config.endpoint, json=payload, headers=headers
                )
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(
                f"provider {self.config.id} timed out after {self.config.timeout_ms} ms",
                {"providerId": self.config.id},
            ) from exc
        except httpx.TransportError as exc:
            raise ProviderTimeout(
                f"provider {self.config.id} endpoint unreachable",
                {"providerId": self.config.id},
            ) from exc
        _raise_for_status(self.config, response)
        try:
            body = response.json()
            entries = body["completions"]
            results = [
                CompletionResult(text=str(entry["text"]))
                for entry in entries[: req.max_results]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderProtocolError(
                f"provider {self.config.id} returned a malformed completion body",
                {"providerId": self.config.id},
            ) from exc
        return results

    async def chat(self, req: ChatRequest, on_chunk: ChunkSink = None) -> ChatMessage:
        raise ValueError(f"provider {self.config.id} does not support chat")


class OpenAiChatProvider:
    """OpenAI-compatible chat completions with SSE streaming."""

    def __init__(self, config: ProviderConfig, transport: Optional[httpx.AsyncBaseTransport] = None):
        if config.kind != "chat":
            raise ValueError("OpenAiChatProvider requires kind 'chat'")
        self.config = config
        self._transport = transport

    async def fetch_completions(self, req: CompletionRequest) -> List[CompletionResult]:
        raise ValueError(f"provider {self.config.id} does not support completions")

    async def chat(self, req: ChatRequest, on_chunk: ChunkSink = None) -> ChatMessage:
        payload = {
            "model": req.model_name or self.config.model_name,
            "messages": [m.to_wire() for m in req.messages],
            "temperature": req.temperature,
            "stream": True,
        }
        timeout = self.config.timeout_ms / 1000
        headers = _headers(self.config)
        parts: List[str] = []
        try:
            async with httpx.AsyncClient(timeout=timeout, transport=self._transport) as client:
                async with client.stream(
                    "POST", self.config.endpoint, json=payload, headers=headers
                ) as response:
                    if response.status_code >= 400:
                        await response.aread()
                    _raise_for_status(self.config, response)
                    async for line in response.aiter_lines():
                        if not line.startswith("data:"):
                            continue
                        data = line[len("data:") :].strip()
                        if data == "[DONE]":
                            break
                        chunk = self._delta_text(data)
                        if chunk:
                            parts.append(chunk)
                            if on_chunk is not None:
                                on_chunk(chunk)
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(
                f"provider {self.config.id} timed out after {self.config.timeout_ms} ms",
                {"providerId": self.config.id},
            ) from exc
        except httpx.TransportError as exc:
            raise ProviderTimeout(
                f"provider {self.config.id} endpoint unreachable",
                {"providerId": self.config.id},
            ) from exc
        content = "".join(parts)
        if content == "":
            raise ProviderProtocolError(
                f"provider {self.config.id} streamed an empty reply",
                {"providerId": self.config.id},
            )
        return ChatMessage(role="assistant", content=content)

    def _delta_text(self, data: str) -> str:
        try:
            parsed = json.loads(data)
            delta = parsed["choices"][0].get("delta", {})
            return str(delta.get("content", ""))
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ProviderProtocolError(
                f"provider {self.config.id} sent a malformed stream chunk",
                {"providerId": self.config.id},
            ) from exc


def _swift_fenced(code: str) -> str:
    return "Here is a Swift implementation:\n\n```swift\n" + code + "\n```\n"


HCF_BRUTEFORCE_SWIFT = """\
func hcf(_ a: Int, _ b: Int) -> Int {
    var result = min(a, b)
    while result > 1 {
        if a % result == 0 && b % result == 0 {
            return result
        }
        result -= 1
    }
    return 1
}"""

HCF_EUCLID_SWIFT = """\
func hcf(_ a: Int, _ b: Int) -> Int {
    var a = a
    var b = b
    while b != 0 {
        let remainder = a % b
        a = b
        b = remainder
    }
    return a
}"""

LCM_WITH_HCF_SWIFT = (
    HCF_EUCLID_SWIFT
    + """

func lcm(_ a: Int, _ b: Int) -> Int {
    return (a / hcf(a, b)) * b
}"""
)

LCM_NO_HCF_SWIFT = """\
func lcm(_ a: Int, _ b: Int) -> Int {
    let step = max(a, b)
    var candidate = step
    while candidate % a != 0 || candidate % b != 0 {
        candidate += step
    }
    return candidate
}"""

SWIFTUI_NAV_APP_SWIFT = """\
import SwiftUI

struct ContentView: View {
    var body: some View {
        NavigationView {
            VStack {
                NavigationLink(destination: DetailsView()) {
                    Text("Go to Details")
                }
            }
            .navigationTitle("Home")
        }
    }
}"""

SWIFTUI_HOME_DETAILS_SWIFT = """\
import SwiftUI

struct HomeView: View {
    var body: some View {
        NavigationView {
            NavigationLink(destination: DetailsView()) {
                Text("Go to Details")
            }
            .navigationTitle("Home")
        }
    }
}

struct DetailsView: View {
    var body: some View {
        Text("Details")
            .navigationTitle("Details")
    }
}"""

GCD_COMPLETION_SWIFT = """\
_ a: Int, _ b: Int) -> Int {
    var a = a
    var b = b
    while b != 0 {
        let remainder = a % b
        a = b
        b = remainder
    }
    return a
}"""

# Chat rules are matched against the last user message by substring, most
# specific (longest) key first, so "… by Euclidean Algorithm" wins over
# its "HCF of Two Numbers" prefix.
DEFAULT_CHAT_RULES: Dict[str, str] = {
    "HCF of Two Numbers by Euclidean Algorithm": _swift_fenced(HCF_EUCLID_SWIFT),
    "LCM of Two Numbers without Using the HCF": _swift_fenced(LCM_NO_HCF_SWIFT),
    "HCF of Two Numbers": _swift_fenced(HCF_BRUTEFORCE_SWIFT),
    "LCM of Two Numbers": _swift_fenced(LCM_WITH_HCF_SWIFT),
    "Create a navigating views app with SwiftUI": _swift_fenced(SWIFTUI_NAV_APP_SWIFT),
    "Create the HomeView and DetailsView with SwiftUI": _swift_fenced(
        SWIFTUI_HOME_DETAILS_SWIFT
    ),
    "ping": "pong",
}

DEFAULT_FALLBACK_REPLY = (
    "I can help with that. Tell me more about the change you have in mind."
)

# Completion rules match when the prefix ends with the key.
DEFAULT_COMPLETION_RULES: Dict[str, Tuple[str, ...]] = {
    "func gcd(": (GCD_COMPLETION_SWIFT,),
    "let x = ": ("42",),
}


@dataclass
class CallRecord:
    op: str  # "completions" | "chat"
    request: object


class MockProvider:
    """Deterministic provider used by tests, eval scenarios, and replays.

    Answers come from lookup tables keyed on request text; every call is
    appended to call_log.  Optional delay and failure injection exercise
    cancellation and fallback paths.
    """

    def __init__(
        self,
        config: Optional[ProviderConfig] = None,
        completion_rules: Optional[Dict[str, Sequence[str]]] = None,
        chat_rules: Optional[Dict[str, str]] = None,
        fallback_reply: str = DEFAULT_FALLBACK_REPLY,
        delay: float = 0.0,
        fail: Optional[Exception] = None,
    ):
        self.config = config or ProviderConfig(id="mock", kind="mock")
        self.completion_rules = dict(
            DEFAULT_COMPLETION_RULES if completion_rules is None else completion_rules
        )
        self.chat_rules = dict(DEFAULT_CHAT_RULES if chat_rules is None else chat_rules)
        self.fallback_reply = fallback_reply
        self.delay = delay
        self.fail = fail
        self.call_log: List[CallRecord] = []

    def calls(self, op: str) -> List[CallRecord]:
        return [record for record in self.call_log if record.op == op]

    async def fetch_completions(self, req: CompletionRequest) -> List[CompletionResult]:
        self.call_log.append(CallRecord(op="completions", request=req))
        if self.delay:
            await asyncio.sleep(self.delay)
        if self.fail is not None:
            raise self.fail
        for key, texts in self.completion_rules.items():
            if req.prefix.endswith(key):
                results = [CompletionResult(text=t) for t in texts]
                return results[: req.max_results]
        return []

    async def chat(self, req: ChatRequest, on_chunk: ChunkSink = None) -> ChatMessage:
        self.call_log.append(CallRecord(op="chat", request=req))
        if self.delay:
            await asyncio.sleep(self.delay)
        if self.fail is not None:
            raise self.fail
        last_user = next(m for m in reversed(req.messages) if m.role == "user")
        reply = self.fallback_reply
        for key in sorted(self.chat_rules, key=len, reverse=True):
            if key in last_user.content:
                reply = self.chat_rules[key]
                break
        for chunk in reply.splitlines(keepends=True):
            if on_chunk is not None and chunk:
                on_chunk(chunk)
        return ChatMessage(role="assistant", content=reply)


def build_provider(config: ProviderConfig):
    if config.kind == "completion":
        return HttpCompletionProvider(config)
    if config.kind == "chat":
        return OpenAiChatProvider(config)
    return MockProvider(config=config)
