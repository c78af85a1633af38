"""Daemon configuration: TOML file loading and validation.

Every field has a working default, so the daemon runs with no config file
at all (one mock provider, shipped templates).  Validation is strict and
names the offending field; an invalid file aborts startup.

Credentials never live in the config file.  Provider entries carry
``credential_ref``, the NAME of an environment variable; the daemon reads
the secret from the environment at call time.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .commentsyntax import CommentSyntax
from .context import ContextCaps, Template
from .errors import ConfigInvalid, UnknownPlaceholder
from .providers import KINDS, ProviderConfig

STATE_DIR_ENV = "ASSIST_BRIDGE_STATE_DIR"

DEFAULT_CHAT_TEMPLATE = """\
File: {{file_path}} ({{language}})
Cursor: {{cursor}}
Diagnostics:
{{diagnostics}}
Selected code:
{{selection}}

{{instruction}}"""

DEFAULT_PROMPT_TO_CODE_TEMPLATE = """\
Rewrite the selected code as the instruction asks.
File: {{file_path}} ({{language}})
Selected code:
{{selection}}

Instruction: {{instruction}}

Reply with a single fenced code block containing only the new code."""

DEFAULT_TEMPLATES: Dict[str, str] = {
    "chat": DEFAULT_CHAT_TEMPLATE,
    "prompt_to_code": DEFAULT_PROMPT_TO_CODE_TEMPLATE,
    "doc_comment": "Write a documentation comment for this code:\n{{selection}}",
    "split_function": (
        "Divide this function into smaller, well-named functions:\n{{selection}}"
    ),
    "translate_strings": (
        "Translate the user-facing strings in this code to {{instruction}}:\n"
        "{{selection}}"
    ),
}

# Keys that would put a secret value straight into the config file.
_FORBIDDEN_PROVIDER_KEYS = ("credential", "api_key", "apikey", "token", "secret")


@dataclass
class Config:
    providers: List["ProviderConfig"] = field(default_factory=list)
    debounce_ms: int = 300
    prefetch_capacity: int = 32
    caps: ContextCaps = field(default_factory=ContextCaps)
    templates: Dict[str, Template] = field(default_factory=dict)
    comment_overrides: Dict[str, Optional[CommentSyntax]] = field(default_factory=dict)
    state_dir: Optional[Path] = None
    history_cap: int = 64
    temperature: float = 0.7


def _fail(field_path: str, problem: str) -> ConfigInvalid:
    return ConfigInvalid(f"config field {field_path}: {problem}", {"field": field_path})


def _expect_int(raw: object, field_path: str, minimum: int = 0) -> int:
    if not isinstance(raw, int) or isinstance(raw, bool):
        raise _fail(field_path, f"expected an integer, got {type(raw).__name__}")
    if raw < minimum:
        raise _fail(field_path, f"must be >= {minimum}")
    return raw


def _expect_str(raw: object, field_path: str) -> str:
    if not isinstance(raw, str):
        raise _fail(field_path, f"expected a string, got {type(raw).__name__}")
    return raw


def _parse_provider(raw: object, index: int) -> ProviderConfig:
    where = f"providers[{index}]"
    if not isinstance(raw, dict):
        raise _fail(where, "expected a table")
    for key in raw:
        if key.lower() in _FORBIDDEN_PROVIDER_KEYS:
            raise _fail(
                f"{where}.{key}",
                "credentials belong in the environment; set credential_ref "
                "to the variable name instead",
            )
    kind = _expect_str(raw.get("kind", ""), f"{where}.kind")
    if kind not in KINDS:
        raise _fail(f"{where}.kind", f"must be one of {', '.join(KINDS)}")
    provider_id = _expect_str(raw.get("id", ""), f"{where}.id")
    if not provider_id:
        raise _fail(f"{where}.id", "must be non-empty")
    timeout_ms = _expect_int(raw.get("timeout_ms", 10_000), f"{where}.timeout_ms", 1)
    return ProviderConfig(
        id=provider_id,
        kind=kind,
        endpoint=_expect_str(raw.get("endpoint", ""), f"{where}.endpoint"),
        credential_ref=_expect_str(raw.get("credential_ref", ""), f"{where}.credential_ref"),
        model_name=_expect_str(raw.get("model_name", ""), f"{where}.model_name"),
        timeout_ms=timeout_ms,
        priority=_expect_int(raw.get("priority", 0), f"{where}.priority", -(10**9)),
    )


def _parse_comment_override(lang: str, raw: object) -> Optional[CommentSyntax]:
    where = f"comment_syntax.{lang}"
    if not isinstance(raw, dict):
        raise _fail(where, "expected a table")
    if raw.get("unsupported"):
        return None
    line_prefix = raw.get("line_prefix")
    block_open = raw.get("block_open")
    block_close = raw.get("block_close")
    if line_prefix is None and (block_open is None or block_close is None):
        raise _fail(
            where,
            "needs line_prefix, block_open/block_close, or unsupported = true",
        )
    block = None
    if block_open is not None and block_close is not None:
        block = (
            _expect_str(block_open, f"{where}.block_open"),
            _expect_str(block_close, f"{where}.block_close"),
        )
    return CommentSyntax(
        language_id=lang.lower(),
        line_prefix=_expect_str(line_prefix, f"{where}.line_prefix")
        if line_prefix is not None
        else None,
        block=block,
    )


def default_templates() -> Dict[str, Template]:
    return {name: Template(name=name, body=body) for name, body in DEFAULT_TEMPLATES.items()}


def load_config(path: Optional[Path] = None) -> Config:
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as handle:
                raw = tomllib.load(handle)
        except FileNotFoundError:
            raise _fail(str(path), "config file not found")
        except tomllib.TOMLDecodeError as exc:
            # The decoder's message carries the line and column.
            raise ConfigInvalid(f"config parse error in {path}: {exc}", {"path": str(path)})

    config = Config()

    providers_raw = raw.get("providers", [])
    if not isinstance(providers_raw, list):
        raise _fail("providers", "expected an array of tables")
    config.providers = [_parse_provider(entry, i) for i, entry in enumerate(providers_raw)]
    seen = set()
    for provider in config.providers:
        if provider.id in seen:
            raise _fail("providers", f"duplicate provider id {provider.id!r}")
        seen.add(provider.id)
    if not config.providers:
        config.providers = [ProviderConfig(id="mock", kind="mock")]

    config.debounce_ms = _expect_int(raw.get("debounce_ms", 300), "debounce_ms", 1)
    config.prefetch_capacity = _expect_int(
        raw.get("prefetch_capacity", 32), "prefetch_capacity", 1
    )
    config.history_cap = _expect_int(raw.get("history_cap", 64), "history_cap", 2)

    temperature = raw.get("temperature", 0.7)
    if not isinstance(temperature, (int, float)) or isinstance(temperature, bool):
        raise _fail("temperature", "expected a number")
    if not 0 <= float(temperature) <= 2:
        raise _fail("temperature", "must be in [0, 2]")
    config.temperature = float(temperature)

    caps_raw = raw.get("caps", {})
    if not isinstance(caps_raw, dict):
        raise _fail("caps", "expected a table")
    config.caps = ContextCaps(
        prefix_bytes=_expect_int(caps_raw.get("prefix_bytes", 8000), "caps.prefix_bytes", 1),
        suffix_bytes=_expect_int(caps_raw.get("suffix_bytes", 2000), "caps.suffix_bytes", 1),
        selection_bytes=_expect_int(
            caps_raw.get("selection_bytes", 4000), "caps.selection_bytes", 1
        ),
    )

    config.templates = default_templates()
    templates_raw = raw.get("templates", {})
    if not isinstance(templates_raw, dict):
        raise _fail("templates", "expected a table of name = body strings")
    for name, body in templates_raw.items():
        try:
            config.templates[name] = Template(
                name=name, body=_expect_str(body, f"templates.{name}")
            )
        except UnknownPlaceholder as exc:
            raise _fail(f"templates.{name}", str(exc))

    overrides_raw = raw.get("comment_syntax", {})
    if not isinstance(overrides_raw, dict):
        raise _fail("comment_syntax", "expected a table of language tables")
    for lang, entry in overrides_raw.items():
        config.comment_overrides[lang.lower()] = _parse_comment_override(lang, entry)

    state_dir = os.environ.get(STATE_DIR_ENV) or raw.get("state_dir")
    if state_dir is not None:
        state_dir = _expect_str(state_dir, "state_dir")
        config.state_dir = Path(state_dir).expanduser()

    return config
