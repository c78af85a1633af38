"""Error types shared across the daemon.

Every error that can cross the wire carries a stable numeric code and a
machine-readable name so clients can branch on failures without parsing
prose.  Codes below -32600 follow the JSON-RPC conventions; the -320xx
block is application-defined.
"""
from __future__ import annotations

from typing import Any, Dict, Optional

# Protocol-level codes (JSON-RPC conventions).
PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603
REQUEST_CANCELLED = -32800


class BridgeError(Exception):
    """Base for recoverable daemon errors.

    Subclasses pin ``code``; the wire layer serializes them as structured
    error objects instead of tearing down the connection.
    """

    code = -32050

    def __init__(self, message: str, data: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.data = dict(data or {})

    @property
    def name(self) -> str:
        return type(self).__name__

    def to_wire(self) -> Dict[str, Any]:
        data = {"error": self.name}
        data.update(self.data)
        return {"code": self.code, "message": self.message, "data": data}


class InvalidParams(BridgeError):
    code = INVALID_PARAMS


class MethodNotFound(BridgeError):
    code = METHOD_NOT_FOUND


# Workspace.
class AlreadyOpen(BridgeError):
    code = -32000


class NotOpen(BridgeError):
    code = -32001


class VersionMismatch(BridgeError):
    code = -32002


class RangeOutOfBounds(BridgeError):
    code = -32003


class InvalidPosition(BridgeError):
    code = -32004


# Suggestions.
class SessionNotFound(BridgeError):
    code = -32010


class SessionNotPresenting(BridgeError):
    code = -32011


class EmptySession(BridgeError):
    code = -32012


class StaleSession(BridgeError):
    code = -32013


class AllProvidersFailed(BridgeError):
    code = -32014


class UnsupportedCommentSyntax(BridgeError):
    code = -32015


# Providers.
class ProviderTimeout(BridgeError):
    code = -32020


class AuthFailed(BridgeError):
    code = -32021


class ProviderProtocolError(BridgeError):
    code = -32022


# Templates.
class MissingInstruction(BridgeError):
    code = -32030


class UnknownPlaceholder(BridgeError):
    code = -32031


class MissingTemplate(BridgeError):
    code = -32032


# Chat.
class ConversationNotFound(BridgeError):
    code = -32040


class ConversationTooLong(BridgeError):
    code = -32041


class NoCodeBlockInReply(BridgeError):
    code = -32042


class OverlappingEdits(BridgeError):
    code = -32043


# CLI / config.
class ConfigInvalid(BridgeError):
    code = -32060


class ScenarioUnknown(BridgeError):
    code = -32061


class GoldenMismatch(BridgeError):
    code = -32062


class BindFailed(BridgeError):
    code = -32063
