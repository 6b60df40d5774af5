"""Wire protocol: line-delimited JSON messages, one per line, UTF-8.

Incoming: ``hello`` (once, first), then ``predict`` requests.
Outgoing: ``capabilities`` after hello, ``prediction`` or ``error`` per
request. Every reply echoes the request id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class Hello:
    delta_t: float
    h: int
    f: int
    k: int


def parse_message(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from None
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("message must be an object with a 'type' field")
    return msg


def parse_hello(msg: dict) -> Hello:
    if msg.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {msg.get('version')!r}")
    try:
        return Hello(
            delta_t=float(msg["delta_t"]),
            h=int(msg["h"]),
            f=int(msg["f"]),
            k=int(msg["k"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed hello: {exc}") from None


def capabilities_message(model: str, min_history: int, max_k: int, supports_probabilities: bool) -> str:
    return json.dumps(
        {
            "type": "capabilities",
            "model": model,
            "min_history": min_history,
            "max_k": max_k,
            "supports_probabilities": supports_probabilities,
        }
    )


def prediction_message(request_id: int, agents: list[dict]) -> str:
    return json.dumps({"type": "prediction", "id": request_id, "agents": agents})


def error_message(request_id: int | None, message: str) -> str:
    return json.dumps({"type": "error", "id": request_id, "message": message})
