"""Request loop: one request in flight, replies echo the request id.

A malformed incoming message produces an error reply and the loop
continues; end-of-stream ends the process cleanly. The deadline is
enforced harness-side; the adapter only learns delta_t from the hello for
its own models.
"""

from __future__ import annotations

import socket
import sys
from dataclasses import dataclass
from typing import IO

from .models import MODELS
from .protocol import (
    ProtocolError,
    capabilities_message,
    error_message,
    parse_hello,
    parse_message,
    prediction_message,
)


@dataclass(frozen=True)
class AdapterConfig:
    model: str = "cvm"
    seed: int = 0
    transport: str = "stdio"  # stdio | tcp
    host: str = "127.0.0.1"
    port: int = 0
    min_history: int | None = None  # override the model's declaration


def serve_stream(config: AdapterConfig, lines: IO[str], out: IO[str]) -> int:
    """Serve one connection until end-of-stream. Returns the exit status."""
    if config.model not in MODELS:
        print(f"unknown model {config.model!r}", file=sys.stderr)
        return 2
    model = MODELS[config.model](seed=config.seed)
    min_history = model.min_history
    if config.min_history is not None:
        # Never declare less than the model can actually handle.
        min_history = max(config.min_history, model.min_history)

    def reply(text: str) -> None:
        out.write(text + "\n")
        out.flush()

    hello = None
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        try:
            msg = parse_message(line)
        except ProtocolError as exc:
            reply(error_message(None, str(exc)))
            continue
        mtype = msg["type"]
        if mtype == "hello":
            try:
                hello = parse_hello(msg)
            except ProtocolError as exc:
                reply(error_message(None, str(exc)))
                continue
            model.configure(hello.delta_t, hello.h, hello.f, hello.k)
            reply(
                capabilities_message(
                    model.name, min_history, model.max_k, model.supports_probabilities
                )
            )
        elif mtype == "predict":
            request_id = msg.get("id")
            if hello is None:
                reply(error_message(request_id, "predict before hello"))
                continue
            try:
                agents = []
                k = min(hello.k, model.max_k)
                for agent in msg["agents"]:
                    history = agent["history"]
                    if len(history) < min_history:
                        continue  # declared incapacity: omit, never fabricate
                    candidates = model.predict(int(msg["tick"]), str(agent["id"]), history, k)
                    agents.append({"id": agent["id"], "candidates": candidates})
                reply(prediction_message(request_id, agents))
            except Exception as exc:
                reply(error_message(request_id, f"{type(exc).__name__}: {exc}"))
        else:
            reply(error_message(msg.get("id"), f"unexpected message type {mtype!r}"))
    return 0


def serve(config: AdapterConfig) -> int:
    if config.transport == "stdio":
        return serve_stream(config, sys.stdin, sys.stdout)
    if config.transport != "tcp":
        print(f"unknown transport {config.transport!r}", file=sys.stderr)
        return 2
    with socket.create_server((config.host, config.port)) as server:
        print(f"listening on {server.getsockname()[0]}:{server.getsockname()[1]}", file=sys.stderr)
        conn, _ = server.accept()
        with conn:
            rfile = conn.makefile("r", encoding="utf-8")
            wfile = conn.makefile("w", encoding="utf-8", newline="\n")
            return serve_stream(config, rfile, wfile)
