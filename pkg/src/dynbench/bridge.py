"""Wire-protocol client for out-of-process predictors.

Line-delimited JSON over a stdio subprocess or a TCP connection, one message
per line, UTF-8:

- harness -> peer  ``{"type": "hello", "version": 1, "delta_t": 0.4, "h": 8, "f": 12, "k": 5}``
- peer -> harness  ``{"type": "capabilities", "model": "<name>", "min_history": 2,
  "max_k": 20, "supports_probabilities": false}``
- harness -> peer  ``{"type": "predict", "id": 17, "tick": 42,
  "agents": [{"id": "a1", "history": [[x, y], ...]}]}``
- peer -> harness  ``{"type": "prediction", "id": 17,
  "agents": [{"id": "a1", "candidates": [[[x, y], ...], ...], "probs": [...]?}]}``
- peer -> harness  ``{"type": "error", "id": 17, "message": "..."}``

Exactly one request is outstanding at a time and request ids strictly
increase. Replies with a non-matching id are stale and are discarded.
Timing is always measured on the harness side; peer-reported numbers are
never trusted.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import IO, Callable

from .errors import BridgeError, BridgePeerError, ConfigError, PredictTimeout
from .predictors import CandidateTrajectory, Modality, PredictionRecord, PredictionRequest

PROTOCOL_VERSION = 1
HANDSHAKE_TIMEOUT = 10.0
# Virtual mode waits for completion; this cap only guards against dead peers.
VIRTUAL_WAIT_CAP = 60.0

_EOF = object()


class _LineReader:
    """Background thread draining a text stream into a queue.

    Keeps the peer's pipe from blocking and lets reads carry timeouts.
    """

    def __init__(self, stream: IO[str]) -> None:
        self._queue: queue.Queue[object] = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream: IO[str]) -> None:
        try:
            for line in stream:
                self._queue.put(line.rstrip("\n"))
        except (ValueError, OSError):
            pass  # stream closed under us
        self._queue.put(_EOF)

    def get(self, timeout: float) -> str | None:
        """Next line, or None on timeout. Raises BridgeError at end of stream."""
        try:
            item = self._queue.get(timeout=max(timeout, 0.0))
        except queue.Empty:
            return None
        if item is _EOF:
            self._queue.put(_EOF)  # stay at EOF for later callers
            raise BridgeError("peer closed the connection")
        return item  # type: ignore[return-value]


class SubprocessTransport:
    """Peer launched as a child process, speaking over its stdin/stdout."""

    def __init__(self, argv: list[str]) -> None:
        try:
            self.process = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"failed to launch peer {argv!r}: {exc}") from exc
        self._reader = _LineReader(self.process.stdout)

    def send_line(self, line: str) -> None:
        try:
            self.process.stdin.write(line + "\n")
            self.process.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise BridgeError(f"peer pipe closed: {exc}") from exc

    def recv_line(self, timeout: float) -> str | None:
        return self._reader.get(timeout)

    def close(self) -> None:
        try:
            if self.process.stdin and not self.process.stdin.closed:
                self.process.stdin.close()
        except OSError:
            pass
        try:
            self.process.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self.process.kill()
            self.process.wait()


class TcpTransport:
    """Peer reachable at host:port (long-lived model servers)."""

    def __init__(self, host: str, port: int) -> None:
        try:
            self._sock = socket.create_connection((host, port), timeout=10.0)
        except OSError as exc:
            raise BridgeError(f"failed to connect to {host}:{port}: {exc}") from exc
        self._wfile = self._sock.makefile("w", encoding="utf-8", newline="\n")
        rfile = self._sock.makefile("r", encoding="utf-8")
        self._reader = _LineReader(rfile)

    def send_line(self, line: str) -> None:
        try:
            self._wfile.write(line + "\n")
            self._wfile.flush()
        except OSError as exc:
            raise BridgeError(f"peer socket closed: {exc}") from exc

    def recv_line(self, timeout: float) -> str | None:
        return self._reader.get(timeout)

    def close(self) -> None:
        # shutdown() actually sends FIN; close() alone would not while the
        # makefile objects still hold the socket open.
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._wfile.close()
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass


@dataclass(frozen=True)
class BridgeEndpoint:
    """Endpoint address: a peer command line (stdio) or ``tcp:host:port``."""

    transport: str  # "stdio_subprocess" | "tcp"
    address: str

    def open(self):
        if self.transport == "stdio_subprocess":
            return SubprocessTransport(shlex.split(self.address))
        host, _, port = self.address.rpartition(":")
        return TcpTransport(host, int(port))


def parse_endpoint(address: str) -> BridgeEndpoint:
    if address.startswith("tcp:"):
        rest = address[len("tcp:"):]
        host, sep, port = rest.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ConfigError(f"tcp endpoint must be tcp:host:port, got {address!r}")
        return BridgeEndpoint("tcp", rest)
    if not address.strip():
        raise ConfigError("empty bridge endpoint address")
    return BridgeEndpoint("stdio_subprocess", address)


@dataclass(frozen=True)
class BridgeCapabilities:
    model: str
    min_history: int
    max_k: int
    supports_probabilities: bool


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise BridgeError(message)


class BridgeClient:
    """One endpoint, one outstanding request, strict schema validation."""

    def __init__(self, transport) -> None:
        self._transport = transport
        self._next_id = 1
        self.capabilities: BridgeCapabilities | None = None
        self._horizon_f: int | None = None

    def handshake(
        self, delta_t: float, h: int, f: int, k: int, timeout: float = HANDSHAKE_TIMEOUT
    ) -> BridgeCapabilities:
        hello = {
            "type": "hello",
            "version": PROTOCOL_VERSION,
            "delta_t": delta_t,
            "h": h,
            "f": f,
            "k": k,
        }
        self._transport.send_line(json.dumps(hello))
        line = self._transport.recv_line(timeout)
        if line is None:
            raise BridgeError("handshake timed out waiting for capabilities")
        msg = self._parse_json(line)
        _require(msg.get("type") == "capabilities", f"expected capabilities, got {msg.get('type')!r}")
        try:
            caps = BridgeCapabilities(
                model=str(msg["model"]),
                min_history=int(msg["min_history"]),
                max_k=int(msg["max_k"]),
                supports_probabilities=bool(msg["supports_probabilities"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BridgeError(f"malformed capabilities message: {exc}") from exc
        _require(caps.min_history >= 1, f"peer declared min_history {caps.min_history} < 1")
        _require(caps.max_k >= 1, f"peer declared max_k {caps.max_k} < 1")
        if caps.max_k < k:
            raise ConfigError(
                f"experiment requests k={k} but peer {caps.model!r} supports max_k={caps.max_k}"
            )
        self.capabilities = caps
        self._horizon_f = f
        return caps

    def round_trip(
        self,
        tick: int,
        agents: list[tuple[str, list[list[float]]]],
        wait: float,
    ) -> list[PredictionRecord]:
        """Send one predict request; raises PredictTimeout when no reply lands in time."""
        if self.capabilities is None:
            raise BridgeError("round_trip before handshake")
        request_id = self._next_id
        self._next_id += 1
        payload = {
            "type": "predict",
            "id": request_id,
            "tick": tick,
            "agents": [{"id": aid, "history": history} for aid, history in agents],
        }
        self._transport.send_line(json.dumps(payload))
        deadline_at = time.perf_counter() + wait
        while True:
            remaining = deadline_at - time.perf_counter()
            if remaining <= 0:
                raise PredictTimeout(f"request {request_id} exceeded {wait:.3f}s")
            line = self._transport.recv_line(remaining)
            if line is None:
                raise PredictTimeout(f"request {request_id} exceeded {wait:.3f}s")
            msg = self._parse_json(line)
            if msg.get("id") != request_id:
                continue  # stale or late reply from an abandoned request
            mtype = msg.get("type")
            if mtype == "error":
                raise BridgePeerError(str(msg.get("message", "peer error")))
            _require(mtype == "prediction", f"expected prediction, got {mtype!r}")
            return self._parse_prediction(msg, tick, {aid for aid, _ in agents})

    @staticmethod
    def _parse_json(line: str) -> dict:
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"peer sent invalid JSON: {exc}") from exc
        _require(isinstance(msg, dict), "peer message is not an object")
        return msg

    def _parse_prediction(
        self, msg: dict, tick: int, requested: set[str]
    ) -> list[PredictionRecord]:
        caps = self.capabilities
        agents = msg.get("agents")
        _require(isinstance(agents, list), "prediction message lacks an agents list")
        records = []
        seen: set[str] = set()
        for entry in agents:
            _require(isinstance(entry, dict), "agent entry is not an object")
            agent_id = entry.get("id")
            _require(isinstance(agent_id, str), "agent entry lacks a string id")
            _require(agent_id in requested, f"peer answered for unrequested agent {agent_id!r}")
            _require(agent_id not in seen, f"peer answered twice for agent {agent_id!r}")
            seen.add(agent_id)
            raw_candidates = entry.get("candidates")
            _require(
                isinstance(raw_candidates, list) and len(raw_candidates) >= 1,
                f"agent {agent_id!r}: candidates must be a non-empty list",
            )
            _require(
                len(raw_candidates) <= caps.max_k,
                f"agent {agent_id!r}: {len(raw_candidates)} candidates exceed declared max_k={caps.max_k}",
            )
            probs = entry.get("probs")
            if caps.supports_probabilities:
                _require(
                    isinstance(probs, list) and len(probs) == len(raw_candidates),
                    f"agent {agent_id!r}: probabilistic peer must weight every candidate",
                )
            else:
                _require(probs is None, f"agent {agent_id!r}: unexpected probs from non-probabilistic peer")
            candidates = []
            for ci, cand in enumerate(raw_candidates):
                pts = self._validate_candidate(agent_id, ci, cand)
                probability = None
                if probs is not None:
                    probability = float(probs[ci])
                    _require(
                        0.0 <= probability <= 1.0 and math.isfinite(probability),
                        f"agent {agent_id!r}: probability {probability} out of range",
                    )
                candidates.append(CandidateTrajectory(pts, probability=probability))
            if caps.supports_probabilities:
                modality = Modality.PROBABILISTIC
            elif caps.max_k == 1:
                modality = Modality.DETERMINISTIC
            else:
                modality = Modality.STOCHASTIC
            records.append(
                PredictionRecord(
                    agent_id=agent_id,
                    issue_tick=tick,
                    candidates=tuple(candidates),
                    inference_elapsed=0.0,
                    modality=modality,
                )
            )
        return records

    def _validate_candidate(self, agent_id: str, index: int, cand: object) -> list[list[float]]:
        f = self._horizon_f
        _require(isinstance(cand, list), f"agent {agent_id!r} candidate {index} is not a list")
        _require(
            len(cand) == f,
            f"agent {agent_id!r} candidate {index} has {len(cand)} points, expected {f}",
        )
        pts = []
        for p in cand:
            _require(
                isinstance(p, list) and len(p) == 2,
                f"agent {agent_id!r} candidate {index}: points must be [x, y] pairs",
            )
            x, y = float(p[0]), float(p[1])
            _require(
                math.isfinite(x) and math.isfinite(y),
                f"agent {agent_id!r} candidate {index}: non-finite coordinate",
            )
            pts.append([x, y])
        return pts

    def close(self) -> None:
        self._transport.close()


class BridgedPredictor:
    """Adapts a handshaken BridgeClient to the in-process predictor contract."""

    def __init__(self, client: BridgeClient, realtime: bool, virtual_wait: float = VIRTUAL_WAIT_CAP) -> None:
        if client.capabilities is None:
            raise BridgeError("bridged predictor requires a completed handshake")
        self._client = client
        self._realtime = realtime
        self._virtual_wait = virtual_wait
        caps = client.capabilities
        self.name = f"bridge:{caps.model}"
        self.min_history = caps.min_history
        if caps.supports_probabilities:
            self.modality = Modality.PROBABILISTIC
        elif caps.max_k == 1:
            self.modality = Modality.DETERMINISTIC
        else:
            self.modality = Modality.STOCHASTIC

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        agents = [
            (item.agent_id, [[p.pos[0], p.pos[1]] for p in item.history])
            for item in request.items
            if item.eligible
        ]
        wait = request.deadline if self._realtime else max(self._virtual_wait, request.deadline)
        return self._client.round_trip(request.tick, agents, wait)

    def close(self) -> None:
        self._client.close()


# ---------------------------------------------------------------------------
# Conformance suite


@dataclass(frozen=True)
class ConformanceCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ConformanceReport:
    checks: tuple[ConformanceCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name}: {c.detail}")
        verdict = "all checks passed" if self.passed else "conformance FAILED"
        lines.append(verdict)
        return "\n".join(lines)


def _straight_history(n: int, speed: float = 1.0) -> list[list[float]]:
    return [[speed * i, 0.25 * i] for i in range(n)]


def run_conformance(
    endpoint: BridgeEndpoint,
    *,
    delta_t: float = 0.4,
    h: int = 8,
    f: int = 12,
    wait: float = 5.0,
) -> ConformanceReport:
    """Exercise an external predictor against the wire contract.

    Covers: handshake schema, id echo, candidate schema, determinism under
    repeated identical requests, min_history honesty, probability rules
    (via schema validation), and clean shutdown on transport close.
    """
    checks: list[ConformanceCheck] = []

    def check(name: str, fn: Callable[[], str]) -> None:
        try:
            checks.append(ConformanceCheck(name, True, fn()))
        except Exception as exc:
            checks.append(ConformanceCheck(name, False, f"{type(exc).__name__}: {exc}"))

    transport = endpoint.open()
    client = BridgeClient(transport)
    caps_box: dict[str, BridgeCapabilities] = {}

    def do_handshake() -> str:
        caps = client.handshake(delta_t, h, f, k=1, timeout=wait)
        caps_box["caps"] = caps
        return (
            f"model={caps.model!r} min_history={caps.min_history} "
            f"max_k={caps.max_k} probabilities={caps.supports_probabilities}"
        )

    check("handshake", do_handshake)
    caps = caps_box.get("caps")

    if caps is not None:
        hist = _straight_history(max(h, caps.min_history))

        def id_echo_and_schema() -> str:
            records = client.round_trip(7, [("c1", hist)], wait)
            if not any(r.agent_id == "c1" for r in records):
                raise BridgeError("peer did not answer for the requested agent")
            return f"{len(records)} record(s), schema valid"

        def determinism() -> str:
            import numpy as np

            first = client.round_trip(11, [("c1", hist)], wait)
            second = client.round_trip(11, [("c1", hist)], wait)
            if len(first) != len(second):
                raise BridgeError("record counts differ between identical requests")
            for a, b in zip(first, second):
                for ca, cb in zip(a.candidates, b.candidates):
                    if not np.array_equal(ca.points, cb.points):
                        raise BridgeError("candidates differ between identical requests")
            return "identical requests produce identical candidates"

        def min_history_honesty() -> str:
            if caps.min_history < 2:
                return "skipped (min_history < 2)"
            short = _straight_history(caps.min_history - 1)
            records = client.round_trip(13, [("c2", short)], wait)
            if records:
                raise BridgeError("peer answered despite history shorter than its declared min_history")
            return "short-history agent omitted"

        def float_fidelity() -> str:
            precise = [[1234.123456789012345 + 0.1 * i, -987.987654321098765 + 0.05 * i] for i in range(h)]
            records = client.round_trip(17, [("c3", precise)], wait)
            if not records:
                raise BridgeError("peer returned no records for a precise-float request")
            return "high-precision floats survive the round trip"

        check("id_echo_and_schema", id_echo_and_schema)
        check("determinism", determinism)
        check("min_history_honesty", min_history_honesty)
        check("float_fidelity", float_fidelity)

    def clean_shutdown() -> str:
        client.close()
        if isinstance(transport, SubprocessTransport):
            code = transport.process.returncode
            if code != 0:
                raise BridgeError(f"peer exited with status {code}")
            return "peer exited cleanly on transport close"
        return "transport closed"

    check("clean_shutdown", clean_shutdown)
    return ConformanceReport(tuple(checks))
