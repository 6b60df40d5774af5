"""Test-support predictors and transports.

These exist for exercising the harness itself: an oracle that replays the
ground truth (zero error by construction), wrappers that inject latency,
and an in-process loopback transport for driving the bridge client without
a real subprocess.
"""

from __future__ import annotations

import queue
import random
import threading
import time
from typing import Callable

from .errors import BridgeError
from .predictors import (
    CandidateTrajectory,
    Modality,
    PredictionRecord,
    PredictionRequest,
    Predictor,
)
from .scenes import Scene


class OraclePredictor:
    """Returns the ground-truth future; ignores history entirely."""

    name = "oracle"
    modality = Modality.DETERMINISTIC
    min_history = 1

    def __init__(self, scene: Scene) -> None:
        self._scene = scene

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        records = []
        for item in request.items:
            if not item.eligible:
                continue
            try:
                track = self._scene.agent(item.agent_id)
            except KeyError:
                continue
            future = track.future_block(request.tick, request.horizon_f)
            if future is None:
                continue
            records.append(
                PredictionRecord(
                    agent_id=item.agent_id,
                    issue_tick=request.tick,
                    candidates=(CandidateTrajectory(future),),
                    inference_elapsed=0.0,
                    modality=self.modality,
                )
            )
        return records


class SleepyPredictor:
    """Delegates to an inner predictor after a fixed sleep (deadline tests)."""

    def __init__(self, inner: Predictor, delay: float) -> None:
        self._inner = inner
        self._delay = delay
        self.name = f"sleepy({inner.name})"
        self.modality = inner.modality
        self.min_history = inner.min_history

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        time.sleep(self._delay)
        return self._inner.predict(request)


class JitteryPredictor:
    """Delegates after an unseeded random sleep; models scheduling variance."""

    def __init__(self, inner: Predictor, min_delay: float, max_delay: float) -> None:
        self._inner = inner
        self._min = min_delay
        self._max = max_delay
        self.name = f"jittery({inner.name})"
        self.modality = inner.modality
        self.min_history = inner.min_history

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        time.sleep(random.uniform(self._min, self._max))
        return self._inner.predict(request)


class CrashingPredictor:
    """Raises on the configured tick; everything before behaves like the inner."""

    def __init__(self, inner: Predictor, crash_tick: int) -> None:
        self._inner = inner
        self._crash_tick = crash_tick
        self.name = f"crashing({inner.name})"
        self.modality = inner.modality
        self.min_history = inner.min_history

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        if request.tick >= self._crash_tick:
            raise RuntimeError(f"synthetic crash at tick {request.tick}")
        return self._inner.predict(request)


class LoopbackTransport:
    """In-process peer: a handler maps each sent line to delayed reply lines.

    The handler returns a list of (delay_seconds, line) pairs; replies are
    queued after their delay, which makes late-reply scenarios testable
    without a subprocess.
    """

    def __init__(self, handler: Callable[[str], list[tuple[float, str]]]) -> None:
        self._handler = handler
        self._queue: queue.Queue[object] = queue.Queue()
        self._closed = False
        self.sent: list[str] = []

    def send_line(self, line: str) -> None:
        if self._closed:
            raise BridgeError("transport closed")
        self.sent.append(line)
        for delay, reply in self._handler(line):
            if delay <= 0:
                self._queue.put(reply)
            else:
                timer = threading.Timer(delay, self._queue.put, args=(reply,))
                timer.daemon = True
                timer.start()

    def recv_line(self, timeout: float) -> str | None:
        if self._closed:
            raise BridgeError("transport closed")
        try:
            return self._queue.get(timeout=max(timeout, 0.0))  # type: ignore[return-value]
        except queue.Empty:
            return None

    def close(self) -> None:
        self._closed = True
