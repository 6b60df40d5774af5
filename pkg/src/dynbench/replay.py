"""Tick-loop replay engine with per-tick prediction deadlines.

Each tick: deliver the observed frame to the tracker, assemble a prediction
request from the live tracks' bounded history windows, invoke the predictor
under the deadline, apply Best-of-N selection, and hold the records until
their maturity tick (issue + F), when they are scored against the raw
ground-truth track. Predictions whose full F-step ground truth never
materializes are expired, not partially scored.

Two time modes:

- virtual: ticks advance immediately; the predictor runs to completion and
  a result is retroactively flagged as a timeout if it overran the deadline.
  Metrics are deterministic (fixed seeds make reruns bit-identical).
- realtime: ticks are wall-clock paced at delta_t; an invocation still
  running at the deadline is abandoned and its late result discarded.
"""

from __future__ import annotations

import enum
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    BridgePeerError,
    ConfigError,
    ContractError,
    PredictTimeout,
    SceneAborted,
)
from .metrics import InstantError, SceneAccumulator, SceneMetrics, score_instant
from .predictors import (
    Modality,
    PredictionRecord,
    PredictionRequest,
    Predictor,
    RequestItem,
    select_top_k,
    validate_record,
)
from .scenes import ObservationModel, Scene, observe
from .seeding import stable_seed
from .tracking import Tracker, TrackerConfig

# Extra wait beyond the deadline before abandoning a realtime invocation;
# lets a self-timing (bridged) predictor report its own timeout first.
_REALTIME_GRACE = 0.02


class TimeMode(str, enum.Enum):
    VIRTUAL = "virtual"
    REALTIME = "realtime"


@dataclass(frozen=True)
class ReplayConfig:
    delta_t: float = 0.4
    h: int = 8
    f: int = 12
    k: int = 1
    time_mode: TimeMode = TimeMode.VIRTUAL
    deadline: float | None = None  # defaults to delta_t
    seed: int = 0

    def __post_init__(self) -> None:
        if self.delta_t <= 0:
            raise ConfigError(f"delta_t must be positive, got {self.delta_t}")
        if self.h < 1:
            raise ConfigError(f"h must be >= 1, got {self.h}")
        if self.f < 1:
            raise ConfigError(f"f must be >= 1, got {self.f}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        object.__setattr__(self, "time_mode", TimeMode(self.time_mode))
        if self.deadline is not None and self.deadline <= 0:
            raise ConfigError(f"deadline must be positive, got {self.deadline}")
        if self.time_mode is TimeMode.REALTIME and self.effective_deadline > self.delta_t:
            raise ConfigError(
                f"realtime deadline {self.effective_deadline} exceeds tick duration {self.delta_t}"
            )

    @property
    def effective_deadline(self) -> float:
        return self.delta_t if self.deadline is None else self.deadline


@dataclass(frozen=True)
class PendingPrediction:
    record: PredictionRecord
    maturity_tick: int


@dataclass(frozen=True)
class TickOutcome:
    tick: int
    issued: int
    timeouts: int
    ineligible: int
    matured: int


@dataclass(frozen=True)
class SceneResult:
    scene_id: str
    metrics: SceneMetrics
    ticks: tuple[TickOutcome, ...]
    issued: int
    matured: int
    expired: int
    timeout_ticks: int
    ineligible: int
    missing: int
    shortfalls: int
    peer_errors: int
    wall_time: float
    instants: tuple[InstantError, ...] | None = None


@dataclass(frozen=True)
class _DeadlineOutcome:
    records: list[PredictionRecord] | None
    elapsed: float
    timed_out: bool
    peer_error: bool = False


def enforce_deadline(
    invocation: Callable[[], list[PredictionRecord]],
    deadline: float,
    time_mode: TimeMode,
) -> _DeadlineOutcome:
    """Run one predictor invocation under the deadline policy of the time mode."""
    if time_mode is TimeMode.VIRTUAL:
        start = time.perf_counter()
        try:
            records = invocation()
        except PredictTimeout:
            return _DeadlineOutcome(None, time.perf_counter() - start, True)
        except BridgePeerError:
            return _DeadlineOutcome(None, time.perf_counter() - start, False, peer_error=True)
        elapsed = time.perf_counter() - start
        return _DeadlineOutcome(records, elapsed, elapsed > deadline)

    box: dict[str, object] = {}

    def worker() -> None:
        try:
            box["records"] = invocation()
        except BaseException as exc:  # propagated to the engine thread below
            box["error"] = exc

    thread = threading.Thread(target=worker, daemon=True)
    start = time.perf_counter()
    thread.start()
    thread.join(deadline + _REALTIME_GRACE)
    elapsed = time.perf_counter() - start
    if thread.is_alive():
        # Late result is discarded whenever the worker eventually finishes.
        return _DeadlineOutcome(None, elapsed, True)
    error = box.get("error")
    if isinstance(error, PredictTimeout):
        return _DeadlineOutcome(None, elapsed, True)
    if isinstance(error, BridgePeerError):
        return _DeadlineOutcome(None, elapsed, False, peer_error=True)
    if error is not None:
        raise error
    return _DeadlineOutcome(box["records"], elapsed, elapsed > deadline)


def run_scene(
    scene: Scene,
    observation_model: ObservationModel,
    tracker_config: TrackerConfig,
    predictor: Predictor,
    replay_config: ReplayConfig,
    metrics_sink: SceneAccumulator | None = None,
    dump_tracker: Tracker | None = None,
) -> SceneResult:
    """Replay one scene through the tracker and predictor, scoring online."""
    cfg = replay_config
    if cfg.h > tracker_config.h_max:
        raise ConfigError(f"h={cfg.h} exceeds tracker h_max={tracker_config.h_max}")
    deadline = cfg.effective_deadline
    frames = observe(scene, observation_model)
    tracker = dump_tracker if dump_tracker is not None else Tracker(tracker_config)
    sink = metrics_sink if metrics_sink is not None else SceneAccumulator(scene.scene_id)
    select_rng = np.random.default_rng(stable_seed(cfg.seed, "select", scene.scene_id))

    pending: dict[int, list[PendingPrediction]] = defaultdict(list)
    ticks: list[TickOutcome] = []
    issued = matured = expired = timeout_ticks = ineligible = 0
    missing = shortfalls = peer_errors = 0
    min_history = max(1, predictor.min_history)

    pace_origin = time.perf_counter()
    for tick in range(scene.duration_ticks):
        if cfg.time_mode is TimeMode.REALTIME:
            target = pace_origin + tick * cfg.delta_t
            now = time.perf_counter()
            if now < target:
                time.sleep(target - now)

        try:
            tracker.update(frames[tick])
            items = []
            tick_ineligible = 0
            for agent_id in tracker.live_tracks():
                window = tracker.history_window(agent_id, cfg.h)
                eligible = len(window) >= min_history
                if not eligible:
                    tick_ineligible += 1
                items.append(RequestItem(agent_id, window, eligible))
            request = PredictionRequest(
                tick=tick, items=tuple(items), horizon_f=cfg.f, k=cfg.k, deadline=deadline
            )
            outcome = enforce_deadline(
                lambda: predictor.predict(request), deadline, cfg.time_mode
            )
        except Exception as exc:
            raise SceneAborted(f"scene {scene.scene_id!r} tick {tick}: {exc}") from exc

        tick_issued = 0
        if outcome.peer_error:
            peer_errors += 1
        elif outcome.timed_out:
            timeout_ticks += 1
        else:
            answered = set()
            for record in outcome.records:
                try:
                    validate_record(record, cfg.f)
                    if record.issue_tick != tick:
                        raise ContractError(
                            f"record for {record.agent_id!r} claims issue tick "
                            f"{record.issue_tick}, expected {tick}"
                        )
                    if record.agent_id in answered:
                        raise ContractError(f"duplicate record for agent {record.agent_id!r}")
                except Exception as exc:
                    raise SceneAborted(
                        f"scene {scene.scene_id!r} tick {tick}: {exc}"
                    ) from exc
                answered.add(record.agent_id)
                if (
                    record.modality is not Modality.DETERMINISTIC
                    and len(record.candidates) < cfg.k
                ):
                    shortfalls += 1
                stamped = PredictionRecord(
                    agent_id=record.agent_id,
                    issue_tick=record.issue_tick,
                    candidates=record.candidates,
                    inference_elapsed=outcome.elapsed,
                    modality=record.modality,
                )
                chosen = select_top_k(stamped, cfg.k, select_rng)
                pending[tick + cfg.f].append(PendingPrediction(chosen, tick + cfg.f))
                tick_issued += 1
            missing += sum(
                1 for item in items if item.eligible and item.agent_id not in answered
            )
        issued += tick_issued
        ineligible += tick_ineligible

        tick_matured = 0
        for pp in pending.pop(tick, ()):
            gt = scene.agent(pp.record.agent_id).future_block(pp.record.issue_tick, cfg.f)
            if gt is None:
                expired += 1
            else:
                sink.add(score_instant(pp.record, gt))
                tick_matured += 1
        matured += tick_matured

        ticks.append(
            TickOutcome(
                tick=tick,
                issued=tick_issued,
                timeouts=1 if outcome.timed_out else 0,
                ineligible=tick_ineligible,
                matured=tick_matured,
            )
        )

    # Stream over: anything still pending can never see its full ground truth.
    expired += sum(len(v) for v in pending.values())
    pending.clear()

    sink.timeouts = timeout_ticks
    sink.expired = expired
    sink.ineligible = ineligible
    return SceneResult(
        scene_id=scene.scene_id,
        metrics=sink.finalize(),
        ticks=tuple(ticks),
        issued=issued,
        matured=matured,
        expired=expired,
        timeout_ticks=timeout_ticks,
        ineligible=ineligible,
        missing=missing,
        shortfalls=shortfalls,
        peer_errors=peer_errors,
        wall_time=time.perf_counter() - pace_origin,
        instants=tuple(sink.instants) if sink.instants is not None else None,
    )
