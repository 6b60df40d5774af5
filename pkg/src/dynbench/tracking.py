"""Exponential-moving-average tracker over detector frames.

Association is given (detections carry true agent ids); the tracker's job is
smoothing, bounded history retention, and lifecycle: a track missing for more
than max_missed consecutive ticks is terminated and its history discarded. A
re-detected agent is born again with a fresh history.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import ConfigError, NoTrackError, SequencingError
from .scenes import ObservedFrame, Position, Track, TrackPoint


@dataclass(frozen=True)
class TrackerConfig:
    alpha: float = 0.5
    max_missed: int = 2
    h_max: int = 16

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.max_missed < 0:
            raise ConfigError(f"max_missed must be >= 0, got {self.max_missed}")
        if self.h_max < 2:
            raise ConfigError(f"h_max must be >= 2, got {self.h_max}")


@dataclass
class TrackState:
    agent_id: str
    smoothed_pos: Position
    history: deque[TrackPoint]
    ticks_since_seen: int = 0
    alive: bool = True


class Tracker:
    """Single-writer tracker; update() must be called once per tick, in order."""

    def __init__(self, config: TrackerConfig, keep_full_history: bool = False) -> None:
        self.config = config
        self._states: dict[str, TrackState] = {}
        self._last_tick: int | None = None
        # Full smoothed trajectories per track generation, for --dump-tracks.
        self._full: list[tuple[str, list[TrackPoint]]] | None = [] if keep_full_history else None
        self._open_full: dict[str, list[TrackPoint]] = {}

    def update(self, frame: ObservedFrame) -> None:
        if self._last_tick is not None and frame.tick != self._last_tick + 1:
            raise SequencingError(
                f"frame tick {frame.tick} does not follow {self._last_tick}; frames must not be skipped"
            )
        self._last_tick = frame.tick
        alpha = self.config.alpha
        detected = dict(frame.detections)

        for agent_id, z in detected.items():
            state = self._states.get(agent_id)
            if state is None:
                state = TrackState(
                    agent_id=agent_id,
                    smoothed_pos=z,
                    history=deque(maxlen=self.config.h_max),
                )
                self._states[agent_id] = state
                point = TrackPoint(frame.tick, z)
            else:
                sx = alpha * z[0] + (1 - alpha) * state.smoothed_pos[0]
                sy = alpha * z[1] + (1 - alpha) * state.smoothed_pos[1]
                state.smoothed_pos = (sx, sy)
                state.ticks_since_seen = 0
                point = TrackPoint(frame.tick, state.smoothed_pos)
            state.history.append(point)
            if self._full is not None:
                self._open_full.setdefault(agent_id, []).append(point)

        dead = []
        for agent_id, state in self._states.items():
            if agent_id in detected:
                continue
            state.ticks_since_seen += 1
            if state.ticks_since_seen > self.config.max_missed:
                dead.append(agent_id)
        for agent_id in dead:
            self._states[agent_id].alive = False
            del self._states[agent_id]
            if self._full is not None:
                self._full.append((agent_id, self._open_full.pop(agent_id)))

    def live_tracks(self) -> dict[str, TrackState]:
        return dict(self._states)

    def history_window(self, agent_id: str, h: int) -> tuple[TrackPoint, ...]:
        """Last min(h, available) smoothed points, oldest first; never padded."""
        if not 1 <= h <= self.config.h_max:
            raise ConfigError(f"h must be in [1, {self.config.h_max}], got {h}")
        state = self._states.get(agent_id)
        if state is None:
            raise NoTrackError(f"no live track for agent {agent_id!r}")
        pts = list(state.history)
        return tuple(pts[-h:])

    def dump_tracks(self) -> list[Track]:
        """All smoothed trajectories seen so far (requires keep_full_history)."""
        if self._full is None:
            raise ConfigError("tracker was not constructed with keep_full_history")
        out = []
        closed = {}
        for agent_id, pts in self._full:
            n = closed.get(agent_id, 0)
            closed[agent_id] = n + 1
            out.append(Track(agent_id=f"{agent_id}#{n}" if n else agent_id, points=tuple(pts)))
        for agent_id, pts in self._open_full.items():
            n = closed.get(agent_id, 0)
            out.append(Track(agent_id=f"{agent_id}#{n}" if n else agent_id, points=tuple(pts)))
        return out
