"""Scene ingestion, grid resampling, density filtering, and synthetic scenes.

A scene is a finite cast of pedestrian agents with gap-free ground-truth
tracks on a uniform tick grid (delta_t seconds per tick). Two input formats
are supported:

- ``eth_ucy_txt``: whitespace-separated ``frame_id ped_id x y`` lines,
  positions in meters. Frame ids map to ticks via a stride (auto-inferred
  from the frame spacing when not given); interior gaps in a pedestrian's
  annotation are filled by linear interpolation.
- ``scene_jsonl``: one scene object per line, the harness's canonical
  interchange format (also what the synthetic generator writes).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyDatasetError, InsufficientDataError, ParseError

Position = tuple[float, float]

FORMATS = ("eth_ucy_txt", "scene_jsonl")


@dataclass(frozen=True)
class TrackPoint:
    """One sample of an agent track: tick index plus planar position in meters."""

    t: int
    pos: Position

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ConfigError(f"tick index must be non-negative, got {self.t}")
        if not (math.isfinite(self.pos[0]) and math.isfinite(self.pos[1])):
            raise ConfigError(f"non-finite position at tick {self.t}: {self.pos}")


@dataclass(frozen=True)
class Track:
    """An ordered agent track. Ground-truth tracks are gap-free by construction."""

    agent_id: str
    points: tuple[TrackPoint, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ConfigError(f"track {self.agent_id!r} has no points")
        ticks = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ConfigError(f"track {self.agent_id!r} ticks not strictly increasing")

    @property
    def length(self) -> int:
        return len(self.points)

    @property
    def start_tick(self) -> int:
        return self.points[0].t

    @property
    def end_tick(self) -> int:
        return self.points[-1].t

    @property
    def contiguous(self) -> bool:
        return self.end_tick - self.start_tick + 1 == len(self.points)

    def covers(self, tick: int) -> bool:
        return self.start_tick <= tick <= self.end_tick

    def pos_at(self, tick: int) -> Position:
        """Position at a tick; requires a contiguous (ground-truth) track."""
        if not self.contiguous:
            raise ConfigError(f"pos_at on non-contiguous track {self.agent_id!r}")
        if not self.covers(tick):
            raise ConfigError(f"track {self.agent_id!r} does not cover tick {tick}")
        return self.points[tick - self.start_tick].pos

    def future_block(self, issue_tick: int, horizon: int) -> np.ndarray | None:
        """Positions at ticks issue+1..issue+horizon as an (F, 2) array.

        Returns None unless the track covers the full horizon; partial
        futures are never fabricated.
        """
        if not self.covers(issue_tick + 1) or not self.covers(issue_tick + horizon):
            return None
        base = issue_tick + 1 - self.start_tick
        return np.array([self.points[base + m].pos for m in range(horizon)], dtype=np.float64)

    def xy_array(self) -> np.ndarray:
        return np.array([p.pos for p in self.points], dtype=np.float64)


@dataclass(frozen=True)
class Scene:
    """A continuous recording: ground-truth agent tracks on a shared tick grid.

    duration_ticks counts ticks; valid tick indices are 0..duration_ticks-1.
    """

    scene_id: str
    agents: tuple[Track, ...]
    duration_ticks: int
    delta_t: float

    def __post_init__(self) -> None:
        if self.delta_t <= 0:
            raise ConfigError(f"delta_t must be positive, got {self.delta_t}")
        if self.duration_ticks < 1:
            raise ConfigError(f"duration_ticks must be >= 1, got {self.duration_ticks}")
        ids = [t.agent_id for t in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"scene {self.scene_id!r} has duplicate agent ids")
        for track in self.agents:
            if not track.contiguous:
                raise ConfigError(f"ground-truth track {track.agent_id!r} has gaps")
            if track.end_tick >= self.duration_ticks:
                raise ConfigError(
                    f"track {track.agent_id!r} extends to tick {track.end_tick}, "
                    f"beyond scene duration {self.duration_ticks}"
                )

    def agent(self, agent_id: str) -> Track:
        for track in self.agents:
            if track.agent_id == agent_id:
                return track
        raise KeyError(agent_id)

    def concurrency(self, tick: int) -> int:
        return sum(1 for t in self.agents if t.covers(tick))

    def max_concurrency(self) -> int:
        if not self.agents:
            return 0
        return max(self.concurrency(t) for t in range(self.duration_ticks))


@dataclass(frozen=True)
class ObservedFrame:
    """Per-tick detector output: at most one noisy position per agent."""

    tick: int
    detections: tuple[tuple[str, Position], ...]

    def __post_init__(self) -> None:
        ids = [aid for aid, _ in self.detections]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"frame {self.tick} has duplicate detections")


@dataclass(frozen=True)
class ObservationModel:
    """Synthetic detector: isotropic Gaussian noise, dropout, limited range.

    sensor_range is measured from a static ego position (world origin by
    default); detections outside it are never produced.
    """

    noise_sigma: float = 0.0
    dropout_prob: float = 0.0
    sensor_range: float = math.inf
    seed: int = 0
    ego_pos: Position = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.dropout_prob < 1:
            raise ConfigError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")
        if self.sensor_range <= 0:
            raise ConfigError(f"sensor_range must be positive, got {self.sensor_range}")


# ---------------------------------------------------------------------------
# Loading


def load_trajectory_log(
    path: str | Path,
    format: str,
    *,
    stride: int | None = None,
    delta_t: float = 0.4,
) -> list[Scene]:
    """Load scenes from a trajectory log file.

    stride applies to eth_ucy_txt only: frame ids advance by ``stride`` per
    tick. When None the stride is inferred as the gcd of the frame spacing.
    """
    if format not in FORMATS:
        raise ConfigError(f"unknown format {format!r}, expected one of {FORMATS}")
    path = Path(path)
    if format == "eth_ucy_txt":
        return [_load_eth_ucy(path, stride=stride, delta_t=delta_t)]
    return load_scenes_jsonl(path)


def _load_eth_ucy(path: Path, *, stride: int | None, delta_t: float) -> Scene:
    rows: list[tuple[int, int, str, float, float]] = []  # (lineno, frame, ped, x, y)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            try:
                frame = int(float(parts[0]))
                ped = str(int(float(parts[1])))
                x, y = float(parts[2]), float(parts[3])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(f"{path}:{lineno}: non-finite coordinates")
            rows.append((lineno, frame, ped, x, y))
    if not rows:
        raise EmptyDatasetError(f"{path}: no trajectory rows")

    frames = sorted({r[1] for r in rows})
    if stride is None:
        stride = 0
        for a, b in zip(frames, frames[1:]):
            stride = math.gcd(stride, b - a)
        stride = stride or 1
    elif stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    base = frames[0]

    per_agent: dict[str, dict[int, tuple[int, float, float]]] = {}
    for lineno, frame, ped, x, y in rows:
        offset = frame - base
        if offset % stride:
            raise ParseError(
                f"{path}:{lineno}: frame {frame} is not on the stride-{stride} grid"
            )
        tick = offset // stride
        slot = per_agent.setdefault(ped, {})
        if tick in slot:
            raise ParseError(f"{path}:{lineno}: duplicate entry for pedestrian {ped} at frame {frame}")
        slot[tick] = (lineno, x, y)

    tracks = []
    for ped in sorted(per_agent, key=lambda p: (min(per_agent[p]), p)):
        samples = sorted((t, x, y) for t, (_, x, y) in per_agent[ped].items())
        tracks.append(_interpolate_gaps(ped, samples))
    duration = max(t.end_tick for t in tracks) + 1
    return Scene(scene_id=path.stem, agents=tuple(tracks), duration_ticks=duration, delta_t=delta_t)


def _interpolate_gaps(agent_id: str, samples: Sequence[tuple[int, float, float]]) -> Track:
    """Fill interior tick gaps by linear interpolation; never extrapolates."""
    points = []
    for (t0, x0, y0), (t1, x1, y1) in zip(samples, samples[1:]):
        points.append(TrackPoint(t0, (x0, y0)))
        for t in range(t0 + 1, t1):
            w = (t - t0) / (t1 - t0)
            points.append(TrackPoint(t, (x0 + w * (x1 - x0), y0 + w * (y1 - y0))))
    last = samples[-1]
    points.append(TrackPoint(last[0], (last[1], last[2])))
    return Track(agent_id=agent_id, points=tuple(points))


def load_scenes_jsonl(path: str | Path) -> list[Scene]:
    path = Path(path)
    scenes = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            try:
                scenes.append(scene_from_json(obj))
            except (KeyError, TypeError, ValueError, ConfigError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not scenes:
        raise EmptyDatasetError(f"{path}: no scenes")
    return scenes


def scene_from_json(obj: dict) -> Scene:
    tracks = []
    for agent in obj["agents"]:
        start = int(agent["start_tick"])
        points = tuple(
            TrackPoint(start + i, (float(x), float(y))) for i, (x, y) in enumerate(agent["xy"])
        )
        tracks.append(Track(agent_id=str(agent["id"]), points=points))
    duration = max((t.end_tick for t in tracks), default=0) + 1
    return Scene(
        scene_id=str(obj["scene_id"]),
        agents=tuple(tracks),
        duration_ticks=duration,
        delta_t=float(obj["delta_t"]),
    )


def scene_to_json(scene: Scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "delta_t": scene.delta_t,
        "agents": [
            {
                "id": t.agent_id,
                "start_tick": t.start_tick,
                "xy": [[p.pos[0], p.pos[1]] for p in t.points],
            }
            for t in scene.agents
        ],
    }


def write_scenes_jsonl(scenes: Iterable[Scene], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_json(scene)) + "\n")


# ---------------------------------------------------------------------------
# Resampling and filtering


def resample_to_grid(
    raw: Sequence[tuple[float, Position]],
    delta_t: float,
    *,
    agent_id: str = "resampled",
) -> Track:
    """Linearly interpolate irregular (time, position) samples onto the tick grid.

    Grid points are the multiples of delta_t inside the raw time range; no
    extrapolation beyond the endpoints. Idempotent on already-gridded input.
    """
    if len(raw) < 2:
        raise InsufficientDataError(f"resampling needs >= 2 samples, got {len(raw)}")
    times = np.array([t for t, _ in raw], dtype=np.float64)
    if np.any(np.diff(times) <= 0):
        raise ConfigError("raw sample times must be strictly increasing")
    if times[0] < 0:
        raise ConfigError("raw sample times must be non-negative")
    if delta_t <= 0:
        raise ConfigError(f"delta_t must be positive, got {delta_t}")
    xs = np.array([p[0] for _, p in raw], dtype=np.float64)
    ys = np.array([p[1] for _, p in raw], dtype=np.float64)

    eps = 1e-9 * delta_t
    k_min = math.ceil((times[0] - eps) / delta_t)
    k_max = math.floor((times[-1] + eps) / delta_t)
    if k_max < k_min:
        raise InsufficientDataError("raw time range contains no grid point")
    ticks = np.arange(k_min, k_max + 1)
    grid_times = np.clip(ticks * delta_t, times[0], times[-1])
    gx = np.interp(grid_times, times, xs)
    gy = np.interp(grid_times, times, ys)
    points = tuple(TrackPoint(int(t), (float(x), float(y))) for t, x, y in zip(ticks, gx, gy))
    return Track(agent_id=agent_id, points=points)


def filter_scenes(scenes: Iterable[Scene], min_concurrent: int) -> list[Scene]:
    """Keep scenes with at least one tick where >= min_concurrent agents coexist."""
    if min_concurrent < 1:
        raise ConfigError(f"min_concurrent must be >= 1, got {min_concurrent}")
    return [s for s in scenes if s.max_concurrency() >= min_concurrent]


# ---------------------------------------------------------------------------
# Synthetic scenes


@dataclass(frozen=True)
class WalkerConfig:
    """Random-walker population for synthetic scenes.

    Agents walk with piecewise-constant velocity: heading and base speed are
    redrawn with probability turn_prob per tick, speed receives per-tick
    Gaussian jitter (clipped so displacement never exceeds speed_max*delta_t),
    and walls reflect. A fraction of agents is born/dies mid-scene.
    """

    n_agents: int = 10
    duration_ticks: int = 100
    delta_t: float = 0.4
    bounds: tuple[float, float, float, float] = (-30.0, -30.0, 30.0, 30.0)
    speed_min: float = 0.5
    speed_max: float = 2.0
    turn_prob: float = 0.05
    speed_jitter: float = 0.1
    partial_lifespan_prob: float = 0.3
    scene_id: str = "synthetic"

    def __post_init__(self) -> None:
        if self.n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.duration_ticks < 2:
            raise ConfigError(f"duration_ticks must be >= 2, got {self.duration_ticks}")
        if self.delta_t <= 0:
            raise ConfigError(f"delta_t must be positive, got {self.delta_t}")
        xmin, ymin, xmax, ymax = self.bounds
        if xmin >= xmax or ymin >= ymax:
            raise ConfigError(f"degenerate world bounds {self.bounds}")
        if not 0 < self.speed_min <= self.speed_max:
            raise ConfigError(f"need 0 < speed_min <= speed_max, got {self.speed_min}, {self.speed_max}")
        if not 0 <= self.turn_prob <= 1:
            raise ConfigError(f"turn_prob must be in [0, 1], got {self.turn_prob}")
        if self.speed_jitter < 0:
            raise ConfigError(f"speed_jitter must be >= 0, got {self.speed_jitter}")


def _reflect(value: float, lo: float, hi: float) -> tuple[float, bool]:
    flipped = False
    # Fold back into [lo, hi]; one fold suffices for steps shorter than the box.
    while value < lo or value > hi:
        if value < lo:
            value = 2 * lo - value
        else:
            value = 2 * hi - value
        flipped = not flipped
    return value, flipped


def generate_synthetic_scene(config: WalkerConfig, seed: int) -> Scene:
    """Generate a deterministic random-walker scene; bit-identical for a given seed."""
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = config.bounds
    duration = config.duration_ticks
    tracks = []
    for i in range(config.n_agents):
        if rng.random() < config.partial_lifespan_prob:
            birth = int(rng.integers(0, max(duration // 3, 1)))
            death = int(rng.integers(min(2 * duration // 3, duration - 1), duration))
            death = max(death, birth + 3)
            death = min(death, duration - 1)
        else:
            birth, death = 0, duration - 1
        x = float(rng.uniform(xmin, xmax))
        y = float(rng.uniform(ymin, ymax))
        heading = float(rng.uniform(0.0, 2.0 * math.pi))
        speed = float(rng.uniform(config.speed_min, config.speed_max))
        points = [TrackPoint(birth, (x, y))]
        for tick in range(birth + 1, death + 1):
            if rng.random() < config.turn_prob:
                heading = float(rng.uniform(0.0, 2.0 * math.pi))
                speed = float(rng.uniform(config.speed_min, config.speed_max))
            step_speed = speed
            if config.speed_jitter > 0:
                step_speed += config.speed_jitter * float(rng.standard_normal())
            step_speed = min(max(step_speed, 0.0), config.speed_max)
            x += step_speed * config.delta_t * math.cos(heading)
            y += step_speed * config.delta_t * math.sin(heading)
            x, fx = _reflect(x, xmin, xmax)
            y, fy = _reflect(y, ymin, ymax)
            if fx:
                heading = math.pi - heading
            if fy:
                heading = -heading
            points.append(TrackPoint(tick, (x, y)))
        tracks.append(Track(agent_id=f"a{i}", points=tuple(points)))
    return Scene(
        scene_id=config.scene_id,
        agents=tuple(tracks),
        duration_ticks=duration,
        delta_t=config.delta_t,
    )


def observe(scene: Scene, model: ObservationModel) -> tuple[ObservedFrame, ...]:
    """Simulate the detector: one frame per tick, deterministic given the model seed."""
    rng = np.random.default_rng(model.seed)
    ego = np.array(model.ego_pos, dtype=np.float64)
    frames = []
    for tick in range(scene.duration_ticks):
        detections = []
        for track in scene.agents:
            if not track.covers(tick):
                continue
            pos = np.array(track.pos_at(tick), dtype=np.float64)
            if math.isfinite(model.sensor_range) and np.linalg.norm(pos - ego) > model.sensor_range:
                continue
            if model.dropout_prob > 0 and rng.random() < model.dropout_prob:
                continue
            if model.noise_sigma > 0:
                pos = pos + model.noise_sigma * rng.standard_normal(2)
            detections.append((track.agent_id, (float(pos[0]), float(pos[1]))))
        frames.append(ObservedFrame(tick=tick, detections=tuple(detections)))
    return tuple(frames)
