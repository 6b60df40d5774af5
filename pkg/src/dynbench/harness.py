"""Experiment orchestration: sweep grids, history ablation, repeatability.

An experiment is a grid of cells (predictor, k, h, repetition); every cell
replays all scenes and aggregates dataset metrics. Cells are seeded with
stable hashes so results reproduce regardless of execution order, and a
failing cell is recorded as failed without stopping its neighbours.

Note on seeding: the per-cell hash deliberately excludes the swept axes
(k and h). Observation noise and candidate sampling are therefore identical
along a row, which makes candidate sets nested across k (Best-of-N
monotonicity is exact rather than statistical) and lets history ablations
vary nothing but the window length.
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .bridge import BridgeClient, BridgedPredictor, parse_endpoint
from .errors import ConfigError
from .metrics import DatasetMetrics, aggregate_dataset
from .predictors import Predictor, build_predictor
from .replay import ReplayConfig, SceneResult, TimeMode, run_scene
from .scenes import ObservationModel, Scene, Track, load_scenes_jsonl
from .seeding import stable_seed
from .tracking import Tracker, TrackerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COUNT_FIELDS = (
    "issued",
    "matured",
    "expired",
    "timeout_ticks",
    "ineligible",
    "missing",
    "shortfalls",
    "peer_errors",
)


@dataclass(frozen=True)
class PredictorSpec:
    """One predictor column of the experiment grid."""

    kind: str  # cvm | noisy_cvm | prob_cvm | bridge
    label: str
    address: str | None = None  # bridge only
    sigma_speed: float = 0.1
    sigma_angle: float = 0.2


def parse_predictor_spec(
    text: str, *, sigma_speed: float = 0.1, sigma_angle: float = 0.2
) -> PredictorSpec:
    """Parse the CLI grammar: cvm | noisy_cvm | prob_cvm | bridge:<address>."""
    if text.startswith("bridge:"):
        address = text[len("bridge:"):]
        parse_endpoint(address)  # validate early
        return PredictorSpec(kind="bridge", label=text, address=address,
                             sigma_speed=sigma_speed, sigma_angle=sigma_angle)
    if text in ("cvm", "noisy_cvm", "prob_cvm"):
        return PredictorSpec(kind=text, label=text,
                             sigma_speed=sigma_speed, sigma_angle=sigma_angle)
    raise ConfigError(f"unknown predictor spec {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    scenes_path: str
    predictors: tuple[PredictorSpec, ...]
    k_values: tuple[int, ...] = (1, 5, 10)
    h_values: tuple[int, ...] = (2, 4, 8)
    repetitions: int = 1
    seed: int = 0
    time_mode: TimeMode = TimeMode.VIRTUAL
    delta_t: float = 0.4
    f: int = 12
    deadline: float | None = None
    noise_sigma: float = 0.0
    dropout_prob: float = 0.0
    sensor_range: float = float("inf")
    alpha: float = 0.5
    max_missed: int = 2
    h_max: int | None = None
    repeat_scene_id: str | None = None
    mode: str = "sweep"  # sweep | ablate | repeat

    def __post_init__(self) -> None:
        if not self.predictors:
            raise ConfigError("experiment needs at least one predictor")
        if not self.k_values or not self.h_values:
            raise ConfigError("k_values and h_values must be non-empty")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.mode not in ("sweep", "ablate", "repeat"):
            raise ConfigError(f"mode must be sweep, ablate, or repeat, got {self.mode!r}")
        object.__setattr__(self, "time_mode", TimeMode(self.time_mode))

    @property
    def tracker_h_max(self) -> int:
        return self.h_max if self.h_max is not None else max(2, max(self.h_values))


@dataclass(frozen=True)
class CellResult:
    predictor: str
    k: int
    h: int
    repetition: int
    dataset: DatasetMetrics | None
    counts: dict[str, int] = field(default_factory=dict)
    failed: bool = False
    error: str | None = None
    wall_time: float = 0.0


@dataclass(frozen=True)
class ExperimentResult:
    layout: str  # "k" | "h" | "repeat"
    config_echo: dict
    cells: tuple[CellResult, ...]


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read the flat TOML experiment file."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    try:
        sigma_speed = float(raw.get("sigma_speed", 0.1))
        sigma_angle = float(raw.get("sigma_angle", 0.2))
        predictors = tuple(
            parse_predictor_spec(p, sigma_speed=sigma_speed, sigma_angle=sigma_angle)
            for p in raw["predictors"]
        )
        return ExperimentConfig(
            scenes_path=str(raw["scenes"]),
            predictors=predictors,
            k_values=tuple(int(k) for k in raw.get("k_values", (1, 5, 10))),
            h_values=tuple(int(h) for h in raw.get("h_values", (2, 4, 8))),
            repetitions=int(raw.get("repetitions", 1)),
            seed=int(raw.get("seed", 0)),
            time_mode=TimeMode(raw.get("time_mode", "virtual")),
            delta_t=float(raw.get("delta_t", 0.4)),
            f=int(raw.get("f", 12)),
            deadline=float(raw["deadline"]) if "deadline" in raw else None,
            noise_sigma=float(raw.get("noise_sigma", 0.0)),
            dropout_prob=float(raw.get("dropout_prob", 0.0)),
            sensor_range=float(raw.get("sensor_range", float("inf"))),
            alpha=float(raw.get("alpha", 0.5)),
            max_missed=int(raw.get("max_missed", 2)),
            h_max=int(raw["h_max"]) if "h_max" in raw else None,
            repeat_scene_id=raw.get("repeat_scene_id"),
            mode=str(raw.get("mode", "sweep")),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required key {exc}") from None


def config_echo(config: ExperimentConfig) -> dict:
    return {
        "scenes": config.scenes_path,
        "predictors": [
            {"kind": p.kind, "label": p.label, "address": p.address,
             "sigma_speed": p.sigma_speed, "sigma_angle": p.sigma_angle}
            for p in config.predictors
        ],
        "k_values": list(config.k_values),
        "h_values": list(config.h_values),
        "repetitions": config.repetitions,
        "seed": config.seed,
        "time_mode": config.time_mode.value,
        "delta_t": config.delta_t,
        "f": config.f,
        "deadline": config.deadline,
        "noise_sigma": config.noise_sigma,
        "dropout_prob": config.dropout_prob,
        "sensor_range": config.sensor_range,
        "alpha": config.alpha,
        "max_missed": config.max_missed,
    }


def _worker_count() -> int:
    env = os.environ.get("DYNBENCH_WORKERS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def run_cell(
    spec: PredictorSpec,
    scenes: list[Scene],
    k: int,
    h: int,
    repetition: int,
    config: ExperimentConfig,
    dump_collector: list[tuple[str, list[Track]]] | None = None,
    rerun: bool = False,
) -> CellResult:
    """Run every scene for one grid cell and aggregate.

    The seed hash excludes the swept axes (k and h) so a row varies only in
    the swept quantity: candidate sets stay nested across k and axis-invariant
    predictors produce bit-identical cells across h. rerun=True additionally
    ignores the repetition index (repeatability mode = exact reruns, where
    only scheduling may vary the outcome).
    """
    if rerun:
        cell_seed = stable_seed(config.seed, spec.label)
    else:
        cell_seed = stable_seed(config.seed, spec.label, repetition)
    tracker_h_max = max(config.tracker_h_max, h)
    realtime = config.time_mode is TimeMode.REALTIME
    ordered = sorted(scenes, key=lambda s: s.scene_id)

    bridge_predictor: BridgedPredictor | None = None
    try:
        if spec.kind == "bridge":
            client = BridgeClient(parse_endpoint(spec.address).open())
            client.handshake(config.delta_t, h, config.f, k)
            bridge_predictor = BridgedPredictor(client, realtime=realtime)

        def run_one(scene: Scene) -> SceneResult:
            observation = ObservationModel(
                noise_sigma=config.noise_sigma,
                dropout_prob=config.dropout_prob,
                sensor_range=config.sensor_range,
                seed=stable_seed(cell_seed, "obs", scene.scene_id),
            )
            predictor: Predictor
            if bridge_predictor is not None:
                predictor = bridge_predictor
            else:
                predictor = build_predictor(
                    spec.kind,
                    sigma_speed=spec.sigma_speed,
                    sigma_angle=spec.sigma_angle,
                    seed=stable_seed(cell_seed, "pred", scene.scene_id),
                )
            replay_config = ReplayConfig(
                delta_t=config.delta_t,
                h=h,
                f=config.f,
                k=k,
                time_mode=config.time_mode,
                deadline=config.deadline,
                seed=stable_seed(cell_seed, "replay", scene.scene_id),
            )
            tracker_config = TrackerConfig(
                alpha=config.alpha, max_missed=config.max_missed, h_max=tracker_h_max
            )
            dump_tracker = None
            if dump_collector is not None:
                dump_tracker = Tracker(tracker_config, keep_full_history=True)
            result = run_scene(
                scene, observation, tracker_config, predictor, replay_config,
                dump_tracker=dump_tracker,
            )
            if dump_collector is not None:
                dump_collector.append((scene.scene_id, dump_tracker.dump_tracks()))
            return result

        workers = _worker_count()
        # Realtime timing and single-endpoint bridges both need sequential scenes.
        if realtime or bridge_predictor is not None or workers == 1:
            results = [run_one(s) for s in ordered]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_one, ordered))

        dataset = aggregate_dataset([r.metrics for r in results])
        counts = {name: sum(getattr(r, name) for r in results) for name in COUNT_FIELDS}
        wall = sum(r.wall_time for r in results)
        return CellResult(
            predictor=spec.label, k=k, h=h, repetition=repetition,
            dataset=dataset, counts=counts, wall_time=wall,
        )
    except Exception as exc:  # a broken cell must not take down its neighbours
        return CellResult(
            predictor=spec.label, k=k, h=h, repetition=repetition,
            dataset=None, failed=True, error=str(exc),
        )
    finally:
        if bridge_predictor is not None:
            bridge_predictor.close()


def _preflight_bridges(config: ExperimentConfig) -> None:
    """Handshake every bridged predictor once, before any scene runs."""
    for spec in config.predictors:
        if spec.kind != "bridge":
            continue
        client = BridgeClient(parse_endpoint(spec.address).open())
        try:
            client.handshake(
                config.delta_t, max(config.h_values), config.f, max(config.k_values)
            )
        finally:
            client.close()


def run_experiment(
    config: ExperimentConfig,
    scenes: list[Scene] | None = None,
    layout: str = "k",
    rerun: bool = False,
) -> ExperimentResult:
    """Run the full (predictor, k, h, repetition) grid over all scenes."""
    if scenes is None:
        scenes = load_scenes_jsonl(config.scenes_path)
    _preflight_bridges(config)
    cells = []
    for spec in config.predictors:
        for k in config.k_values:
            for h in config.h_values:
                for rep in range(config.repetitions):
                    cells.append(run_cell(spec, scenes, k, h, rep, config, rerun=rerun))
    return ExperimentResult(layout=layout, config_echo=config_echo(config), cells=tuple(cells))


def ablate_history(
    config: ExperimentConfig, scenes: list[Scene] | None = None
) -> ExperimentResult:
    """History ablation: sweep h with k fixed to the first configured value."""
    ablated = replace(config, k_values=(config.k_values[0],))
    return run_experiment(ablated, scenes=scenes, layout="h")


def repeatability(
    config: ExperimentConfig,
    n: int = 20,
    scenes: list[Scene] | None = None,
    k: int = 5,
    h: int = 8,
) -> ExperimentResult:
    """Run one scene n times per predictor; reports render mean/std per metric."""
    if n < 2:
        raise ConfigError(f"repeatability needs n >= 2 runs, got {n}")
    if scenes is None:
        scenes = load_scenes_jsonl(config.scenes_path)
    ordered = sorted(scenes, key=lambda s: s.scene_id)
    if config.repeat_scene_id is not None:
        chosen = [s for s in ordered if s.scene_id == config.repeat_scene_id]
        if not chosen:
            raise ConfigError(f"repeat_scene_id {config.repeat_scene_id!r} not in dataset")
    else:
        chosen = [ordered[0]]
    derived = replace(config, k_values=(k,), h_values=(h,), repetitions=n)
    return run_experiment(derived, scenes=chosen, layout="repeat", rerun=True)
