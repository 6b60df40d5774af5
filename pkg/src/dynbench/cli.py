"""Command-line interface: ingest, gen, run, sweep, report, conformance."""

from __future__ import annotations

import argparse
import math
import sys

from . import harness, reports
from .bridge import BridgeEndpoint, parse_endpoint, run_conformance
from .errors import DynbenchError
from .harness import ExperimentConfig, ExperimentResult, parse_predictor_spec
from .replay import TimeMode
from .scenes import (
    Scene,
    Track,
    TrackPoint,
    WalkerConfig,
    filter_scenes,
    generate_synthetic_scene,
    load_scenes_jsonl,
    load_trajectory_log,
    write_scenes_jsonl,
)
from .seeding import stable_seed

_FORMAT_ALIASES = {
    "eth_ucy": "eth_ucy_txt",
    "eth_ucy_txt": "eth_ucy_txt",
    "jsonl": "scene_jsonl",
    "scene_jsonl": "scene_jsonl",
}


def _cmd_ingest(args: argparse.Namespace) -> int:
    fmt = _FORMAT_ALIASES[args.format]
    scenes: list[Scene] = []
    for path in args.paths:
        scenes.extend(
            load_trajectory_log(
                path, fmt, stride=args.stride if args.stride > 0 else None, delta_t=args.delta_t
            )
        )
    kept = filter_scenes(scenes, args.min_concurrent)
    write_scenes_jsonl(kept, args.out)
    print(f"ingested {len(scenes)} scene(s), kept {len(kept)} -> {args.out}")
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    scenes = []
    for i in range(args.count):
        config = WalkerConfig(
            n_agents=args.agents,
            duration_ticks=args.ticks,
            delta_t=args.delta_t,
            bounds=(-args.world_extent, -args.world_extent, args.world_extent, args.world_extent),
            speed_min=args.speed_min,
            speed_max=args.speed_max,
            turn_prob=args.turn_prob,
            speed_jitter=args.jitter,
            partial_lifespan_prob=args.partial_prob,
            scene_id=f"synth-{args.seed}-{i:03d}",
        )
        scenes.append(generate_synthetic_scene(config, stable_seed(args.seed, i)))
    write_scenes_jsonl(scenes, args.out)
    print(f"generated {len(scenes)} scene(s) -> {args.out}")
    return 0


def _dump_tracks_jsonl(dumps: list[tuple[str, list[Track]]], delta_t: float, path: str) -> None:
    # Smoothed tracks can have gaps; split them into contiguous segments so
    # the scene_jsonl schema stays valid.
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for scene_id, tracks in dumps:
            agents = []
            for track in tracks:
                for si, segment in enumerate(_contiguous_segments(track.points)):
                    agents.append(
                        {
                            "id": track.agent_id if si == 0 else f"{track.agent_id}/{si}",
                            "start_tick": segment[0].t,
                            "xy": [[p.pos[0], p.pos[1]] for p in segment],
                        }
                    )
            fh.write(
                json.dumps({"scene_id": f"{scene_id}-tracks", "delta_t": delta_t, "agents": agents})
                + "\n"
            )


def _contiguous_segments(points: tuple[TrackPoint, ...]) -> list[list[TrackPoint]]:
    segments: list[list[TrackPoint]] = [[points[0]]]
    for prev, cur in zip(points, points[1:]):
        if cur.t == prev.t + 1:
            segments[-1].append(cur)
        else:
            segments.append([cur])
    return segments


def _cmd_run(args: argparse.Namespace) -> int:
    spec = parse_predictor_spec(
        args.predictor, sigma_speed=args.sigma_speed, sigma_angle=args.sigma_angle
    )
    config = ExperimentConfig(
        scenes_path=args.scenes,
        predictors=(spec,),
        k_values=(args.k,),
        h_values=(args.h,),
        repetitions=1,
        seed=args.seed,
        time_mode=TimeMode(args.time_mode),
        delta_t=args.delta_t,
        f=args.f,
        deadline=args.deadline,
        noise_sigma=args.noise_sigma,
        dropout_prob=args.dropout,
        sensor_range=args.sensor_range,
        alpha=args.alpha,
        max_missed=args.max_missed,
    )
    scenes = load_scenes_jsonl(args.scenes)
    dump_collector = [] if args.dump_tracks else None
    cell = harness.run_cell(spec, scenes, args.k, args.h, 0, config, dump_collector=dump_collector)
    result = ExperimentResult(
        layout="k", config_echo=harness.config_echo(config), cells=(cell,)
    )
    reports.save_result(result, args.out)
    if dump_collector is not None:
        _dump_tracks_jsonl(dump_collector, args.delta_t, args.dump_tracks)
    if cell.failed:
        print(f"run failed: {cell.error}", file=sys.stderr)
        return 1
    ade = cell.dataset.min_dyn_ade
    fde = cell.dataset.min_dyn_fde
    print(
        f"{spec.label} k={args.k} h={args.h}: "
        f"minDynADE={'-' if ade is None else f'{ade:.3f}'} "
        f"minDynFDE={'-' if fde is None else f'{fde:.3f}'} -> {args.out}"
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = harness.load_experiment_config(args.config)
    if config.mode == "ablate":
        result = harness.ablate_history(config)
    elif config.mode == "repeat":
        result = harness.repeatability(config, n=config.repetitions)
    else:
        result = harness.run_experiment(config)
    reports.save_result(result, args.out)
    failed = sum(1 for c in result.cells if c.failed)
    print(f"{len(result.cells)} cell(s), {failed} failed -> {args.out}")
    if failed:
        for cell in result.cells:
            if cell.failed:
                print(
                    f"  failed: {cell.predictor} k={cell.k} h={cell.h} r={cell.repetition}: {cell.error}",
                    file=sys.stderr,
                )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    result = reports.load_result(args.result)
    text = reports.render(result, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_conformance(args: argparse.Namespace) -> int:
    if args.tcp:
        endpoint = parse_endpoint(f"tcp:{args.tcp}")
    else:
        if not args.command:
            raise DynbenchError("conformance requires a peer command or --tcp host:port")
        endpoint = BridgeEndpoint("stdio_subprocess", " ".join(args.command))
    report = run_conformance(endpoint, delta_t=args.delta_t, h=args.h, f=args.f)
    print(report.render())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load trajectory logs and write scene_jsonl")
    p.add_argument("paths", nargs="+")
    p.add_argument("--format", choices=sorted(_FORMAT_ALIASES), default="eth_ucy")
    p.add_argument("--stride", type=int, default=0, help="frames per tick (0 = infer)")
    p.add_argument("--delta-t", type=float, default=0.4)
    p.add_argument("--min-concurrent", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("gen", help="generate synthetic walker scenes")
    p.add_argument("--agents", type=int, default=10)
    p.add_argument("--ticks", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--delta-t", type=float, default=0.4)
    p.add_argument("--world-extent", type=float, default=30.0)
    p.add_argument("--speed-min", type=float, default=0.5)
    p.add_argument("--speed-max", type=float, default=2.0)
    p.add_argument("--turn-prob", type=float, default=0.05)
    p.add_argument("--jitter", type=float, default=0.1)
    p.add_argument("--partial-prob", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="replay scenes with one predictor")
    p.add_argument("--scenes", required=True)
    p.add_argument("--predictor", default="cvm")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--h", type=int, default=8)
    p.add_argument("--f", type=int, default=12)
    p.add_argument("--delta-t", type=float, default=0.4)
    p.add_argument("--deadline", type=float, default=None)
    p.add_argument("--time-mode", choices=["virtual", "realtime"], default="virtual")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--sensor-range", type=float, default=math.inf)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--max-missed", type=int, default=2)
    p.add_argument("--sigma-speed", type=float, default=0.1)
    p.add_argument("--sigma-angle", type=float, default=0.2)
    p.add_argument("--dump-tracks", default=None, help="write smoothed tracks to this jsonl file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run an experiment grid from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="render a result file as a table")
    p.add_argument("result")
    p.add_argument("--format", choices=list(reports.FORMATS), default="txt")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("conformance", help="check an external predictor against the wire protocol")
    p.add_argument("--tcp", default=None, help="host:port of a running peer")
    p.add_argument("--delta-t", type=float, default=0.4)
    p.add_argument("--h", type=int, default=8)
    p.add_argument("--f", type=int, default=12)
    p.add_argument("command", nargs=argparse.REMAINDER, help="peer command line (stdio transport)")
    p.set_defaults(func=_cmd_conformance)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DynbenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
