"""dynbench-adapter entry point."""

from __future__ import annotations

import argparse
import sys

from .models import MODELS, NeuralModelSkeleton
from .server import AdapterConfig, serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dynbench-adapter")
    parser.add_argument("--model", choices=sorted(MODELS), default="cvm")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--transport", choices=["stdio", "tcp"], default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    parser.add_argument("--min-history", type=int, default=None)
    args = parser.parse_args(argv)

    if MODELS[args.model] is NeuralModelSkeleton:
        print(
            "neural-skeleton is an integration template without weights; "
            "see dynbench_adapter.models.NeuralModelSkeleton",
            file=sys.stderr,
        )
        return 2

    config = AdapterConfig(
        model=args.model,
        seed=args.seed,
        transport=args.transport,
        host=args.host,
        port=args.port,
        min_history=args.min_history,
    )
    return serve(config)


if __name__ == "__main__":
    raise SystemExit(main())
