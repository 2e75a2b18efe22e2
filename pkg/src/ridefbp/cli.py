"""Command line: ``ridefbp run|train|graph``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dataset, model
from .engine import GraphError, export_dot
from .ride import Stage, build_app
from .sim import ConfigError, SimConfig, TickError, run

_DEFAULTS = SimConfig()

# Layout-only stand-in so `graph --stage ml` works without a trained model.
_PLACEHOLDER_MODEL = model.WaitModel(0.0, 1.0, model.FEATURE, 2)


class CommandError(Exception):
    pass


def _sim_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ticks", type=int, default=_DEFAULTS.ticks)
    parser.add_argument("--drivers", type=int, default=_DEFAULTS.n_drivers)
    parser.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    parser.add_argument("--rate", type=float, default=_DEFAULTS.request_rate)
    parser.add_argument("--speed", type=float, default=_DEFAULTS.driver_speed)
    parser.add_argument("--world-size", type=float, default=_DEFAULTS.world_size)
    parser.add_argument("--cancel-prob", type=float, default=_DEFAULTS.cancel_probability)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridefbp", description="Ride Allocation app on a flow-based runtime")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate the world against the staged app")
    p_run.add_argument("--stage", choices=[s.value for s in Stage], required=True)
    _sim_flags(p_run)
    p_run.add_argument("--dataset", help="CSV to write (stage data)")
    p_run.add_argument("--model", help="trained model file (stage ml)")
    p_run.add_argument("--dot", help="also write the graph as DOT")
    p_run.add_argument("--runlog", default="runlog.jsonl", help="line-delimited run log (default: %(default)s)")

    p_train = sub.add_parser("train", help="fit the wait-time model on a collected dataset")
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--model", required=True)

    p_graph = sub.add_parser("graph", help="export the staged graph as DOT")
    p_graph.add_argument("--stage", choices=[s.value for s in Stage], required=True)
    p_graph.add_argument("--model", help="model to bind for stage ml (layout does not depend on it)")
    p_graph.add_argument("--dot", help="output path (default: stdout)")
    return parser


def cmd_run(args) -> int:
    stage = Stage(args.stage)
    config = SimConfig(
        n_drivers=args.drivers,
        world_size=args.world_size,
        request_rate=args.rate,
        driver_speed=args.speed,
        cancel_probability=args.cancel_prob,
        seed=args.seed,
        ticks=args.ticks,
    )
    config.check()
    wait_model = model.load(args.model) if stage is Stage.ML else None
    graph = build_app(stage, wait_model)
    collector = dataset.install_collection(graph) if stage is Stage.DATA else None
    if args.dot:
        Path(args.dot).write_text(export_dot(graph), encoding="utf-8")
    runlog = run(config, graph, collector)
    runlog.dump(args.runlog)
    if collector is not None:
        dataset.write_csv(collector.rows(), args.dataset)
    return 0


def cmd_train(dataset_path, model_path) -> int:
    rows = dataset.read_csv(dataset_path)
    fitted = model.fit(rows)
    r2 = model.r_squared(fitted, rows)
    model.save(fitted, model_path)
    print(
        f"slope={fitted.slope:.9f} intercept={fitted.intercept:.9f} "
        f"r2={r2:.9f} n_samples={fitted.n_samples}"
    )
    return 0


def cmd_graph(stage, dot_path=None, model_path=None) -> int:
    stage = Stage(stage)
    bound = None
    if stage is Stage.ML:
        bound = model.load(model_path) if model_path else _PLACEHOLDER_MODEL
    text = export_dot(build_app(stage, bound))
    if dot_path:
        Path(dot_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        stage = Stage(args.stage)
        if stage is Stage.DATA and not args.dataset:
            parser.error("--stage data requires --dataset")
        if stage is Stage.ML and not args.model:
            parser.error("--stage ml requires --model")
        if stage is not Stage.DATA and args.dataset:
            parser.error("--dataset is only valid with --stage data")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "train":
            return cmd_train(args.dataset, args.model)
        return cmd_graph(args.stage, args.dot, args.model)
    except (OSError, ConfigError, model.ModelError, dataset.DatasetFormatError, GraphError, TickError) as exc:
        print(f"ridefbp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
