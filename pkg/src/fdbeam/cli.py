"""Command-line entry point: ``fdbeam {gen,train,eval,baseline,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys

from fdbeam import harness
from fdbeam.channel import DatasetError, generate_dataset, read_dataset, write_dataset
from fdbeam.harness import ConfigError, load_config
from fdbeam.synthesizer import (
    CheckpointError,
    DatasetSource,
    StreamSource,
    TrainingDivergedError,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("fdbeam")


def _cmd_gen(args) -> None:
    cfg = load_config(args.config)
    n = write_dataset(args.out, generate_dataset(cfg.scenario(), args.seed, args.count))
    log.info("wrote %d realizations to %s", n, args.out)


def _cmd_train(args) -> None:
    cfg = load_config(args.config)
    tcfg = cfg.train_config()
    tcfg.seed = args.seed
    scenario = cfg.scenario()
    if args.stream:
        source = StreamSource(scenario, args.seed, tcfg.batch_size)
    else:
        source = DatasetSource(read_dataset(args.data), tcfg.batch_size)

    def progress(t, value):
        if t % args.log_every == 0:
            log.info("batch %d: loss %.4f", t, value)

    result = train(tcfg, source, scenario.budget, cfg.m_probes, progress)
    save_checkpoint(args.out, result.net, result.codebooks)
    if args.history:
        harness.write_csv(args.history, ["batch", "loss"], enumerate(result.history))
    log.info("trained %d batches (converged: %s), saved %s", len(result.history), result.converged, args.out)


def _cmd_eval(args) -> None:
    cfg = load_config(args.config)
    net, codebooks = load_checkpoint(args.ckpt)
    report = harness.evaluate(net, codebooks, read_dataset(args.data), cfg.budget(), cfg.test_seed)
    report.to_csv(args.out)
    log.info(
        "model SSE %.3f, baseline SSE %.3f, capacity %.3f",
        report.mean("model_sse"),
        report.mean("baseline_sse"),
        report.mean("capacity"),
    )


def _cmd_baseline(args) -> None:
    cfg = load_config(args.config)
    harness.EvalReport(harness.baseline_columns(read_dataset(args.data), cfg.budget())).to_csv(args.out)


def _cmd_sweep(args) -> None:
    cfg = load_config(args.config)
    values = [harness.parse_sweep_value(args.param, v) for v in args.values.split(",") if v.strip()]
    harness.sweep(args.param, values, cfg, out=args.out, ckpt_dir=args.ckpt_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdbeam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a calibrated channel dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train codebooks and synthesizer")
    p.add_argument("--config", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--stream", action="store_true")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="optional CSV of the per-batch loss")
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="score MRT+MRC and capacity on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("sweep", help="train and evaluate one model per parameter value")
    p.add_argument("--param", choices=sorted(harness.SWEEP_PARAMS), required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt-dir", help="reuse/store one checkpoint per cell here")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, DatasetError, CheckpointError, TrainingDivergedError, ValueError) as exc:
        print(f"fdbeam: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
