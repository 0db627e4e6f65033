"""Command-line front end.

Exit codes: 0 success, 2 configuration/argument error, 3 non-finite
numerics, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import Harness, bench_latency
from .channels import ClusterConfig, Dataset, DatasetError, make_dataset
from .checkpoint import Checkpoint, CheckpointError
from .config import ConfigError, ExperimentConfig, profile
from .flow import train

logger = logging.getLogger("avfce")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _emit_report(report, out: str | None) -> None:
    if out:
        Path(f"{out}.csv").write_text(report.to_csv())
        Path(f"{out}.json").write_text(report.to_json())
        logger.info("wrote %s.csv and %s.json", out, out)
    else:
        sys.stdout.write(report.to_csv())


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else profile(args.profile)
    overrides = {}
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.replace(train=overrides) if overrides else cfg


def cmd_gen_data(args) -> int:
    if args.kind == "clustered":
        cluster = ClusterConfig(args.n_paths, args.spread, args.n_rx, args.n_tx, args.on_grid)
        ds = make_dataset("clustered", args.count, args.seed, cluster=cluster)
    else:
        ds = make_dataset("gaussian", args.count, args.seed, args.n_rx, args.n_tx)
    ds.save(args.out)
    print(json.dumps({"path": args.out, "count": len(ds), "power_ratio": ds.power_ratio()}))
    return 0


def _training_channels(cfg: ExperimentConfig, data_path: str | None) -> np.ndarray:
    path = data_path or cfg.data.path
    if path:
        ds = Dataset.load(path)
        if (ds.n_rx, ds.n_tx) != (cfg.data.n_rx, cfg.data.n_tx):
            raise ConfigError(
                f"dataset is {ds.n_rx}x{ds.n_tx} but config expects {cfg.data.n_rx}x{cfg.data.n_tx}"
            )
        return ds.samples
    d = cfg.data
    if d.kind == "clustered":
        return make_dataset("clustered", d.count, d.seed, cluster=d.cluster()).samples
    return make_dataset("gaussian", d.count, d.seed, d.n_rx, d.n_tx).samples


def cmd_train(args) -> int:
    cfg = _load_config(args)
    samples = _training_channels(cfg, args.data)
    logger.info("training %d-parameter net on %d channels (%dx%d, %s domain)",
                cfg.backbone.n_params, len(samples), samples.shape[1], samples.shape[2], cfg.train.domain)
    state = train(samples, cfg.backbone, cfg.flow, cfg.train)
    if state.losses:
        logger.info("loss: first %.6g, last %.6g", state.losses[0], state.losses[-1])
    Checkpoint.from_state(cfg, state).save(args.out)
    logger.info("wrote %s", args.out)
    return 0


def _harness(args) -> Harness:
    models = {}
    for spec in args.model or []:
        label, sep, path = spec.partition("=")
        if not sep:
            label, path = "avf", spec
        models[label] = Checkpoint.load(path)
    ds = Dataset.load(args.data)
    for label, ck in models.items():
        if (ck.config.data.n_rx, ck.config.data.n_tx) != (ds.n_rx, ds.n_tx):
            raise ConfigError(f"model {label!r} was trained on {ck.config.data.n_rx}x{ck.config.data.n_tx}, "
                              f"dataset is {ds.n_rx}x{ds.n_tx}")
    lmmse_train = Dataset.load(args.lmmse_train).samples if args.lmmse_train else None
    return Harness(ds.samples, models, lmmse_train, seed=args.seed, min_samples=args.min_samples)


def cmd_eval(args) -> int:
    h = _harness(args)
    methods = args.methods.split(",") if args.methods else None
    report = h.evaluate(_floats(args.snr), _ints(args.nfe), methods)
    _emit_report(report, args.out)
    return 0


def cmd_sweep_nfe(args) -> int:
    h = _harness(args)
    methods = args.methods.split(",") if args.methods else None
    report = h.sweep_nfe(_floats(args.snr), _ints(args.nfe), methods, tol_db=args.tolerance)
    _emit_report(report, args.out)
    for check in report.checks:
        if not check["passed"]:
            logger.warning("trend check failed: %s", json.dumps(check))
    return 0


def cmd_bench_latency(args) -> int:
    ck = Checkpoint.load(args.checkpoint)
    report = bench_latency(ck.net(), ck.config.data.n_rx, ck.config.data.n_tx, _ints(args.nfe),
                           args.repetitions, end_to_end=args.end_to_end, domain=ck.domain)
    _emit_report(report, args.out)
    return 0


def cmd_inspect(args) -> int:
    print(json.dumps(Checkpoint.load(args.checkpoint).summary(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avfce", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a CHDS channel dataset")
    p.add_argument("--kind", choices=("gaussian", "clustered"), default="clustered")
    p.add_argument("--n-rx", type=int, default=16)
    p.add_argument("--n-tx", type=int, default=64)
    p.add_argument("--n-paths", type=int, default=3)
    p.add_argument("--spread", type=float, default=4.0, help="angle spread in degrees")
    p.add_argument("--on-grid", action="store_true")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an AVF model and write an AVFC checkpoint")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON config with backbone/flow/train/data sections")
    src.add_argument("--profile", default="reduced", help="named profile: reduced, desk, full")
    p.add_argument("--data", help="CHDS training set (overrides data section)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for name, func, default_nfe, help_text in (
        ("eval", cmd_eval, "1", "NMSE per method, SNR and NFE"),
        ("sweep-nfe", cmd_sweep_nfe, "1,2,4,8,20", "NMSE gain of multi-NFE over 1-NFE"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", action="append", metavar="LABEL=PATH",
                       help="checkpoint to evaluate (repeatable); bare PATH is labelled 'avf'")
        p.add_argument("--data", required=True, help="CHDS evaluation set")
        p.add_argument("--lmmse-train", help="CHDS set for the LMMSE sample covariance")
        p.add_argument("--snr", default="-10,0,10,20,30")
        p.add_argument("--nfe", default=default_nfe)
        p.add_argument("--methods", help="comma list; default: all")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--min-samples", type=int, default=1)
        p.add_argument("--out", help="output prefix for .csv and .json (default: CSV to stdout)")
        if name == "sweep-nfe":
            p.add_argument("--tolerance", type=float, default=0.2)
        p.set_defaults(func=func)

    p = sub.add_parser("bench-latency", help="single-thread inference latency per NFE")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--nfe", default="1,2,4,8,13")
    p.add_argument("--repetitions", type=int, default=200)
    p.add_argument("--end-to-end", action="store_true", help="include decorrelation and FFTs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_latency)

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint metadata")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CheckpointError, DatasetError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except FloatingPointError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
