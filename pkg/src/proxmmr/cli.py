"""Command-line front end: gen, truth, bench, report.

Every command is a pure function of its flags, optional config file, and
seed; reruns produce byte-identical outputs apart from wall-clock
columns. Exit codes: 0 success, 1 usage error, 2 runtime failure. The
PROXMMR_SEED environment variable supplies the seed when no flag is
given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, report, scm
from .errors import ConfigError, ProxmmrError

DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# Keys accepted in a bench config file, mirroring the bench flags.
_BENCH_KEYS = {
    "experiment", "methods", "n", "replicates", "seed", "noise_grid",
    "out_dir", "jobs", "lr", "l2", "epochs", "batch", "width", "depth",
    "side", "b_seed",
}


def _env_seed() -> int:
    raw = os.environ.get("PROXMMR_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"PROXMMR_SEED must be an integer, got {raw!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="proxmmr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset CSV")
    gen.add_argument("--scm", choices=["demand", "sprite"], required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True)
    gen.add_argument("--var-z1", type=float, default=1.0)
    gen.add_argument("--var-z2", type=float, default=1.0)
    gen.add_argument("--var-w", type=float, default=1.0)
    gen.add_argument("--side", type=int, default=32)
    gen.add_argument("--b-seed", type=int, default=0)

    truth = sub.add_parser("truth", help="write the ground-truth curve CSV")
    truth.add_argument("--scm", choices=["demand", "sprite"], required=True)
    truth.add_argument("--mc", type=int, default=evaluation.TRUTH_MC)
    truth.add_argument("--seed", type=int, default=evaluation.TRUTH_SEED)
    truth.add_argument("--out", required=True)
    truth.add_argument("--var-w", type=float, default=1.0)
    truth.add_argument("--side", type=int, default=32)
    truth.add_argument("--b-seed", type=int, default=0)

    bench = sub.add_parser("bench", help="run the replicate benchmark")
    bench.add_argument("--config", help="JSON config file; flags override it")
    bench.add_argument("--experiment", choices=["demand", "sprite"])
    bench.add_argument("--methods", help="comma-separated method tags")
    bench.add_argument("--n", type=int)
    bench.add_argument("--replicates", type=int)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--noise-grid", action="store_true", default=None)
    bench.add_argument("--out-dir", default=None)
    bench.add_argument("--jobs", type=int, default=None)
    bench.add_argument("--side", type=int, default=None)
    bench.add_argument("--b-seed", type=int, default=None)
    for name in ("lr", "l2"):
        bench.add_argument(f"--{name}", type=float, default=None)
    for name in ("epochs", "batch", "width", "depth"):
        bench.add_argument(f"--{name}", type=int, default=None)

    rep = sub.add_parser("report", help="summarize a records CSV")
    rep.add_argument("records", help="records CSV from bench")
    rep.add_argument("--out", help="summary CSV path", default=None)
    rep.add_argument("--svg", help="optional boxplot SVG path", default=None)
    return parser


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    if args.scm == "demand":
        config = scm.DemandConfig(
            n=args.n, var_z1=args.var_z1, var_z2=args.var_z2,
            var_w=args.var_w, seed=seed,
        )
        dataset = scm.demand_sample(config)
        metadata = {
            "scm": "demand", "n": args.n, "seed": seed,
            "var_z1": args.var_z1, "var_z2": args.var_z2, "var_w": args.var_w,
        }
    else:
        config = scm.SpriteConfig(
            n=args.n, side=args.side, b_seed=args.b_seed, seed=seed
        )
        dataset = scm.sprite_sample(config)
        metadata = {
            "scm": "sprite", "n": args.n, "seed": seed,
            "side": args.side, "b_seed": args.b_seed,
        }
    scm.write_dataset_csv(dataset, args.scm, args.out, metadata=metadata)
    return 0


def cmd_truth(args) -> int:
    if args.scm == "demand":
        grid = scm.demand_eval_grid()
        ey, se = scm.demand_ground_truth(grid, args.mc, args.seed,
                                         var_w=args.var_w)
        scm.write_truth_csv(args.out, [float(a) for a in grid.ravel()], ey, se)
    else:
        config = scm.SpriteConfig(n=1, side=args.side, b_seed=args.b_seed)
        _, _, truth = scm.sprite_truth_curve(config)
        zeros = np.zeros_like(truth)
        scm.write_truth_csv(args.out, list(range(truth.shape[0])), truth,
                            zeros, label_name="a_index")
    return 0


def _load_bench_config(args) -> dict:
    merged = {
        "experiment": "demand", "methods": "ls", "n": 1000,
        "replicates": 20, "seed": None, "noise_grid": False,
        "out_dir": ".", "jobs": 1, "side": 32, "b_seed": 0,
        "lr": None, "l2": None, "epochs": None, "batch": None,
        "width": None, "depth": None,
    }
    if args.config:
        with open(args.config) as f:
            doc = json.load(f)
        unknown = set(doc) - _BENCH_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(doc)
    for key in _BENCH_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if merged["seed"] is None:
        merged["seed"] = _env_seed()
    return merged


def cmd_bench(args) -> int:
    try:
        cfg = _load_bench_config(args)
    except ConfigError as exc:
        raise UsageError(str(exc))
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    overrides = {
        "lr": cfg["lr"], "l2": cfg["l2"], "epochs": cfg["epochs"],
        "batch_size": cfg["batch"], "width": cfg["width"], "depth": cfg["depth"],
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg["noise_grid"]:
        records = evaluation.run_noise_grid(
            methods, n_train=cfg["n"], replicates=cfg["replicates"],
            base_seed=cfg["seed"], overrides=overrides or None,
            jobs=cfg["jobs"],
        )
    else:
        records = evaluation.run_replicates(
            cfg["experiment"], methods, cfg["n"], cfg["replicates"],
            cfg["seed"], overrides=overrides or None, jobs=cfg["jobs"],
            side=cfg["side"], b_seed=cfg["b_seed"],
        )
    evaluation.write_records_csv(records, out_dir / "records.csv")
    rows = evaluation.summarize(records)
    evaluation.write_summary_csv(rows, out_dir / "summary.csv")
    _print_summary(rows)
    if not any(r.ok for r in records):
        raise ProxmmrError("every replicate failed")
    return 0


def _print_summary(rows) -> None:
    print(f"{'method':10s} {'n':>7s} {'var_z':>6s} {'var_w':>6s} "
          f"{'median':>12s} {'iqr':>12s} {'count':>5s} {'fail':>4s}")
    for r in rows:
        median = f"{r.median:.4f}" if r.median is not None else "-"
        iqr = f"{r.iqr:.4f}" if r.iqr is not None else "-"
        print(f"{r.method:10s} {r.n_train:7d} {r.var_z:6.2f} {r.var_w:6.2f} "
              f"{median:>12s} {iqr:>12s} {r.count:5d} {r.failures:4d}")


def cmd_report(args) -> int:
    records = evaluation.read_records_csv(args.records)
    rows = evaluation.summarize(records)
    out = args.out or str(Path(args.records).with_name("summary.csv"))
    evaluation.write_summary_csv(rows, out)
    _print_summary(rows)
    if args.svg:
        report.render_boxplot(records, args.svg)
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "truth": cmd_truth,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProxmmrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
