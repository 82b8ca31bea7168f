"""Kernel-graph clustering from the command line.

    kergraph build-kernels DATA --out bank.bin
    kergraph cluster DATA --label-col label --header --out results/
    kergraph grid DATA --label-col 0 --out sweep/
    kergraph eval TRUTH PRED
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import kernel_bank as kb
from .errors import KergraphError
from .io import load_dataset, load_labels, standardize
from .metrics import extended_metrics
from .pipeline import ExperimentConfig, GridSpec, grid_search, run_experiment
from .solver import SolverConfig

MODE_NAMES = {"multi": "multi_kernel", "fixed": "fixed_kernel"}
SOLVER_KEYS = ("alpha", "beta", "gamma", "mu", "tol", "dual_tol", "max_iter", "seed", "adaptive_mu")


def parse_kernel(text):
    """``gaussian:t=1``, ``linear`` or ``polynomial:a=1,b=2``."""
    kind, _, params = text.partition(":")
    kwargs = {}
    for item in filter(None, params.split(",")):
        key, _, value = item.partition("=")
        kwargs[key.strip()] = float(value)
    if kind == "polynomial" and "b" in kwargs:
        kwargs["b"] = int(kwargs["b"])
    try:
        return kb.KernelSpec(kind.strip(), **kwargs)
    except TypeError as exc:
        raise argparse.ArgumentTypeError(f"bad kernel spec {text!r}: {exc}") from None


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _add_data_args(p):
    p.add_argument("data", help="dataset CSV")
    p.add_argument("--format", choices=("dense", "triplet"), default=None)
    p.add_argument("--header", action="store_true", default=None, help="first line holds column names")
    p.add_argument("--label-col", default=None, help="label column name or index (dense format)")
    p.add_argument("--labels", dest="labels_path", default=None, help="file with one label per line")
    p.add_argument("--scale", action="store_true", default=None, help="standardize features first")
    p.add_argument("--kernel", dest="kernels", action="append", type=parse_kernel, default=None,
                   help="explicit kernel (repeatable); default is the 12-kernel recipe")
    p.add_argument("--kernel-cache", default=None, help="read/write the kernel bank here")


def _add_solver_args(p):
    p.add_argument("--config", default=None, help="JSON file with default values for any flag")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--adaptive-mu", action="store_true", default=None)
    p.add_argument("--reg", choices=("sparse", "lowrank"), default=None)
    p.add_argument("--mode", choices=tuple(MODE_NAMES), default=None)
    p.add_argument("--tol", type=float)
    p.add_argument("--dual-tol", type=float, help="also require dual residuals below this")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--out", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="kergraph", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-kernels", help="build and cache the kernel bank")
    _add_data_args(p)
    p.add_argument("--out", required=True, help="cache file to write")

    p = sub.add_parser("cluster", help="learn the graph and cluster one dataset")
    _add_data_args(p)
    _add_solver_args(p)

    p = sub.add_parser("grid", help="sweep (alpha, beta, gamma) and tabulate Acc/NMI")
    _add_data_args(p)
    _add_solver_args(p)
    p.add_argument("--alphas", type=_floats, default=None)
    p.add_argument("--betas", type=_floats, default=None)
    p.add_argument("--gammas", type=_floats, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("truth")
    p.add_argument("pred")
    return parser


def _merged(args):
    """Flag values layered over the optional ``--config`` JSON file."""
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update({k.replace("-", "_"): v for k, v in json.load(fh).items()})
    for key, value in vars(args).items():
        if value is not None:
            values[key] = value
    return values


def experiment_config(args):
    v = _merged(args)
    solver_kw = {k: v[k] for k in SOLVER_KEYS if k in v}
    if "reg" in v:
        solver_kw["regularizer"] = v["reg"]
    if "mode" in v:
        solver_kw["mode"] = MODE_NAMES.get(v["mode"], v["mode"])
    kernels = v.get("kernels", "standard")
    if kernels != "standard":
        kernels = [parse_kernel(s) if isinstance(s, str) else s for s in kernels]
    return ExperimentConfig(
        data=v["data"], format=v.get("format", "dense"), label_col=v.get("label_col"),
        header=bool(v.get("header", False)), labels_path=v.get("labels_path"),
        kernels=kernels, kernel_cache=v.get("kernel_cache"), solver=SolverConfig(**solver_kw),
        k=v.get("k"), restarts=v.get("restarts", 20), seed=v.get("seed", 0),
        out=v.get("out"), scale=bool(v.get("scale", False)),
    ), v


def cmd_build_kernels(args):
    X, _ = load_dataset(args.data, args.format or "dense", args.label_col, bool(args.header), args.labels_path)
    if args.scale:
        X = standardize(X)
    specs = args.kernels or kb.standard_specs()
    bank = kb.build_bank(X, specs)
    kb.save_bank(args.out, bank, X)
    for msg in bank.provenance:
        print(msg, file=sys.stderr)
    print(json.dumps({"path": args.out, "n": bank.n, "r": bank.r, "kernels": [str(s) for s in specs]}))
    return 0


def cmd_cluster(args):
    config, _ = experiment_config(args)
    report = run_experiment(config)
    summary = {k: report.to_dict()[k] for k in ("mode", "n", "k", "r", "iterations", "converged", "g", "metrics")}
    print(json.dumps(summary, indent=2))
    return 0


def cmd_grid(args):
    config, v = experiment_config(args)
    grid = GridSpec(
        alpha=v.get("alphas") or GridSpec().alpha,
        beta=v.get("betas") or GridSpec().beta,
        gamma=v.get("gammas") or GridSpec().gamma,
    )
    rows = grid_search(config, grid, workers=v.get("workers"))
    best = max((r for r in rows if r["error"] == ""), key=lambda r: r["acc"], default=None)
    print(json.dumps({"rows": len(rows), "failed": sum(r["error"] != "" for r in rows), "best": best}, indent=2))
    return 0


def cmd_eval(args):
    truth = load_labels(args.truth)
    pred = load_labels(args.pred)
    print(extended_metrics(truth, pred).to_json())
    return 0


COMMANDS = {
    "build-kernels": cmd_build_kernels,
    "cluster": cmd_cluster,
    "grid": cmd_grid,
    "eval": cmd_eval,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except KergraphError as exc:
        print(f"kergraph: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
