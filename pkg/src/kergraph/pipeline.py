"""Experiment orchestration: kernel bank -> ADMM solve -> spectral clustering -> metrics."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernel_bank as kb
from .errors import IoError, KergraphError, StageError
from .io import load_dataset, standardize
from .metrics import accuracy, extended_metrics, nmi
from .solver import SolverConfig, solve, write_trace_csv
from .spectral import cluster_graph

logger = logging.getLogger(__name__)

DEFAULT_GRID_VALUES = (1e-5, 1e-3, 1e-1, 10.0, 1e3, 1e5)
DEFAULT_ALPHAS = (1e-5, 1e-2)
GRID_COLUMNS = ("alpha", "beta", "gamma", "acc", "nmi", "iterations", "converged", "error")


@dataclass
class ExperimentConfig:
    data: str | None = None
    format: str = "dense"
    label_col: str | int | None = None
    header: bool = False
    labels_path: str | None = None
    kernels: str | list = "standard"
    kernel_cache: str | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    k: int | None = None
    restarts: int = 20
    seed: int = 0
    out: str | None = None
    scale: bool = False

    def __post_init__(self):
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**self.solver)
        if self.k is not None and self.k < 2:
            raise ValueError(f"cluster count k must be >= 2, got {self.k}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def kernel_specs(self):
        if self.kernels == "standard":
            return kb.standard_specs()
        return [s if isinstance(s, kb.KernelSpec) else kb.KernelSpec.from_dict(s) for s in self.kernels]

    def validate_paths(self):
        for name in ("data", "labels_path"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise IoError(f"{name} path {p} does not exist")

    def to_dict(self):
        d = asdict(self)
        if self.kernels != "standard":
            d["kernels"] = [s.to_dict() for s in self.kernel_specs()]
        return d


@dataclass
class GridSpec:
    alpha: list = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    beta: list = field(default_factory=lambda: list(DEFAULT_GRID_VALUES))
    gamma: list = field(default_factory=lambda: list(DEFAULT_GRID_VALUES))

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            values = [float(v) for v in getattr(self, name)]
            if not values or any(not v > 0 for v in values):
                raise ValueError(f"grid {name} values must be a nonempty list of positive numbers")
            setattr(self, name, values)

    def tuples(self):
        return [(a, b, g) for a in self.alpha for b in self.beta for g in self.gamma]


@dataclass
class ClusteringReport:
    labels: np.ndarray
    metrics: dict | None
    g: np.ndarray
    specs: list
    mode: str
    n: int
    k: int
    iterations: int
    converged: bool
    trace: list
    Z: np.ndarray
    config: dict
    provenance: list = field(default_factory=list)
    near_degenerate: bool = False

    @property
    def r(self):
        return len(self.specs)

    def to_dict(self):
        last = self.trace[-1] if self.trace else None
        return {
            "mode": self.mode,
            "n": self.n,
            "k": self.k,
            "r": self.r,
            "kernels": [str(s) for s in self.specs],
            "g": [float(x) for x in self.g],
            "iterations": self.iterations,
            "converged": self.converged,
            "trace_summary": None if last is None else {
                "res_JZ": last.res_JZ, "res_WK": last.res_WK, "lagrangian": last.lagrangian,
            },
            "labels": [int(x) for x in self.labels],
            "metrics": self.metrics,
            "near_degenerate_spectrum": self.near_degenerate,
            "kernel_clipping": list(self.provenance),
            "config": self.config,
        }


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (KergraphError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _load(config, X, labels):
    if X is None:
        config.validate_paths()
        X, file_labels = _stage("load", load_dataset, config.data, config.format,
                                config.label_col, config.header, config.labels_path)
        labels = file_labels if labels is None else labels
    X = np.asarray(X, dtype=float)
    if config.scale:
        X = standardize(X)
    return X, labels


def _bank(config, X):
    specs = config.kernel_specs()
    if config.solver.mode == "fixed_kernel":
        if config.kernels == "standard":
            raise StageError("kernels", ValueError("fixed_kernel mode needs an explicit single kernel"))
        if len(specs) != 1:
            raise StageError("kernels", ValueError(f"fixed_kernel mode needs one kernel, got {len(specs)}"))
    cache = config.kernel_cache
    if cache is not None and Path(cache).exists():
        bank = _stage("kernels", kb.load_bank, cache, X)
        if bank.specs != specs:
            raise StageError("kernels", IoError(f"{cache} holds kernels {bank.specs}, expected {specs}"))
        return bank
    bank = _stage("kernels", kb.build_bank, X, specs)
    if cache is not None:
        kb.save_bank(cache, bank, X)
    return bank


def _infer_k(config, labels):
    if config.k is not None:
        return config.k
    if labels is None:
        raise StageError("config", ValueError("cluster count k is required for unlabeled data"))
    return int(np.unique(labels).size)


def run_experiment(config, X=None, labels=None, bank=None):
    """Full pipeline for one configuration.

    ``X`` (``m x n``) and ``labels`` may be passed directly instead of being
    read from ``config.data``. A prebuilt ``bank`` skips kernel construction.
    Metrics are only computed when labels are available. When ``config.out``
    is set the report is written there.
    """
    X, labels = _load(config, X, labels)
    if bank is None:
        bank = _bank(config, X)
    k = _infer_k(config, labels)
    out = _stage("solve", solve, bank, config.solver)
    pred, emb = _stage("cluster", cluster_graph, out.Z, k, restarts=config.restarts,
                       seed=config.seed, return_embedding=True)
    metrics = None
    if labels is not None:
        metrics = _stage("evaluate", extended_metrics, labels, pred).to_dict()
    report = ClusteringReport(
        labels=pred, metrics=metrics, g=out.g, specs=bank.specs, mode=config.solver.mode,
        n=bank.n, k=k, iterations=out.iterations, converged=out.converged, trace=out.trace,
        Z=out.Z, config=config.to_dict(), provenance=list(bank.provenance),
        near_degenerate=emb.near_degenerate,
    )
    if config.out is not None:
        write_report(report, config.out)
    return report


_dir_locks = {}
_dir_locks_guard = threading.Lock()


def _dir_lock(path):
    key = str(Path(path).resolve())
    with _dir_locks_guard:
        return _dir_locks.setdefault(key, threading.Lock())


def write_report(report, directory, meta=None):
    """Write ``report.json``, ``labels.csv``, ``trace.csv``, ``Z.bin`` and ``meta.json``.

    ``report.json`` is deterministic for a given configuration; wall-clock
    information goes to ``meta.json``.
    """
    directory = Path(directory)
    paths = {}
    with _dir_lock(directory):
        try:
            directory.mkdir(parents=True, exist_ok=True)
            paths["report"] = directory / "report.json"
            paths["report"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
            paths["labels"] = directory / "labels.csv"
            paths["labels"].write_text("".join(f"{int(x)}\n" for x in report.labels))
            if report.trace:
                paths["trace"] = directory / "trace.csv"
                with open(paths["trace"], "w", newline="") as fh:
                    write_trace_csv(fh, report.trace)
            paths["graph"] = kb.write_matrices(directory / "Z.bin", [report.Z], [{"kind": "graph"}])
            paths["meta"] = directory / "meta.json"
            info = {"written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
            info.update(meta or {})
            paths["meta"].write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise IoError(f"cannot write report to {directory}: {exc}") from exc
    return paths


def read_graph(path):
    _, mats = kb.read_matrices(path)
    return mats[0]


def pool_size(default=None):
    env = os.environ.get("KERGRAPH_THREADS")
    cap = int(env) if env else (default or os.cpu_count() or 1)
    return max(1, cap)


def _grid_row(bank, labels, config, k, params):
    a, b, g = params
    row = {"alpha": a, "beta": b, "gamma": g}
    try:
        solver_cfg = config.solver.replace(alpha=a, beta=b, gamma=g)
        out = solve(bank, solver_cfg)
        pred = cluster_graph(out.Z, k, restarts=config.restarts, seed=config.seed)
        row.update(acc=accuracy(labels, pred), nmi=nmi(labels, pred),
                   iterations=out.iterations, converged=out.converged, error="")
    except (KergraphError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.warning("grid point alpha=%g beta=%g gamma=%g failed: %s", a, b, g, exc)
        row.update(acc=math.nan, nmi=math.nan, iterations=0, converged=False,
                   error=f"{type(exc).__name__}: {exc}")
    return row


def grid_search(config, grid=None, X=None, labels=None, bank=None, workers=None, order=None):
    """Evaluate every ``(alpha, beta, gamma)`` tuple of ``grid``.

    Rows come back in grid order no matter how execution is scheduled;
    ``order`` (a permutation of tuple indices) changes only the schedule.
    A failed tuple yields a row with NaN scores and the error message.
    """
    grid = grid or GridSpec()
    X, labels = _load(config, X, labels)
    if labels is None:
        raise StageError("grid", ValueError("grid search needs ground-truth labels"))
    if bank is None:
        bank = _bank(config, X)
    k = _infer_k(config, labels)
    tuples = grid.tuples()
    order = list(range(len(tuples))) if order is None else list(order)
    if sorted(order) != list(range(len(tuples))):
        raise ValueError("order must be a permutation of the grid indices")
    rows = [None] * len(tuples)
    workers = pool_size(workers)
    if workers == 1:
        for i in order:
            rows[i] = _grid_row(bank, labels, config, k, tuples[i])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(_grid_row, bank, labels, config, k, tuples[i]) for i in order}
            for i, fut in futures.items():
                rows[i] = fut.result()
    if config.out is not None:
        write_grid(rows, Path(config.out) / "grid.csv")
    return rows


def write_grid(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: repr(v) if isinstance(v, float) else v for key, v in row.items()})
    return path


def read_grid(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
