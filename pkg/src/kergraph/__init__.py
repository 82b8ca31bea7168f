"""Joint low-rank consensus kernel and self-expressive graph learning for clustering."""

from .kernel_bank import KernelBank, KernelMatrix, KernelSpec, build_kernel, build_standard_bank, normalize_kernel
from .metrics import accuracy, extended_metrics, nmi
from .pipeline import ExperimentConfig, GridSpec, grid_search, run_experiment
from .solver import SolverConfig, solve
from .spectral import cluster_graph

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "GridSpec",
    "KernelBank",
    "KernelMatrix",
    "KernelSpec",
    "SolverConfig",
    "accuracy",
    "build_kernel",
    "build_standard_bank",
    "cluster_graph",
    "extended_metrics",
    "grid_search",
    "nmi",
    "normalize_kernel",
    "run_experiment",
    "solve",
]
