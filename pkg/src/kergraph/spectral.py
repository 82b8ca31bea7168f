"""Spectral clustering of a learned graph: affinity, normalized Laplacian embedding, k-means."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .errors import DimensionMismatch, EigenFailure, NegativeInput

logger = logging.getLogger(__name__)


@dataclass
class AffinityGraph:
    A: np.ndarray
    degree: np.ndarray

    @property
    def n(self):
        return self.A.shape[0]


@dataclass
class SpectralEmbedding:
    coords: np.ndarray
    eigenvalues: np.ndarray
    zero_rows: np.ndarray
    near_degenerate: bool = False


def symmetrize_affinity(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise DimensionMismatch(f"graph must be square, got shape {Z.shape}")
    if Z.min(initial=0.0) < -1e-12:
        raise NegativeInput(f"graph has negative entry {Z.min():.3g}")
    Z = np.maximum(Z, 0.0)
    A = 0.5 * (Z + Z.T)
    return AffinityGraph(A, A.sum(axis=1))


def normalized_laplacian(graph):
    """``I - D^{-1/2} A D^{-1/2}``; isolated vertices get a zero scaling."""
    d = graph.degree
    with np.errstate(divide="ignore"):
        dinv = np.where(d > 0, 1.0 / np.sqrt(d), 0.0)
    L = np.eye(graph.n) - dinv[:, None] * graph.A * dinv[None, :]
    return 0.5 * (L + L.T)


def spectral_embed(graph, k, gap_tol=1e-10):
    """Row-normalized eigenvectors of the ``k`` smallest Laplacian eigenvalues.

    Eigenvector signs are fixed so that the largest-magnitude entry is
    positive, which makes the embedding independent of solver sign choices.
    ``near_degenerate`` is set when eigenvalues ``k`` and ``k+1`` coincide to
    within ``gap_tol``.
    """
    n = graph.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    L = normalized_laplacian(graph)
    upper = min(k, n - 1)
    try:
        w, V = linalg.eigh(L, subset_by_index=[0, upper])
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    near_degenerate = bool(upper == k and w[k] - w[k - 1] <= gap_tol)
    if near_degenerate:
        logger.info("eigenvalues %d and %d are nearly tied (%.3g, %.3g)", k, k + 1, w[k - 1], w[k])
    w, V = w[:k], V[:, :k]
    pivot = np.argmax(np.abs(V), axis=0)
    V = V * np.where(V[pivot, np.arange(k)] < 0, -1.0, 1.0)
    norms = np.linalg.norm(V, axis=1)
    zero_rows = norms <= 1e-15
    coords = np.where(zero_rows[:, None], 0.0, V / np.where(zero_rows, 1.0, norms)[:, None])
    return SpectralEmbedding(coords, w, zero_rows, near_degenerate)


def kmeans(points, k, restarts=20, seed=0, return_inertia=False):
    """k-means++ seeded Lloyd iterations; keeps the restart with lowest WCSS."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if not 1 <= k <= points.shape[0]:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={points.shape[0]}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    with warnings.catch_warnings():
        # duplicate points with large k trigger a harmless warning
        warnings.simplefilter("ignore", ConvergenceWarning)
        km = KMeans(n_clusters=k, init="k-means++", n_init=restarts, random_state=seed).fit(points)
    labels = km.labels_.astype(int)
    if return_inertia:
        return labels, float(km.inertia_)
    return labels


def cluster_graph(Z, k, restarts=20, seed=0, return_embedding=False):
    graph = symmetrize_affinity(Z)
    emb = spectral_embed(graph, k)
    labels = kmeans(emb.coords, k, restarts=restarts, seed=seed)
    if return_embedding:
        return labels, emb
    return labels
