"""Proximal and projection operators used by the ADMM iterations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SvdFailure


@dataclass
class ThresholdedSVD:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    threshold: float

    @property
    def shrunk(self):
        return np.maximum(self.sigma - self.threshold, 0.0)

    def reconstruct(self):
        return (self.U * self.shrunk) @ self.V.T


def soft_threshold(D, tau):
    """Elementwise shrinkage ``sign(D) * max(|D| - tau, 0)``.

    This is the prox of ``tau * ||.||_1``.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    D = np.asarray(D, dtype=float)
    return np.sign(D) * np.maximum(np.abs(D) - tau, 0.0)


def thresholded_svd(G, tau):
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    G = np.asarray(G, dtype=float)
    if not np.all(np.isfinite(G)):
        raise SvdFailure("input to SVD contains NaN or Inf")
    try:
        U, s, Vt = np.linalg.svd(G, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc
    return ThresholdedSVD(U, s, Vt.T, float(tau))


def svt(G, tau):
    """Singular value thresholding, the prox of ``tau * ||.||_*``.

    Computes a full SVD ``G = U diag(s) V^T`` and returns
    ``U diag(max(s - tau, 0)) V^T``.
    """
    return thresholded_svd(G, tau).reconstruct()


def project_nonneg(M):
    return np.maximum(M, 0.0)


def project_simplex(v):
    """Euclidean projection of ``v`` onto ``{x : x >= 0, sum(x) = 1}``.

    Sort-based algorithm; exact up to rounding.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    x = np.maximum(v - theta, 0.0)
    # rounding can leave the sum a few ulps off; fold the excess into the largest entry
    x[np.argmax(x)] += 1.0 - x.sum()
    return x
