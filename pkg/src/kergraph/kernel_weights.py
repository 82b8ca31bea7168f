"""Kernel weight update: a small QP over the probability simplex.

The weights minimize ``gamma * g^T M g - a^T g`` subject to ``g >= 0`` and
``sum(g) = 1``, where ``M_ij = Tr(H^i H^j)`` and ``a_i = 2 gamma Tr(K H^i)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch
from .prox import project_simplex

logger = logging.getLogger(__name__)


@dataclass
class WeightQP:
    M: np.ndarray
    a: np.ndarray
    gamma: float

    @property
    def r(self):
        return self.a.size

    def objective(self, g):
        g = np.asarray(g, dtype=float)
        return float(self.gamma * g @ self.M @ g - self.a @ g)

    def gradient(self, g):
        return 2.0 * self.gamma * (self.M @ g) - self.a


@dataclass
class QPResult:
    g: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list


def gram_matrix(bank):
    H = bank.stack().reshape(bank.r, -1)
    # Tr(H^i H^j) = <H^i, H^j>_F for symmetric kernels
    M = H @ H.T
    return 0.5 * (M + M.T)


def build_qp_coefficients(bank, K, gamma, literal=False, M=None):
    """Coefficients of the weight QP at the current consensus kernel ``K``.

    With ``literal=True`` the linear term uses ``gamma / 2`` in place of
    ``2 * gamma``. ``M`` may be passed in to skip recomputing the Gram matrix,
    which does not change across iterations.
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (bank.n, bank.n):
        raise DimensionMismatch(f"K has shape {K.shape}, bank kernels are {(bank.n, bank.n)}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if M is None:
        M = gram_matrix(bank)
    traces = bank.stack().reshape(bank.r, -1) @ K.T.ravel()
    coef = gamma / 2.0 if literal else 2.0 * gamma
    return WeightQP(M=M, a=coef * traces, gamma=float(gamma))


def kkt_violation(qp, g, tol=1e-12):
    """Largest violation of the simplex KKT conditions at ``g``, and the multiplier."""
    grad = qp.gradient(g)
    active = g > tol
    lam = float(grad[active].mean()) if active.any() else float(grad.min())
    viol = float(np.abs(grad[active] - lam).max(initial=0.0))
    viol = max(viol, float(np.max(lam - grad[~active], initial=0.0)))
    return viol, lam


def _face_step(P, q, free):
    """Minimizing step on the face spanned by ``free`` with ``sum(step) = 0``.

    Returns ``(step, unbounded)``; ``unbounded`` marks a zero-curvature
    descent direction, which the caller follows to the nearest bound.
    """
    f = free.size
    step = np.zeros(q.size)
    if f < 2:
        return step, False
    # orthonormal basis of {p : sum(p) = 0} restricted to the free coordinates
    N = linalg.null_space(np.ones((1, f)))
    H = N.T @ P[np.ix_(free, free)] @ N
    c = N.T @ q[free]
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    cutoff = 1e-12 * max(1.0, float(np.abs(w).max()))
    flat = w <= cutoff
    coords = V.T @ c
    if flat.any() and np.abs(coords[flat]).max() > 1e-14 * max(1.0, np.abs(c).max()):
        d = -V[:, flat] @ coords[flat]
        step[free] = N @ d
        return step, True
    d = -V[:, ~flat] @ (coords[~flat] / w[~flat])
    step[free] = N @ d
    return step, False


def _active_set(qp, g, max_iter):
    """Primal active-set method started from a feasible ``g``."""
    P = 2.0 * qp.gamma * qp.M
    r = qp.r
    fixed = g <= 0.0
    g = np.where(fixed, 0.0, g)
    scale = max(1.0, float(np.abs(qp.a).max()), float(np.abs(P).max()))
    f = qp.objective(g)
    for it in range(1, max_iter + 1):
        q = P @ g - qp.a
        free = np.flatnonzero(~fixed)
        step, unbounded = _face_step(P, q, free)
        stationary = np.abs(step).max(initial=0.0) <= 1e-14
        if not stationary:
            shrinking = (step < 0) & ~fixed
            ratios = np.full(r, np.inf)
            ratios[shrinking] = g[shrinking] / -step[shrinking]
            t = ratios.min() if unbounded else min(ratios.min(), 1.0)
            blocked = t == ratios.min()
            cand = np.maximum(g + t * step, 0.0)
            if blocked:
                block = int(np.argmin(ratios))
                cand[block] = 0.0
                fixed[block] = True
            cand /= cand.sum()
            fc = qp.objective(cand)
            # a free step that does not decrease f is rounding noise on a flat face
            stationary = not blocked and fc >= f
            if fc <= f:
                g, f = cand, fc
        if stationary:
            lam = float(q[free].mean())
            mult = q - lam
            mult[free] = np.inf
            i = int(np.argmin(mult))
            if mult[i] >= -1e-12 * scale:
                return g, it, True
            fixed[i] = False
    return g, max_iter, False


def solve_simplex_qp(qp, g0=None, max_iter=10_000, warm_iter=50):
    """Minimize the weight QP over the simplex.

    A short run of accelerated projected gradient (monotone variant, step
    ``1/L``) locates the support, then a primal active-set method finishes
    exactly. The recorded objective history never increases.
    """
    r = qp.r
    g = np.full(r, 1.0 / r) if g0 is None else project_simplex(g0)
    if r == 1:
        f = qp.objective(np.ones(1))
        return QPResult(np.ones(1), f, 0, True, [f])

    f = qp.objective(g)
    history = [f]
    L = 2.0 * qp.gamma * float(np.linalg.eigvalsh(qp.M)[-1])
    it = 0
    if L > 0:
        y, t = g.copy(), 1.0
        for it in range(1, min(warm_iter, max_iter) + 1):
            z = project_simplex(y - qp.gradient(y) / L)
            fz = qp.objective(z)
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            if fz <= f:
                y = z + ((t - 1.0) / t_next) * (z - g)
                g, f = z, fz
            else:
                y, t_next = g.copy(), 1.0
            t = t_next
            history.append(f)
            if np.abs(project_simplex(g - qp.gradient(g) / L) - g).max() <= 1e-15:
                break

    g_as, n_as, converged = _active_set(qp, g, max(1, max_iter - it))
    f_as = qp.objective(g_as)
    if f_as <= f:
        g, f = project_simplex(g_as), f_as
        history.append(f)
    if not converged:
        logger.warning("simplex QP did not converge in %d iterations", max_iter)
    return QPResult(g, f, it + n_as, converged, history)
