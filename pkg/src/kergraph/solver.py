"""ADMM solver for joint consensus-kernel and self-expressive graph learning.

Minimizes over graph ``Z``, consensus kernel ``K`` and kernel weights ``g``::

    1/2 Tr(K - 2KZ + Z^T K Z) + alpha rho(Z) + beta ||K||_*
        + gamma ||K - sum_i g_i H^i||_F^2
    s.t. Z >= 0, K >= 0, g on the simplex

with splitting variables ``J = Z`` and ``W = K`` and scaled duals ``Y1, Y2``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, NonFinite, SingularSystem
from .kernel_weights import build_qp_coefficients, gram_matrix, solve_simplex_qp
from .prox import project_nonneg, soft_threshold, svt

logger = logging.getLogger(__name__)

REGULARIZERS = ("sparse", "lowrank")
MODES = ("multi_kernel", "fixed_kernel")


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 1e-2
    beta: float = 1e-1
    gamma: float = 10.0
    mu: float = 20.0
    regularizer: str = "sparse"
    mode: str = "multi_kernel"
    tol: float = 1e-5
    max_iter: int = 300
    seed: int = 0
    adaptive_mu: bool = False
    mu_rho: float = 1.1
    mu_max: float = 1e6
    literal_weight_coef: bool = False
    dual_tol: float | None = None

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "mu", "tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.dual_tol is not None and not (np.isfinite(self.dual_tol) and self.dual_tol > 0):
            raise ValueError(f"dual_tol must be a positive finite number or None, got {self.dual_tol}")
        if self.adaptive_mu and not (self.mu_rho >= 1 and self.mu_max >= self.mu):
            raise ValueError("adaptive mu needs mu_rho >= 1 and mu_max >= mu")

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


@dataclass
class SolverState:
    Z: np.ndarray
    K: np.ndarray
    J: np.ndarray
    W: np.ndarray
    g: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    mu: float
    iter: int = 0

    def copy(self):
        return SolverState(
            self.Z.copy(), self.K.copy(), self.J.copy(), self.W.copy(),
            self.g.copy(), self.Y1.copy(), self.Y2.copy(), self.mu, self.iter,
        )


@dataclass
class TraceRecord:
    iter: int
    res_JZ: float
    res_WK: float
    lagrangian: float
    g: np.ndarray


@dataclass
class SolverOutput:
    Z: np.ndarray
    K: np.ndarray
    g: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            write_trace_csv(fh, self.trace)
        return path


def write_trace_csv(fh, trace):
    r = trace[0].g.size if trace else 0
    writer = csv.writer(fh)
    writer.writerow(["iter", "res_JZ", "res_WK", "lagrangian"] + [f"g_{i + 1}" for i in range(r)])
    for rec in trace:
        writer.writerow([rec.iter, repr(rec.res_JZ), repr(rec.res_WK), repr(rec.lagrangian)]
                        + [repr(float(x)) for x in rec.g])


def _symmetrize(M):
    return 0.5 * (M + M.T)


def update_Z(K, J, Y1, mu):
    """Solve ``(K + mu I) Z = K + mu J + Y1``.

    ``K`` is symmetrized first. A Cholesky factorization is tried and an
    LU-based symmetric solve is used when ``K + mu I`` is indefinite.
    """
    K = _symmetrize(np.asarray(K, dtype=float))
    n = K.shape[0]
    if J.shape != (n, n) or Y1.shape != (n, n):
        raise DimensionMismatch("K, J and Y1 must all be n x n")
    if not np.all(np.isfinite(K)):
        raise SingularSystem("K contains NaN or Inf")
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(Y1))):
        raise NonFinite("J or Y1 contains NaN or Inf")
    A = K + mu * np.eye(n)
    rhs = K + mu * J + Y1
    try:
        return linalg.cho_solve(linalg.cho_factor(A), rhs)
    except linalg.LinAlgError:
        pass
    try:
        Z = linalg.solve(A, rhs, assume_a="sym")
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"K + mu I is singular: {exc}") from exc
    if not np.all(np.isfinite(Z)):
        raise SingularSystem("Z-update produced non-finite values")
    return Z


def update_K(Z, W, Y2, combined, mu, gamma):
    """Stationary point of the Lagrangian in ``K``; returned unsymmetrized.

    ``combined`` is the current weighted kernel ``sum_i g_i H^i``.
    """
    n = Z.shape[0]
    if not (W.shape == Y2.shape == combined.shape == (n, n)):
        raise DimensionMismatch("Z, W, Y2 and the combined kernel must all be n x n")
    num = 2.0 * gamma * combined + mu * W + Y2 - 0.5 * np.eye(n) + Z.T - 0.5 * (Z @ Z.T)
    return num / (mu + 2.0 * gamma)


def update_J(Z, Y1, mu, alpha, regularizer):
    D = Z - Y1 / mu
    if regularizer == "lowrank":
        return svt(D, alpha / mu)
    if regularizer == "sparse":
        return soft_threshold(D, alpha / mu)
    raise ValueError(f"unknown regularizer {regularizer!r}")


def update_W(K, Y2, mu, beta):
    return svt(K - Y2 / mu, beta / mu)


def update_multipliers(state, mu=None):
    mu = state.mu if mu is None else mu
    return state.Y1 + mu * (state.J - state.Z), state.Y2 + mu * (state.W - state.K)


def _nuclear_norm(M):
    return float(np.linalg.svd(M, compute_uv=False).sum())


def regularizer_value(J, regularizer):
    if regularizer == "lowrank":
        return _nuclear_norm(J)
    return float(np.abs(J).sum())


def lagrangian_value(state, config, bank):
    """Augmented Lagrangian at ``state``.

    In fixed-kernel mode the kernel terms (nuclear norm on ``W`` and the
    neighborhood penalty) are absent.
    """
    Z, K, J, W = state.Z, state.K, state.J, state.W
    mu = state.mu
    val = 0.5 * (np.trace(K) - 2.0 * np.sum(K * Z.T) + np.sum(Z * (K @ Z)))
    val += config.alpha * regularizer_value(J, config.regularizer)
    val += 0.5 * mu * np.sum((J - Z + state.Y1 / mu) ** 2)
    if config.mode == "multi_kernel":
        val += config.beta * _nuclear_norm(W)
        val += config.gamma * np.sum((K - bank.combine(state.g)) ** 2)
        val += 0.5 * mu * np.sum((W - K + state.Y2 / mu) ** 2)
    return float(val)


def objective_value(Z, K, g, config, bank):
    """The unsplit objective at ``(Z, K, g)``."""
    val = 0.5 * (np.trace(K) - 2.0 * np.sum(K * Z.T) + np.sum(Z * (K @ Z)))
    val += config.alpha * regularizer_value(Z, config.regularizer)
    if config.mode == "multi_kernel":
        val += config.beta * _nuclear_norm(K)
        val += config.gamma * np.sum((K - bank.combine(g)) ** 2)
    return float(val)


def initial_state(bank, config):
    """Uniform weights, ``K = W =`` mean kernel, zero duals, uniform random ``J``."""
    n, r = bank.n, bank.r
    rng = np.random.default_rng(config.seed)
    J = project_nonneg(rng.uniform(0.0, 1.0, size=(n, n)))
    if config.mode == "fixed_kernel":
        if r != 1:
            raise DimensionMismatch(f"fixed_kernel mode needs exactly one kernel, bank has {r}")
        g = np.ones(1)
    else:
        g = np.full(r, 1.0 / r)
    K = bank.combine(g)
    return SolverState(
        Z=np.zeros((n, n)), K=K, J=J, W=K.copy(), g=g,
        Y1=np.zeros((n, n)), Y2=np.zeros((n, n)), mu=float(config.mu),
    )


def residuals(state):
    res_jz = float(np.linalg.norm(state.J - state.Z))
    res_wk = float(np.linalg.norm(state.W - state.K))
    return res_jz, res_wk


def relative_residuals(state):
    res_jz, res_wk = residuals(state)
    return (res_jz / max(1.0, float(np.linalg.norm(state.Z))),
            res_wk / max(1.0, float(np.linalg.norm(state.K))))


def dual_residuals(prev, state):
    """``mu ||J - J_prev||_F`` and ``mu ||W - W_prev||_F``, relative like the primal ones."""
    mu = prev.mu
    return (mu * float(np.linalg.norm(state.J - prev.J)) / max(1.0, float(np.linalg.norm(state.Z))),
            mu * float(np.linalg.norm(state.W - prev.W)) / max(1.0, float(np.linalg.norm(state.K))))


def iterate(state, bank, config, clip=True, update_g=True, gram=None):
    """One full pass of block updates followed by the dual ascent step.

    ``clip=False`` skips the nonnegativity projections and ``update_g=False``
    freezes the kernel weights; both exist for testing.
    """
    clip_fn = project_nonneg if clip else (lambda M: M)
    mu = state.mu
    fixed = config.mode == "fixed_kernel"

    Z = clip_fn(update_Z(state.K, state.J, state.Y1, mu))
    if fixed:
        K = state.K
    else:
        K = clip_fn(_symmetrize(update_K(Z, state.W, state.Y2, bank.combine(state.g), mu, config.gamma)))
    J = clip_fn(update_J(Z, state.Y1, mu, config.alpha, config.regularizer))
    if fixed:
        W, g = K, state.g
    else:
        W = clip_fn(update_W(K, state.Y2, mu, config.beta))
        g = state.g
        if update_g:
            qp = build_qp_coefficients(bank, K, config.gamma, literal=config.literal_weight_coef, M=gram)
            g = solve_simplex_qp(qp, g0=state.g).g

    new = SolverState(Z, K, J, W, g, state.Y1, state.Y2, mu, state.iter + 1)
    new.Y1, new.Y2 = update_multipliers(new, mu)
    if fixed:
        new.Y2 = state.Y2
    if config.adaptive_mu:
        new.mu = min(config.mu_rho * mu, config.mu_max)
    for name in ("Z", "K", "J", "W", "Y1", "Y2"):
        if not np.all(np.isfinite(getattr(new, name))):
            raise NonFinite(f"{name} became non-finite at iteration {new.iter}")
    return new


def solve(bank, config, callback=None, state=None):
    """Run the ADMM loop until both relative residuals fall below ``tol``.

    With ``config.dual_tol`` set, the relative dual residuals must also fall
    below it; the primal test alone can fire while the iterates still move.
    ``callback(state)`` is invoked after every iteration.
    """
    if state is None:
        state = initial_state(bank, config)
    gram = gram_matrix(bank) if config.mode == "multi_kernel" else None
    trace = []
    converged = False
    for _ in range(config.max_iter):
        prev, state = state, iterate(state, bank, config, gram=gram)
        res_jz, res_wk = residuals(state)
        trace.append(TraceRecord(state.iter, res_jz, res_wk,
                                 lagrangian_value(state, config, bank), state.g.copy()))
        if callback is not None:
            callback(state)
        rel_jz, rel_wk = relative_residuals(state)
        if max(rel_jz, rel_wk) <= config.tol:
            if config.dual_tol is not None and max(dual_residuals(prev, state)) > config.dual_tol:
                continue
            converged = True
            break
    if not converged:
        logger.info("ADMM stopped at max_iter=%d without meeting tol=%g", config.max_iter, config.tol)
    return SolverOutput(Z=state.Z, K=state.K, g=state.g, trace=trace,
                        converged=converged, iterations=state.iter)
