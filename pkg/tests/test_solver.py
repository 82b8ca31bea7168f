import io

import numpy as np
import pytest

from conftest import random_bank
from oracles import fd_gradient, random_state
from kergraph.errors import DimensionMismatch, NonFinite, SingularSystem
from kergraph.kernel_bank import KernelBank, KernelMatrix, KernelSpec
from kergraph.solver import (
    SolverConfig,
    SolverState,
    initial_state,
    iterate,
    lagrangian_value,
    objective_value,
    residuals,
    solve,
    update_J,
    update_K,
    update_W,
    update_Z,
    update_multipliers,
    write_trace_csv,
)


def single_bank(H):
    return KernelBank([KernelMatrix(np.asarray(H, float), KernelSpec.linear(), normalized=True)])


# --- closed-form blocks ---------------------------------------------------


def test_update_Z_examples():
    n, mu = 4, 3.0
    J = np.arange(16.0).reshape(4, 4)
    Y1 = np.ones((4, 4))
    # K = 0 leaves Z = J + Y1 / mu
    np.testing.assert_allclose(update_Z(np.zeros((n, n)), J, Y1, mu), J + Y1 / mu, atol=1e-14)
    # K = I: (1 + mu) Z = I + mu J + Y1
    np.testing.assert_allclose(update_Z(np.eye(n), J, Y1, mu), (np.eye(n) + mu * J + Y1) / (1 + mu), atol=1e-13)


def test_update_Z_solves_linear_system(rng):
    st = random_state(rng, 7, 2, mu=0.5)
    Z = update_Z(st.K, st.J, st.Y1, st.mu)
    lhs = (st.K + st.mu * np.eye(7)) @ Z
    np.testing.assert_allclose(lhs, st.K + st.mu * st.J + st.Y1, atol=1e-11)


def test_update_Z_indefinite_fallback_and_errors(rng):
    K = np.diag([-3.0, 1.0, 2.0])
    J, Y1 = rng.uniform(size=(3, 3)), np.zeros((3, 3))
    Z = update_Z(K, J, Y1, 1.0)
    np.testing.assert_allclose((K + np.eye(3)) @ Z, K + J, atol=1e-12)
    with pytest.raises(SingularSystem):
        update_Z(np.diag([-1.0, 1.0, 1.0]), J, Y1, 1.0)
    with pytest.raises(SingularSystem):
        update_Z(np.full((3, 3), np.nan), J, Y1, 1.0)
    with pytest.raises(DimensionMismatch):
        update_Z(np.eye(3), np.eye(2), Y1, 1.0)


def test_update_K_example():
    n = 3
    Z = np.zeros((n, n))
    W = np.eye(n)
    C = np.full((n, n), 0.5)
    K = update_K(Z, W, np.zeros((n, n)), C, mu=2.0, gamma=1.0)
    np.testing.assert_allclose(K, (2 * C + 2 * W - 0.5 * np.eye(n)) / 4.0, atol=1e-15)
    with pytest.raises(DimensionMismatch):
        update_K(Z, np.eye(2), np.zeros((n, n)), C, 1.0, 1.0)


@pytest.mark.parametrize("reg", ["sparse", "lowrank"])
def test_Z_and_K_updates_zero_the_block_gradient(rng, reg):
    bank = random_bank(rng, 5, 3)
    config = SolverConfig(regularizer=reg, alpha=0.3, beta=0.2, gamma=1.5)
    st = random_state(rng, 5, 3, mu=1.7)
    st.Z = update_Z(st.K, st.J, st.Y1, st.mu)
    assert np.abs(fd_gradient(st, "Z", config, bank)).max() <= 1e-5
    st.K = update_K(st.Z, st.W, st.Y2, bank.combine(st.g), st.mu, config.gamma)
    assert np.abs(fd_gradient(st, "K", config, bank)).max() <= 1e-5


def test_update_J_and_W_examples():
    D = np.array([[3.0, -0.5], [0.2, -2.0]])
    J = update_J(D, np.zeros((2, 2)), mu=2.0, alpha=2.0, regularizer="sparse")
    np.testing.assert_allclose(J, [[2.0, 0.0], [0.0, -1.0]])
    J = update_J(np.diag([3.0, 0.5]), np.zeros((2, 2)), mu=1.0, alpha=1.0, regularizer="lowrank")
    np.testing.assert_allclose(J, np.diag([2.0, 0.0]), atol=1e-14)
    W = update_W(np.diag([4.0, 1.0]), np.diag([2.0, 0.0]), mu=2.0, beta=1.0)
    np.testing.assert_allclose(W, np.diag([2.5, 0.5]), atol=1e-14)
    with pytest.raises(ValueError):
        update_J(D, D, 1.0, 1.0, "elastic")


def test_prox_blocks_minimize_lagrangian(rng):
    bank = random_bank(rng, 4, 2)
    for reg in ("sparse", "lowrank"):
        config = SolverConfig(regularizer=reg, alpha=0.4, beta=0.3)
        st = random_state(rng, 4, 2, mu=1.3)
        st.J = update_J(st.Z, st.Y1, st.mu, config.alpha, reg)
        st.W = update_W(st.K, st.Y2, st.mu, config.beta)
        base = lagrangian_value(st, config, bank)
        for name in ("J", "W"):
            for _ in range(300):
                probe = st.copy()
                P = rng.normal(size=(4, 4))
                setattr(probe, name, getattr(st, name) + 0.05 * P / np.linalg.norm(P))
                assert lagrangian_value(probe, config, bank) >= base - 1e-9


def test_block_updates_decrease_lagrangian(rng):
    bank = random_bank(rng, 6, 3)
    config = SolverConfig(alpha=0.1, beta=0.1, gamma=2.0)
    st = random_state(rng, 6, 3, mu=1.0)
    values = [lagrangian_value(st, config, bank)]
    st.Z = update_Z(st.K, st.J, st.Y1, st.mu)
    values.append(lagrangian_value(st, config, bank))
    st.K = update_K(st.Z, st.W, st.Y2, bank.combine(st.g), st.mu, config.gamma)
    values.append(lagrangian_value(st, config, bank))
    st.J = update_J(st.Z, st.Y1, st.mu, config.alpha, config.regularizer)
    values.append(lagrangian_value(st, config, bank))
    st.W = update_W(st.K, st.Y2, st.mu, config.beta)
    values.append(lagrangian_value(st, config, bank))
    assert all(b <= a + 1e-10 for a, b in zip(values, values[1:]))


def test_multiplier_step():
    st = SolverState(Z=np.eye(2), K=np.zeros((2, 2)), J=np.ones((2, 2)), W=np.eye(2), g=np.ones(1),
                     Y1=np.zeros((2, 2)), Y2=np.ones((2, 2)), mu=3.0)
    Y1, Y2 = update_multipliers(st)
    np.testing.assert_allclose(Y1, 3.0 * (np.ones((2, 2)) - np.eye(2)))
    np.testing.assert_allclose(Y2, np.ones((2, 2)) + 3.0 * np.eye(2))


def test_lagrangian_reduces_to_objective(rng):
    bank = random_bank(rng, 5, 2)
    config = SolverConfig(alpha=0.2, beta=0.3, gamma=0.7, regularizer="lowrank")
    st = random_state(rng, 5, 2)
    st.J, st.W = st.Z.copy(), st.K.copy()
    st.Y1[:] = 0
    st.Y2[:] = 0
    assert lagrangian_value(st, config, bank) == pytest.approx(
        objective_value(st.Z, st.K, st.g, config, bank), rel=1e-12)
    zero = SolverState(*(np.zeros((5, 5)),) * 4, g=st.g, Y1=np.zeros((5, 5)), Y2=np.zeros((5, 5)), mu=1.0)
    expected = config.gamma * np.sum(bank.combine(st.g) ** 2)
    assert lagrangian_value(zero, config, bank) == pytest.approx(expected, rel=1e-12)


# --- loop -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(alpha=0.0)
    with pytest.raises(ValueError):
        SolverConfig(regularizer="l2")
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(mode="fixed")


def test_initial_state(bank90):
    st = initial_state(bank90, SolverConfig(seed=3))
    np.testing.assert_allclose(st.g, np.full(12, 1 / 12))
    np.testing.assert_allclose(st.K, np.mean([k.values for k in bank90.kernels], axis=0), atol=1e-14)
    assert np.array_equal(st.K, st.W) and not np.any(st.Y1) and not np.any(st.Y2)
    assert st.J.min() >= 0 and st.J.max() <= 1
    with pytest.raises(DimensionMismatch):
        initial_state(bank90, SolverConfig(mode="fixed_kernel"))


def test_invariants_hold_after_every_iteration(bank90):
    seen = []

    def check(st):
        for name in ("Z", "K", "J", "W"):
            assert getattr(st, name).min() >= 0, name
        assert st.g.min() >= 0 and abs(st.g.sum() - 1) <= 1e-12
        seen.append(st.iter)

    out = solve(bank90, SolverConfig(max_iter=15), callback=check)
    assert seen == list(range(1, 16)) and out.iterations == 15


def test_fixed_kernel_mode_recovers_blocks():
    n = 20
    H = np.zeros((n, n))
    H[:10, :10] = 1.0
    H[10:, 10:] = 1.0
    H += 1e-3 * np.eye(n)
    H /= H.max()
    bank = single_bank(H)
    # the primal-only test fires after two steps here, so the dual check is on
    out = solve(bank, SolverConfig(mode="fixed_kernel", alpha=1e-2, mu=5.0, max_iter=300, dual_tol=1e-5))
    assert out.iterations > 2
    np.testing.assert_array_equal(out.K, bank.combine(np.ones(1)))
    np.testing.assert_array_equal(out.g, [1.0])
    Z = out.Z
    inside = Z[:10, :10].sum() + Z[10:, 10:].sum()
    assert inside >= 0.9 * Z.sum()


def test_solver_is_deterministic(bank90):
    config = SolverConfig(max_iter=20, seed=4)
    a = solve(bank90, config)
    b = solve(bank90, config)
    assert np.array_equal(a.Z, b.Z) and np.array_equal(a.g, b.g)
    assert [(t.res_JZ, t.res_WK, t.lagrangian) for t in a.trace] == [(t.res_JZ, t.res_WK, t.lagrangian) for t in b.trace]


def test_nonfinite_iterate_raises(rng):
    bank = random_bank(rng, 4, 2)
    st = initial_state(bank, SolverConfig())
    st.Y1[0, 0] = np.inf
    with pytest.raises(NonFinite):
        iterate(st, bank, SolverConfig())


def test_adaptive_mu_grows_to_cap(rng):
    bank = random_bank(rng, 5, 2)
    config = SolverConfig(mu=1.0, adaptive_mu=True, mu_rho=2.0, mu_max=4.0)
    st = initial_state(bank, config)
    for expected in (2.0, 4.0, 4.0):
        st = iterate(st, bank, config)
        assert st.mu == expected


def test_residuals_and_trace_csv(rng):
    bank = random_bank(rng, 5, 2)
    out = solve(bank, SolverConfig(max_iter=5, tol=1e-12))
    assert not out.converged and len(out.trace) == 5
    fh = io.StringIO()
    write_trace_csv(fh, out.trace)
    lines = fh.getvalue().strip().splitlines()
    assert lines[0] == "iter,res_JZ,res_WK,lagrangian,g_1,g_2"
    assert len(lines) == 6
    assert float(lines[-1].split(",")[1]) == out.trace[-1].res_JZ
    st = SolverState(np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2), np.ones(1),
                     np.zeros((2, 2)), np.zeros((2, 2)), 1.0)
    assert residuals(st) == (pytest.approx(np.sqrt(2)), 0.0)
