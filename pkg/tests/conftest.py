import numpy as np
import pytest

from kergraph.kernel_bank import KernelBank, KernelMatrix, KernelSpec, build_standard_bank


def make_blobs(n, seed, sep=6.0, offset=10.0):
    """Three isotropic unit-variance blobs in 2-D, ``n // 3`` points each, column-sample layout."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [sep, 0.0], [0.0, sep]]) + offset
    y = np.repeat(np.arange(3), n // 3)
    X = (centers[y] + rng.normal(size=(y.size, 2))).T
    return X, y


def random_bank(rng, n, r):
    kernels = []
    for _ in range(r):
        F = rng.uniform(0, 1, size=(n, 3))
        H = F @ F.T
        kernels.append(KernelMatrix(H / H.max(), KernelSpec.linear(), normalized=True))
    return KernelBank(kernels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs90():
    return make_blobs(90, seed=0)


@pytest.fixture(scope="session")
def bank90(blobs90):
    return build_standard_bank(blobs90[0])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
