import numpy as np
import pytest

from mvgp_cbf.kernels import MatrixKernelParams, RbfKernel
from mvgp_cbf.mvgp import Dataset, MVGPModel, condition, zero_mean


def pendulum_F(x, g=10.0, l=1.0, m=1.0):
    return np.array([[x[1], 0.0], [-(g / l) * np.sin(x[0]), 1.0 / (m * l)]])


def random_params(rng, n, m, sigma=0.2):
    C = rng.standard_normal((m + 1, m + 1))
    Ah = rng.standard_normal((n, n))
    A = Ah @ Ah.T + 0.3 * np.eye(n)
    return MatrixKernelParams(C, np.full(m + 1, 0.1), A, sigma)


def random_model(rng, n=2, m=1, k=5, mean_fn=None, truth=None, lengthscales=None):
    ls = rng.uniform(0.6, 1.5, n) if lengthscales is None else lengthscales
    kern = RbfKernel.from_lengthscales(rng.uniform(0.5, 2.0), ls)
    params = random_params(rng, n, m)
    mean_fn = mean_fn or zero_mean(n, m)
    prior = MVGPModel.prior(mean_fn, kern, params)
    if k == 0:
        return prior
    X = rng.uniform(-1, 1, (k, n))
    U = rng.uniform(-2, 2, (k, m))
    if truth is None:
        Xd = rng.standard_normal((k, n))
    else:
        Xd = np.stack([truth(X[i]) @ np.r_[1.0, U[i]] for i in range(k)])
    return condition(prior, Dataset(X, U, Xd))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion, then assert it."""
    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
