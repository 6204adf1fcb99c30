import numpy as np
import pytest

from pnpmc import GaussianMixture


def random_mixture(gen, n=2, K=2, spread=3.0):
    """A random full-covariance mixture with well-conditioned components."""
    w = gen.dirichlet(np.ones(K))
    means = spread * gen.standard_normal((K, n))
    covs = []
    for _ in range(K):
        B = gen.standard_normal((n, n))
        covs.append(B @ B.T / n + 0.5 * np.eye(n))
    return GaussianMixture(w, means, np.array(covs))


def central_diff(f, x, h=None):
    """Central finite-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        step = 1e-5 * (1 + abs(x[i])) if h is None else h
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one acceptance line; printed in the terminal summary."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
