import numpy as np
import pytest

from cmtab.problem import Team


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_team():
    return Team([2, 2], [[1.0, 0.0], [0.0, 1.0]])


def dense_posterior(X, r, Xq, ell, sv, noise):
    """Posterior mean/variance by explicit inverse, written independently of the
    package (plain loops for the kernel)."""
    X = np.atleast_2d(X)
    Xq = np.atleast_2d(Xq)

    def k(a, b):
        return sv * np.exp(-np.sum((a - b) ** 2) / (2 * ell**2))

    n = len(X)
    K = np.array([[k(X[i], X[j]) for j in range(n)] for i in range(n)]) + noise * np.eye(n)
    Kinv = np.linalg.inv(K)
    means, variances = [], []
    for q in Xq:
        kq = np.array([k(x, q) for x in X])
        means.append(kq @ Kinv @ np.asarray(r))
        variances.append(k(q, q) - kq @ Kinv @ kq)
    return np.array(means), np.array(variances)
