"""Exact GP regression over normalized trait vectors, one model per task."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from scipy.linalg import LinAlgError, blas, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

JITTER_START = 1e-8
JITTER_TRIES = 3


@dataclass(frozen=True)
class KernelConfig:
    """RBF kernel hyperparameters (held fixed for a whole experiment)."""

    lengthscale: float = 0.2
    signal_variance: float = 1.0
    noise_variance: float = 0.01

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def kernel_eval(y, y2, cfg: KernelConfig) -> float:
    y, y2 = np.asarray(y, dtype=float), np.asarray(y2, dtype=float)
    if y.shape != y2.shape:
        raise ValueError("trait vectors must have the same length")
    d2 = float(np.sum((y - y2) ** 2))
    return cfg.signal_variance * np.exp(-d2 / (2.0 * cfg.lengthscale**2))


def kernel_matrix(A, B, cfg: KernelConfig) -> np.ndarray:
    K = cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean")
    K *= -0.5 / cfg.lengthscale**2
    np.exp(K, out=K)
    if cfg.signal_variance != 1.0:
        K *= cfg.signal_variance
    return K


class TraitRewardModel:
    """GP posterior of one task's trait-reward map.

    Keeps the observed inputs/targets plus a cached Cholesky factor ``L`` of
    ``K + noise*I``, its inverse, and ``alpha = (K + noise*I)^-1 (r - prior_mean)``.
    New observations extend ``L`` and ``L^-1`` by one row in O(n^2); a full
    refactorization only happens when that update is numerically unsafe.
    ``observe`` mutates in place and is not thread-safe; ``predict`` on a
    model nobody is writing to is.
    """

    def __init__(self, kernel: KernelConfig | None = None, n_traits: int | None = None,
                 prior_mean: float = 0.0):
        self.kernel = kernel or KernelConfig()
        self.prior_mean = float(prior_mean)
        self.n_traits = n_traits
        self._X = np.empty((0, n_traits or 0))
        self._r = np.empty(0)
        self._L = np.empty((0, 0))
        self._Linv = np.empty((0, 0))
        self._alpha = np.empty(0)
        self._jitter = 0.0

    def __len__(self):
        return self._r.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        return self._X.copy()

    @property
    def targets(self) -> np.ndarray:
        return self._r.copy()

    @property
    def factor(self) -> np.ndarray:
        return self._L.copy()

    @property
    def alpha(self) -> np.ndarray:
        return self._alpha.copy()

    @property
    def jitter(self) -> float:
        return self._jitter

    def copy(self) -> "TraitRewardModel":
        new = TraitRewardModel(self.kernel, self.n_traits, self.prior_mean)
        new._X, new._r = self._X.copy(), self._r.copy()
        new._L, new._alpha = self._L.copy(), self._alpha.copy()
        new._Linv = self._Linv.copy(order="F")
        new._jitter = self._jitter
        return new

    # -- updates -----------------------------------------------------------

    def observe(self, y, r: float) -> "TraitRewardModel":
        y = np.asarray(y, dtype=float).ravel()
        if not np.isfinite(r):
            raise ValueError(f"non-finite reward {r!r}")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite trait vector")
        if self.n_traits is None:
            self.n_traits = y.shape[0]
            self._X = np.empty((0, self.n_traits))
        elif y.shape[0] != self.n_traits:
            raise ValueError(f"expected {self.n_traits} traits, got {y.shape[0]}")

        X_old = self._X
        self._X = np.vstack([X_old, y])
        self._r = np.append(self._r, float(r))
        if not self._append_factor(X_old, y):
            self._refactor()
        self._alpha = cho_solve((self._L, True), self._r - self.prior_mean,
                                check_finite=False)
        return self

    def observe_many(self, ys: Iterable, rs: Iterable[float]) -> "TraitRewardModel":
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        rs = np.asarray(list(rs), dtype=float).ravel()
        if ys.shape[0] != rs.shape[0]:
            raise ValueError("inputs and targets differ in length")
        if rs.size == 0:
            return self
        if not np.all(np.isfinite(rs)) or not np.all(np.isfinite(ys)):
            raise ValueError("non-finite observation")
        if self.n_traits is None:
            self.n_traits = ys.shape[1]
            self._X = np.empty((0, self.n_traits))
        elif ys.shape[1] != self.n_traits:
            raise ValueError(f"expected {self.n_traits} traits, got {ys.shape[1]}")
        self._X = np.vstack([self._X, ys])
        self._r = np.concatenate([self._r, rs])
        self._refactor()
        self._alpha = cho_solve((self._L, True), self._r - self.prior_mean,
                                check_finite=False)
        return self

    def _diag_noise(self) -> float:
        return self.kernel.noise_variance + self._jitter

    def _append_factor(self, X_old: np.ndarray, y: np.ndarray) -> bool:
        # Rank-one extension of the existing factor; exact up to rounding.
        n = X_old.shape[0]
        kss = self.kernel.signal_variance + self._diag_noise()
        if n == 0:
            if kss <= 0:
                return False
            self._L = np.array([[np.sqrt(kss)]])
            self._Linv = 1.0 / self._L
            return True
        k = kernel_matrix(X_old, y[None, :], self.kernel)[:, 0]
        l = solve_triangular(self._L, k, lower=True, check_finite=False)
        d2 = kss - l @ l
        if not d2 > 1e-6 * kss:
            return False
        d = np.sqrt(d2)
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self._L
        L[n, :n] = l
        L[n, n] = d
        Linv = np.zeros((n + 1, n + 1), order="F")
        Linv[:n, :n] = self._Linv
        Linv[n, :n] = -(l @ self._Linv) / d
        Linv[n, n] = 1.0 / d
        self._L, self._Linv = L, Linv
        return True

    def _refactor(self):
        K = kernel_matrix(self._X, self._X, self.kernel)
        K[np.diag_indices_from(K)] += self.kernel.noise_variance
        jitter = self._jitter
        for attempt in range(JITTER_TRIES + 1):
            try:
                self._L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True,
                                   check_finite=False)
                self._Linv = np.asfortranarray(solve_triangular(
                    self._L, np.eye(K.shape[0]), lower=True, check_finite=False))
                self._jitter = jitter
                return
            except LinAlgError:
                if attempt == JITTER_TRIES:
                    raise
                jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
                log.debug("cholesky failed; retrying with jitter %.1e", jitter)

    # -- queries -----------------------------------------------------------

    def predict_many(self, Ys) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of ``Ys``."""
        Ys = np.atleast_2d(np.asarray(Ys, dtype=float))
        sv = self.kernel.signal_variance
        if len(self) == 0:
            return (np.full(Ys.shape[0], self.prior_mean), np.full(Ys.shape[0], sv))
        Ks = kernel_matrix(Ys, self._X, self.kernel)
        mean = self.prior_mean + Ks @ self._alpha
        # W = Ks L^-T with a triangular multiply (half the flops of a GEMM)
        W = blas.dtrmm(1.0, self._Linv, Ks, side=1, lower=1, trans_a=1)
        var = sv - np.einsum("ij,ij->i", W, W)
        return mean, np.maximum(var, 0.0)

    def predict(self, y) -> tuple[float, float]:
        mean, var = self.predict_many(np.asarray(y, dtype=float)[None, :])
        return float(mean[0]), float(var[0])

    def predict_gradient(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of posterior mean and variance with respect to ``y``."""
        y = np.asarray(y, dtype=float).ravel()
        if len(self) == 0:
            return np.zeros_like(y), np.zeros_like(y)
        ell2 = self.kernel.lengthscale**2
        k = kernel_matrix(y[None, :], self._X, self.kernel)[0]
        dk = -(y[None, :] - self._X) / ell2 * k[:, None]  # n x U
        dmean = dk.T @ self._alpha
        Kinv_k = cho_solve((self._L, True), k, check_finite=False)
        dvar = -2.0 * dk.T @ Kinv_k
        return dmean, dvar

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "prior_mean": self.prior_mean,
            "inputs": self._X.tolist(),
            "targets": self._r.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraitRewardModel":
        inputs = np.asarray(d["inputs"], dtype=float)
        n_traits = inputs.shape[1] if inputs.ndim == 2 and inputs.size else None
        model = cls(KernelConfig(**d["kernel"]), n_traits, d.get("prior_mean", 0.0))
        if len(d["targets"]):
            model.observe_many(inputs, d["targets"])
        return model


def prior_from_demonstrations(demos, cfg: KernelConfig | None = None,
                              n_traits: int | None = None) -> TraitRewardModel:
    """Model conditioned on ``(trait vector, reward)`` pairs for one task.

    An empty list gives the zero-mean prior.
    """
    model = TraitRewardModel(cfg, n_traits)
    demos = list(demos)
    if demos:
        ys = np.array([np.asarray(y, dtype=float) for y, _ in demos])
        rs = [float(r) for _, r in demos]
        model.observe_many(ys, rs)
    return model
