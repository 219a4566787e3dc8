"""One-class SVM (nu formulation) with an RBF kernel, solved in the dual
by sequential pairwise (SMO-style) updates.

Dual problem: minimize 1/2 a'Qa subject to 0 <= a_i <= 1/(nu*N) and
sum(a) = 1, with Q_ij = exp(-gamma * ||x_i - x_j||^2). The decision value
is sum_i a_i k(x_i, x) - rho; its negation is the anomaly score.
"""

from dataclasses import dataclass

import numpy as np

from .. import _kernels


class OcSvmError(Exception):
    pass


class ConvergenceError(OcSvmError):
    def __init__(self, residual, tol, n_updates):
        self.residual = residual
        super().__init__(
            f"SMO did not converge: KKT residual {residual:.3e} > tol {tol:.0e} "
            f"after {n_updates} pair updates"
        )


@dataclass(frozen=True)
class OcSvmModel:
    alphas: np.ndarray  # over support vectors only
    support_vectors: np.ndarray
    rho: float
    gamma: float
    nu: float
    kkt_residual: float

    def score(self, X):
        return ocsvm_score(self, X)

    def decision(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise OcSvmError(
                f"dimension mismatch: model d={self.support_vectors.shape[1]}, "
                f"input d={X.shape[1]}"
            )
        K = np.exp(-self.gamma * _kernels.pairwise_sqdist(X, self.support_vectors))
        return K @ self.alphas - self.rho


def _resolve_gamma(X, gamma):
    if gamma == "auto" or gamma is None:
        var = float(np.asarray(X).var())
        return 1.0 / (X.shape[1] * max(var, 1e-12))
    return float(gamma)


class _KernelColumns:
    """RBF kernel columns, precomputed for small N and cached on demand
    for large N."""

    def __init__(self, X, gamma, full_limit=6000, cache_cap=2048):
        self.X = X
        self.gamma = gamma
        self.n = X.shape[0]
        if self.n <= full_limit:
            self.full = np.exp(-gamma * _kernels.pairwise_sqdist(X, X))
        else:
            self.full = None
            self.cache = {}
            self.cap = cache_cap

    def col(self, i):
        if self.full is not None:
            return self.full[:, i]
        if i not in self.cache:
            if len(self.cache) >= self.cap:
                self.cache.pop(next(iter(self.cache)))
            diff = self.X - self.X[i]
            self.cache[i] = np.exp(-self.gamma * np.sum(diff * diff, axis=1))
        return self.cache[i]


def ocsvm_fit(X, nu=1e-4, gamma="auto", tol=1e-3, seed=0, max_updates=100_000):
    """Solve the nu-one-class dual to KKT residual <= tol.

    At each step the maximally violating pair (smallest gradient among
    unbounded-up, largest among unbounded-down) is updated analytically.
    Raises ConvergenceError with the residual if max_updates is exhausted.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    N = X.shape[0]
    if N < 2:
        raise OcSvmError("need at least 2 points")
    if not np.all(np.isfinite(X)):
        raise OcSvmError("non-finite input")
    gamma = _resolve_gamma(X, gamma)
    C = 1.0 / (nu * N)

    kernel = _KernelColumns(X, gamma)
    alpha = np.full(N, 1.0 / N)  # feasible start on the simplex
    # gradient of the objective: g = Q alpha
    if kernel.full is not None:
        g = kernel.full @ alpha
    else:
        g = np.empty(N)
        for i in range(N):
            g[i] = kernel.col(i) @ alpha

    eps = 1e-12
    residual = np.inf
    for update in range(max_updates):
        up = alpha < C - eps  # can increase
        down = alpha > eps  # can decrease
        gi_candidates = np.where(up, g, np.inf)
        gj_candidates = np.where(down, g, -np.inf)
        i = int(np.argmin(gi_candidates))
        j = int(np.argmax(gj_candidates))
        residual = float(g[j] - g[i])
        if residual <= tol:
            break
        qi, qj = kernel.col(i), kernel.col(j)
        curv = max(qi[i] + qj[j] - 2.0 * qi[j], 1e-12)
        delta = residual / curv
        delta = min(delta, C - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        g += delta * (qi - qj)
    else:
        raise ConvergenceError(residual, tol, max_updates)

    # rho from margin support vectors (fall back to the violation gap mid)
    margin = (alpha > eps) & (alpha < C - eps)
    if margin.any():
        rho = float(np.mean(g[margin]))
    else:
        rho = float((g[np.argmin(np.where(alpha < C - eps, g, np.inf))] +
                     g[np.argmax(np.where(alpha > eps, g, -np.inf))]) / 2.0)

    sv = alpha > eps
    return OcSvmModel(
        alphas=alpha[sv].copy(),
        support_vectors=X[sv].copy(),
        rho=rho,
        gamma=gamma,
        nu=nu,
        kkt_residual=residual,
    )


def ocsvm_score(model, X):
    """Negative decision value: positive outside the learned region."""
    return -model.decision(X)
