"""Diagonal-covariance Gaussian mixture fitted by EM, k-means init.

The negative log-likelihood of a point under the fitted mixture is the
anomaly score.
"""

from dataclasses import dataclass

import numpy as np


class GmmError(Exception):
    pass


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # [K], simplex
    means: np.ndarray  # [K, d]
    diag_vars: np.ndarray  # [K, d], >= reg
    reg: float = 1e-6
    n_iter: int = 0
    log_likelihoods: tuple = ()  # mean log-likelihood per EM iteration

    @property
    def n_components(self):
        return len(self.weights)

    def score(self, X):
        return gmm_score(self, X)


def kmeans_init(X, K=80, seed=0, tol=1e-4, max_iter=25):
    """k-means++ seeding followed by Lloyd iterations until the maximum
    center movement drops below tol; empty clusters are re-seeded to the
    point farthest from its center."""
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[0]
    if N < K:
        raise GmmError(f"need at least K={K} points, got {N}")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(N)]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            centers[k] = X[rng.integers(N)]
        else:
            centers[k] = X[rng.choice(N, p=closest / total)]
        closest = np.minimum(closest, np.sum((X - centers[k]) ** 2, axis=1))

    for _ in range(max_iter):
        d2 = (
            np.sum(X * X, axis=1)[:, np.newaxis]
            - 2.0 * X @ centers.T
            + np.sum(centers * centers, axis=1)[np.newaxis, :]
        )
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for k in range(K):
            members = assign == k
            if members.any():
                new_centers[k] = X[members].mean(axis=0)
            else:
                farthest = np.argmax(np.min(d2, axis=1))
                new_centers[k] = X[farthest]
        movement = np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max()
        centers = new_centers
        if movement < tol:
            break
    return centers


def _log_gauss_diag(X, means, diag_vars):
    """Per-component log densities [N, K] for diagonal Gaussians."""
    # -0.5 * [ d ln 2pi + sum ln var + sum (x-mu)^2/var ]
    d = X.shape[1]
    log_det = np.sum(np.log(diag_vars), axis=1)  # [K]
    inv = 1.0 / diag_vars
    quad = (
        (X * X) @ inv.T
        - 2.0 * X @ (means * inv).T
        + np.sum(means * means * inv, axis=1)[np.newaxis, :]
    )
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det[np.newaxis, :] + quad)


def _logsumexp(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else float(out)


def gmm_fit(X, K=80, max_iter=150, tol=1e-3, seed=0, reg=1e-6):
    """EM for a diagonal GMM. Stops when the mean log-likelihood changes
    by less than tol or after max_iter iterations (tol=None disables the
    early stop). Variances are floored at reg."""
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise GmmError("non-finite input")
    N, d = X.shape
    if N < K:
        raise GmmError(f"need at least K={K} points, got {N}")

    means = kmeans_init(X, K=K, seed=seed)
    global_var = np.maximum(X.var(axis=0), reg)
    diag_vars = np.tile(global_var, (K, 1))
    weights = np.full(K, 1.0 / K)

    history = []
    for it in range(max_iter):
        # E-step
        log_comp = _log_gauss_diag(X, means, diag_vars) + np.log(weights)[np.newaxis, :]
        log_norm = _logsumexp(log_comp, axis=1)  # [N]
        resp = np.exp(log_comp - log_norm[:, np.newaxis])
        history.append(float(np.mean(log_norm)))

        # M-step
        nk = resp.sum(axis=0) + 1e-300
        weights = nk / N
        means = (resp.T @ X) / nk[:, np.newaxis]
        ex2 = (resp.T @ (X * X)) / nk[:, np.newaxis]
        diag_vars = np.maximum(ex2 - means**2, reg)

        if tol is not None and it > 0 and abs(history[-1] - history[-2]) < tol:
            break

    return GmmModel(
        weights=weights,
        means=means,
        diag_vars=diag_vars,
        reg=reg,
        n_iter=len(history),
        log_likelihoods=tuple(history),
    )


def gmm_score(model, X):
    """Negative log-likelihood per point (higher = more anomalous)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.means.shape[1]:
        raise GmmError(
            f"dimension mismatch: model d={model.means.shape[1]}, input d={X.shape[1]}"
        )
    log_comp = _log_gauss_diag(X, model.means, model.diag_vars) + np.log(
        model.weights
    )[np.newaxis, :]
    return -_logsumexp(log_comp, axis=1)
