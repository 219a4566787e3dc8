"""Bayesian Gaussian mixture (diagonal) via coordinate-ascent variational
inference.

Priors: Dirichlet over weights (concentration 1/K per component) and an
independent Normal-Gamma per component-dimension. The anomaly score is
the negative log posterior-predictive density, a Student-t mixture under
the expected weights.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .gmm import GmmError, kmeans_init


@dataclass(frozen=True)
class VbGmmModel:
    alpha: np.ndarray  # [K] Dirichlet concentrations
    beta: np.ndarray  # [K] mean precision scales
    m: np.ndarray  # [K, d] posterior means
    a: np.ndarray  # [K] Gamma shapes
    b: np.ndarray  # [K, d] Gamma rates
    elbos: tuple = ()

    @property
    def n_components(self):
        return len(self.alpha)

    def expected_weights(self):
        return self.alpha / self.alpha.sum()

    def score(self, X):
        return vbgmm_score(self, X)


def _logsumexp_rows(a):
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True)))[:, 0]


def vbgmm_fit(X, K=80, max_iter=150, tol=1e-6, seed=0):
    """CAVI for the diagonal Bayesian GMM. The ELBO is tracked per
    iteration and is non-decreasing; iteration stops at max_iter or when
    the ELBO improves by less than tol * N."""
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise GmmError("non-finite input")
    N, d = X.shape
    if N < 2:
        raise GmmError("need at least 2 points")
    K = min(K, N)

    alpha0 = 1.0 / K
    m0 = X.mean(axis=0)
    beta0 = 1.0
    a0 = 1.0
    b0 = np.maximum(X.var(axis=0), 1e-6)  # E[precision] = 1/data variance

    # initial responsibilities: smoothed one-hot k-means assignment
    centers = kmeans_init(X, K=K, seed=seed)
    d2 = (
        np.sum(X * X, axis=1)[:, np.newaxis]
        - 2.0 * X @ centers.T
        + np.sum(centers * centers, axis=1)[np.newaxis, :]
    )
    resp = np.full((N, K), 1e-10)
    resp[np.arange(N), np.argmin(d2, axis=1)] = 1.0
    resp /= resp.sum(axis=1, keepdims=True)

    elbos = []
    alpha = beta = m = a = b = None
    for _ in range(max_iter):
        # M-step: update variational posteriors from responsibilities
        nk = resp.sum(axis=0) + 1e-300
        xbar = (resp.T @ X) / nk[:, np.newaxis]
        sk = (resp.T @ (X * X)) / nk[:, np.newaxis] - xbar**2
        sk = np.maximum(sk, 0.0)

        alpha = alpha0 + nk
        beta = beta0 + nk
        a = a0 + 0.5 * nk
        m = (beta0 * m0 + nk[:, np.newaxis] * xbar) / beta[:, np.newaxis]
        b = b0 + 0.5 * (
            nk[:, np.newaxis] * sk
            + (beta0 * nk / beta)[:, np.newaxis] * (xbar - m0) ** 2
        )

        # E-step: update responsibilities
        eln_pi = digamma(alpha) - digamma(alpha.sum())  # [K]
        eln_lam = digamma(a)[:, np.newaxis] - np.log(b)  # [K, d]
        e_lam = a[:, np.newaxis] / b  # [K, d]
        quad = (
            (X * X) @ e_lam.T
            - 2.0 * X @ (e_lam * m).T
            + np.sum(e_lam * m * m, axis=1)[np.newaxis, :]
        )  # [N, K]
        log_rho = (
            eln_pi[np.newaxis, :]
            + 0.5 * eln_lam.sum(axis=1)[np.newaxis, :]
            - 0.5 * d * np.log(2.0 * np.pi)
            - 0.5 * d / beta[np.newaxis, :]
            - 0.5 * quad
        )
        log_norm = _logsumexp_rows(log_rho)
        resp = np.exp(log_rho - log_norm[:, np.newaxis])

        # ELBO at (posteriors, responsibilities)
        nk = resp.sum(axis=0)
        quad_term = float(np.sum(resp * quad))
        t_lik = 0.5 * float(
            np.sum(nk * (eln_lam.sum(axis=1) - d * np.log(2.0 * np.pi) - d / beta))
        ) - 0.5 * quad_term
        t_z = float(np.sum(nk * eln_pi))
        t_pi = float(
            gammaln(K * alpha0) - K * gammaln(alpha0) + (alpha0 - 1.0) * eln_pi.sum()
        )
        t_mu = float(
            np.sum(
                0.5 * (np.log(beta0) + eln_lam - np.log(2.0 * np.pi))
                - 0.5 * beta0 * (e_lam * (m - m0) ** 2 + (1.0 / beta)[:, np.newaxis])
            )
        )
        t_lam = float(
            np.sum(
                a0 * np.log(b0)[np.newaxis, :]
                - gammaln(a0)
                + (a0 - 1.0) * eln_lam
                - b0[np.newaxis, :] * e_lam
            )
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            ent_z = -float(np.sum(np.where(resp > 0, resp * np.log(resp), 0.0)))
        ent_pi = -float(
            gammaln(alpha.sum())
            - gammaln(alpha).sum()
            + np.sum((alpha - 1.0) * eln_pi)
        )
        ent_mu = -float(
            np.sum(0.5 * (np.log(beta)[:, np.newaxis] + eln_lam - np.log(2.0 * np.pi)) - 0.5)
        )
        ent_lam = -float(
            np.sum(
                a[:, np.newaxis] * np.log(b)
                - gammaln(a)[:, np.newaxis]
                + (a - 1.0)[:, np.newaxis] * eln_lam
                - b * e_lam
            )
        )
        elbos.append(t_lik + t_z + t_pi + t_mu + t_lam + ent_z + ent_pi + ent_mu + ent_lam)
        if len(elbos) > 1 and abs(elbos[-1] - elbos[-2]) < tol * N:
            break

    return VbGmmModel(alpha=alpha, beta=beta, m=m, a=a, b=b, elbos=tuple(elbos))


def vbgmm_score(model, X):
    """Negative log posterior-predictive density.

    Per component the predictive is a product of univariate Student-t
    marginals (dof 2a, precision a*beta / (b*(beta+1))), mixed by the
    expected Dirichlet weights.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.m.shape[1]:
        raise GmmError(
            f"dimension mismatch: model d={model.m.shape[1]}, input d={X.shape[1]}"
        )
    alpha, beta, m, a, b = model.alpha, model.beta, model.m, model.a, model.b
    nu = 2.0 * a  # [K]
    lam = (a * beta / (beta + 1.0))[:, np.newaxis] / b  # [K, d]

    log_t = np.empty((X.shape[0], len(alpha)))
    d = m.shape[1]
    comp_const = d * (gammaln((nu + 1.0) / 2.0) - gammaln(nu / 2.0)) + 0.5 * (
        np.log(lam).sum(axis=1) - d * np.log(np.pi * nu)
    )
    for k in range(len(alpha)):
        z = lam[k] * (X - m[k]) ** 2 / nu[k]  # [N, d]
        log_t[:, k] = comp_const[k] - 0.5 * (nu[k] + 1.0) * np.sum(np.log1p(z), axis=1)

    log_mix = log_t + np.log(model.expected_weights())[np.newaxis, :]
    return -_logsumexp_rows(log_mix)
