"""Kernel density estimation with an isotropic Gaussian kernel.

The anomaly score of a query point is the negative log of the mean
kernel density over the training points, computed via log-sum-exp.
"""

from dataclasses import dataclass

import numpy as np

from .. import _kernels


class KdeError(Exception):
    pass


@dataclass(frozen=True)
class KdeModel:
    train_points: np.ndarray  # [N, d]
    bandwidth: float = 0.1

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise KdeError(f"bandwidth must be positive, got {self.bandwidth}")
        if len(self.train_points) < 1:
            raise KdeError("need at least 1 training point")

    def score(self, X):
        return kde_score(self, X)


def kde_fit(X, bandwidth=0.1):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise KdeError("non-finite input")
    return KdeModel(train_points=X, bandwidth=float(bandwidth))


def kde_score(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.train_points.shape[1]:
        raise KdeError(
            f"dimension mismatch: model d={model.train_points.shape[1]}, "
            f"input d={X.shape[1]}"
        )
    return -_kernels.kde_logdensity(model.train_points, X, model.bandwidth)
