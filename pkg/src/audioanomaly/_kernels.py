"""Hot scoring kernels: compiled extension when available, numpy fallback.

The compiled module (`audioanomaly._core`, built by setup.py via Cython)
implements the same functions with identical semantics; tests assert
agreement. Set AUDIOANOMALY_PURE=1 to force the fallback.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "kde_logdensity",
    "iforest_path_lengths",
    "pairwise_sqdist",
]


def _pairwise_sqdist_np(a, b):
    """Squared euclidean distances [len(a), len(b)]."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    aa = np.sum(a * a, axis=1)[:, np.newaxis]
    bb = np.sum(b * b, axis=1)[np.newaxis, :]
    d = aa + bb - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def _kde_logdensity_np(train, query, h):
    """Log of the mean isotropic-Gaussian kernel density at each query
    point, computed with log-sum-exp; returns [len(query)]."""
    train = np.ascontiguousarray(train, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    n, d = train.shape
    log_norm = -0.5 * d * np.log(2.0 * np.pi * h * h) - np.log(n)
    # process queries in blocks to bound the distance-matrix size
    out = np.empty(len(query))
    block = max(1, int(4e6) // max(n, 1))
    for start in range(0, len(query), block):
        sq = _pairwise_sqdist_np(query[start : start + block], train)
        logk = -sq / (2.0 * h * h)
        m = logk.max(axis=1)
        out[start : start + block] = m + np.log(
            np.sum(np.exp(logk - m[:, np.newaxis]), axis=1)
        )
    return out + log_norm


def _iforest_path_lengths_np(features, thresholds, left, right, sizes, c_values, X):
    """Average-adjusted path lengths for one flattened isolation tree.

    Node arrays: feature < 0 marks a leaf; `sizes` is the number of
    training points routed to each node; `c_values[k]` is the expected
    remaining path length c(k) (c_values[size] added at leaves).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        depth = 0
        while features[node] >= 0:
            if X[i, features[node]] < thresholds[node]:
                node = left[node]
            else:
                node = right[node]
            depth += 1
        out[i] = depth + c_values[sizes[node]]
    return out


_IMPL = None
if os.environ.get("AUDIOANOMALY_PURE", "") != "1":
    try:
        from . import _core as _IMPL  # compiled extension
    except ImportError:
        _IMPL = None

if _IMPL is not None:
    BACKEND = "compiled"
    # the distance/density kernels are BLAS-bound, so the numpy versions
    # already run at native speed; the compiled win is the per-query tree
    # traversal, which pure Python cannot vectorize
    pairwise_sqdist = _pairwise_sqdist_np
    kde_logdensity = _kde_logdensity_np
    iforest_path_lengths = _IMPL.iforest_path_lengths
else:
    BACKEND = "python"
    pairwise_sqdist = _pairwise_sqdist_np
    kde_logdensity = _kde_logdensity_np
    iforest_path_lengths = _iforest_path_lengths_np
