"""Isolation Forest: random axis-aligned splits on subsamples; short
average path lengths mean easy to isolate, i.e. anomalous."""

from dataclasses import dataclass

import numpy as np

from .. import _kernels

EULER_GAMMA = 0.5772156649015329


class IForestError(Exception):
    pass


def average_path_length(n):
    """c(n): expected unsuccessful-search path length in a BST of n
    points; c(n) = 2*H(n-1) - 2*(n-1)/n with H(i) = ln(i) + gamma."""
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n)
    big = n > 2
    out[big] = 2.0 * (np.log(n[big] - 1.0) + EULER_GAMMA) - 2.0 * (n[big] - 1.0) / n[big]
    out[n == 2] = 2.0 * EULER_GAMMA - 1.0
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class IsoTree:
    # flattened node arrays; features[i] < 0 marks a leaf
    features: np.ndarray  # [n_nodes] int32
    thresholds: np.ndarray  # [n_nodes] float64
    left: np.ndarray  # [n_nodes] int32
    right: np.ndarray  # [n_nodes] int32
    sizes: np.ndarray  # [n_nodes] int32, training points at node


@dataclass(frozen=True)
class IsoForestModel:
    trees: tuple  # of IsoTree
    psi: int
    n_dims: int

    def score(self, X):
        return iforest_score(self, X)


def _build_tree(X, rng, depth_cap):
    features, thresholds, left, right, sizes = [], [], [], [], []

    def build(idx, depth):
        node = len(features)
        features.append(-1)
        thresholds.append(0.0)
        left.append(-1)
        right.append(-1)
        sizes.append(len(idx))
        if len(idx) <= 1 or depth >= depth_cap:
            return node
        sub = X[idx]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            return node
        dim = int(splittable[rng.integers(splittable.size)])
        thr = float(rng.uniform(lo[dim], hi[dim]))
        mask = sub[:, dim] < thr
        if not mask.any() or mask.all():
            # uniform draw hit an endpoint; leave as leaf
            return node
        features[node] = dim
        thresholds[node] = thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(len(X)), 0)
    return IsoTree(
        features=np.asarray(features, dtype=np.int32),
        thresholds=np.asarray(thresholds, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        sizes=np.asarray(sizes, dtype=np.int32),
    )


def iforest_fit(X, n_trees=128, psi=256, seed=0):
    """Build n_trees isolation trees on psi-subsamples (without
    replacement; with replacement when N < psi). Depth is capped at
    ceil(log2(psi)). Each tree gets an independent RNG stream seeded by
    (seed, tree index)."""
    X = np.asarray(X, dtype=np.float64)
    N, d = X.shape
    if N < 2:
        raise IForestError("need at least 2 points")
    depth_cap = int(np.ceil(np.log2(psi)))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        if N >= psi:
            idx = rng.choice(N, size=psi, replace=False)
        else:
            idx = rng.choice(N, size=psi, replace=True)
        trees.append(_build_tree(X[idx], rng, depth_cap))
    return IsoForestModel(trees=tuple(trees), psi=psi, n_dims=d)


def iforest_score(model, X):
    """s(x) = 2^(-E[h(x)]/c(psi)) in (0, 1]; early-terminated nodes add
    c(node size) to the path length."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_dims:
        raise IForestError(
            f"dimension mismatch: model d={model.n_dims}, input d={X.shape[1]}"
        )
    max_size = max(int(t.sizes.max()) for t in model.trees)
    c_values = average_path_length(np.arange(max_size + 1))
    total = np.zeros(X.shape[0])
    for t in model.trees:
        total += _kernels.iforest_path_lengths(
            t.features, t.thresholds, t.left, t.right, t.sizes, c_values, X
        )
    mean_path = total / len(model.trees)
    denom = average_path_length(np.array(float(max(model.psi, 2))))
    return np.power(2.0, -mean_path / denom)
