"""Versioned binary container for fitted models.

Layout: magic ADM1, u16 format version, u8 model kind, then kind-specific
sections. All integers little-endian; all parameters float64 LE. Scores
after a round trip are bit-identical.
"""

import struct

import numpy as np

from .gmm import GmmModel
from .iforest import IsoForestModel, IsoTree
from .kde import KdeModel
from .ocsvm import OcSvmModel
from .vbgmm import VbGmmModel

MAGIC = b"ADM1"
VERSION = 1

_KIND_TAGS = {"gmm": 1, "bgmm": 2, "iforest": 3, "ocsvm": 4, "kde": 5}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


class ModelFileError(Exception):
    pass


def model_kind(model):
    if isinstance(model, GmmModel):
        return "gmm"
    if isinstance(model, VbGmmModel):
        return "bgmm"
    if isinstance(model, IsoForestModel):
        return "iforest"
    if isinstance(model, OcSvmModel):
        return "ocsvm"
    if isinstance(model, KdeModel):
        return "kde"
    raise ModelFileError(f"unknown model type {type(model).__name__}")


def _w_u32(fh, v):
    fh.write(struct.pack("<I", v))


def _w_f8(fh, v):
    fh.write(struct.pack("<d", float(v)))


def _w_arr(fh, arr, dtype):
    fh.write(np.ascontiguousarray(arr).astype(dtype).tobytes())


def _r_u32(fh):
    return struct.unpack("<I", fh.read(4))[0]


def _r_f8(fh):
    return struct.unpack("<d", fh.read(8))[0]


def _r_arr(fh, count, dtype):
    itemsize = np.dtype(dtype).itemsize
    buf = fh.read(count * itemsize)
    if len(buf) != count * itemsize:
        raise ModelFileError("truncated model file")
    return np.frombuffer(buf, dtype=dtype).copy()


def save_model(model, path):
    kind = model_kind(model)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<B", _KIND_TAGS[kind]))
        if kind == "gmm":
            K, d = model.means.shape
            _w_u32(fh, K)
            _w_u32(fh, d)
            _w_f8(fh, model.reg)
            _w_arr(fh, model.weights, "<f8")
            _w_arr(fh, model.means, "<f8")
            _w_arr(fh, model.diag_vars, "<f8")
        elif kind == "bgmm":
            K, d = model.m.shape
            _w_u32(fh, K)
            _w_u32(fh, d)
            _w_arr(fh, model.alpha, "<f8")
            _w_arr(fh, model.beta, "<f8")
            _w_arr(fh, model.a, "<f8")
            _w_arr(fh, model.m, "<f8")
            _w_arr(fh, model.b, "<f8")
        elif kind == "iforest":
            _w_u32(fh, len(model.trees))
            _w_u32(fh, model.psi)
            _w_u32(fh, model.n_dims)
            for t in model.trees:
                _w_u32(fh, len(t.features))
                _w_arr(fh, t.features, "<i4")
                _w_arr(fh, t.thresholds, "<f8")
                _w_arr(fh, t.left, "<i4")
                _w_arr(fh, t.right, "<i4")
                _w_arr(fh, t.sizes, "<i4")
        elif kind == "ocsvm":
            n_sv, d = model.support_vectors.shape
            _w_u32(fh, n_sv)
            _w_u32(fh, d)
            _w_f8(fh, model.rho)
            _w_f8(fh, model.gamma)
            _w_f8(fh, model.nu)
            _w_f8(fh, model.kkt_residual)
            _w_arr(fh, model.alphas, "<f8")
            _w_arr(fh, model.support_vectors, "<f8")
        elif kind == "kde":
            N, d = model.train_points.shape
            _w_u32(fh, N)
            _w_u32(fh, d)
            _w_f8(fh, model.bandwidth)
            _w_arr(fh, model.train_points, "<f8")


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ModelFileError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != VERSION:
            raise ModelFileError(f"{path}: unsupported version {version}")
        (tag,) = struct.unpack("<B", fh.read(1))
        kind = _TAG_KINDS.get(tag)
        if kind is None:
            raise ModelFileError(f"{path}: unknown model kind tag {tag}")

        if kind == "gmm":
            K, d = _r_u32(fh), _r_u32(fh)
            reg = _r_f8(fh)
            return GmmModel(
                weights=_r_arr(fh, K, "<f8"),
                means=_r_arr(fh, K * d, "<f8").reshape(K, d),
                diag_vars=_r_arr(fh, K * d, "<f8").reshape(K, d),
                reg=reg,
            )
        if kind == "bgmm":
            K, d = _r_u32(fh), _r_u32(fh)
            return VbGmmModel(
                alpha=_r_arr(fh, K, "<f8"),
                beta=_r_arr(fh, K, "<f8"),
                a=_r_arr(fh, K, "<f8"),
                m=_r_arr(fh, K * d, "<f8").reshape(K, d),
                b=_r_arr(fh, K * d, "<f8").reshape(K, d),
            )
        if kind == "iforest":
            n_trees, psi, n_dims = _r_u32(fh), _r_u32(fh), _r_u32(fh)
            trees = []
            for _ in range(n_trees):
                n_nodes = _r_u32(fh)
                trees.append(
                    IsoTree(
                        features=_r_arr(fh, n_nodes, "<i4"),
                        thresholds=_r_arr(fh, n_nodes, "<f8"),
                        left=_r_arr(fh, n_nodes, "<i4"),
                        right=_r_arr(fh, n_nodes, "<i4"),
                        sizes=_r_arr(fh, n_nodes, "<i4"),
                    )
                )
            return IsoForestModel(trees=tuple(trees), psi=psi, n_dims=n_dims)
        if kind == "ocsvm":
            n_sv, d = _r_u32(fh), _r_u32(fh)
            rho, gamma, nu, kkt = (_r_f8(fh) for _ in range(4))
            return OcSvmModel(
                alphas=_r_arr(fh, n_sv, "<f8"),
                support_vectors=_r_arr(fh, n_sv * d, "<f8").reshape(n_sv, d),
                rho=rho,
                gamma=gamma,
                nu=nu,
                kkt_residual=kkt,
            )
        if kind == "kde":
            N, d = _r_u32(fh), _r_u32(fh)
            bandwidth = _r_f8(fh)
            return KdeModel(
                train_points=_r_arr(fh, N * d, "<f8").reshape(N, d),
                bandwidth=bandwidth,
            )
