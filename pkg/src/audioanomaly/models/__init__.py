"""Classical anomaly detectors with a uniform contract.

Every model exposes `score(X) -> array` where higher means more
anomalous; fits are deterministic given (data, seed).
"""

from .gmm import GmmModel, gmm_fit, gmm_score, kmeans_init
from .iforest import IsoForestModel, average_path_length, iforest_fit, iforest_score
from .kde import KdeModel, kde_fit, kde_score
from .ocsvm import OcSvmModel, ocsvm_fit, ocsvm_score
from .serialize import load_model, save_model
from .vbgmm import VbGmmModel, vbgmm_fit, vbgmm_score

__all__ = [
    "GmmModel", "VbGmmModel", "IsoForestModel", "OcSvmModel", "KdeModel",
    "kmeans_init", "gmm_fit", "gmm_score", "vbgmm_fit", "vbgmm_score",
    "iforest_fit", "iforest_score", "average_path_length",
    "ocsvm_fit", "ocsvm_score", "kde_fit", "kde_score",
    "save_model", "load_model", "fit_model", "MODEL_KINDS",
]

MODEL_KINDS = ("gmm", "bgmm", "iforest", "ocsvm", "kde")


def fit_model(kind, X, seed=0, **hyper):
    """Fit a model by kind name ("gmm", "bgmm", "iforest", "ocsvm", "kde")."""
    if kind == "gmm":
        return gmm_fit(X, seed=seed, **hyper)
    if kind == "bgmm":
        return vbgmm_fit(X, seed=seed, **hyper)
    if kind == "iforest":
        return iforest_fit(X, seed=seed, **hyper)
    if kind == "ocsvm":
        return ocsvm_fit(X, seed=seed, **hyper)
    if kind == "kde":
        return kde_fit(X, **hyper)
    raise ValueError(f"unknown model kind {kind!r}")
