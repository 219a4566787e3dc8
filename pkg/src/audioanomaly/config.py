"""Declarative run configuration.

Defaults are the experiment parameters used throughout the pipeline:
64 Mel bands, 1024-point Hann window, hop 256, 64x64 patches at stride
32, viridis rendering upscaled to 224, five seeds, 150 test clips per
(machine, id), and the published model hyperparameters.
"""

import os
from dataclasses import asdict, dataclass, field, replace

import yaml

CONFIG_VERSION = 1

CACHE_DIR_ENV = "AUDIOANOMALY_CACHE_DIR"

ALL_MACHINES = [
    [machine, mid]
    for machine in ("fan", "pump", "slider", "valve")
    for mid in ("M0", "M2", "M4", "M6")
]

DEFAULT_HYPER = {
    "gmm": {"K": 80, "max_iter": 150, "tol": 1e-3},
    "bgmm": {"K": 80, "max_iter": 150},
    "iforest": {"n_trees": 128, "psi": 256},
    "ocsvm": {"nu": 1e-4, "gamma": "auto", "tol": 1e-3},
    "kde": {"bandwidth": 0.1},
}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    config_version: int = CONFIG_VERSION
    dataset_root: str = ""
    cache_dir: str = "cache"
    out_dir: str = "out"
    extractors: list = field(default_factory=lambda: ["identity"])
    models: list = field(default_factory=lambda: ["gmm", "bgmm", "iforest", "ocsvm", "kde"])
    machines: list = field(default_factory=lambda: [list(m) for m in ALL_MACHINES])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_test_normal: int = 150
    workers: int = 0  # 0 = available parallelism
    graphs: dict = field(default_factory=dict)  # extractor -> ONNX path
    dsp: dict = field(
        default_factory=lambda: {
            "n_fft": 1024,
            "hop": 256,
            "n_mels": 64,
            "f_min": 0.0,
            "f_max": 8000.0,
            "scale": "slaney",
            "top_db": 80.0,
        }
    )
    render: dict = field(
        default_factory=lambda: {
            "width": 64,
            "stride": 32,
            "orientation": "low-bottom",
            "normalization": "per-patch",  # or "per-clip"
        }
    )
    hyper: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_HYPER.items()})

    def to_dict(self):
        return asdict(self)

    def effective_cache_dir(self):
        return os.environ.get(CACHE_DIR_ENV, self.cache_dir)

    def effective_workers(self):
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def with_overrides(self, **kwargs):
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **updates) if updates else self


def load_config(path):
    data = yaml.safe_load(open(path)) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    version = data.get("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"{path}: unsupported config_version {version}")
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    base = RunConfig()
    merged = {}
    for key in ("hyper", "dsp", "render"):
        if key in data:
            section = dict(getattr(base, key))
            for sub_key, sub_val in data[key].items():
                if isinstance(section.get(sub_key), dict):
                    section[sub_key] = {**section[sub_key], **sub_val}
                else:
                    section[sub_key] = sub_val
            merged[key] = section
    merged.update({k: v for k, v in data.items() if k not in ("hyper", "dsp", "render")})
    return replace(base, **merged)


def save_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
