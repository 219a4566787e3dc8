"""Shared fixtures: synthetic WAV corpora laid out like a real dataset.

Normal clips are a 440 Hz tone in noise; anomalous clips add an
intermittent 3 kHz tone. Clip length is configurable so most tests can
use short (cheap) clips while the end-to-end checks use full 10 s ones.
"""

import numpy as np
import pytest

from audioanomaly import ingest

SR = 16000


def tone_clip(rng, duration_s=2.06, anomalous=False):
    n = int(round(duration_s * SR))
    t = np.arange(n) / SR
    x = 0.3 * np.sin(2 * np.pi * 440.0 * t + rng.uniform(0, 2 * np.pi))
    x += 0.02 * rng.standard_normal(n)
    if anomalous:
        burst = 0.25 * np.sin(2 * np.pi * 3000.0 * t)
        gate = (np.sin(2 * np.pi * 2.0 * t + rng.uniform(0, 2 * np.pi)) > 0.2).astype(float)
        x += burst * gate
    return np.clip(x, -0.999, 0.999)


def write_clip(path, samples):
    w = ingest.Waveform(samples=np.asarray(samples), sample_rate_hz=SR)
    ingest.encode_wav(w, path)


def make_corpus(root, groups, n_normal, n_anomalous, duration_s=2.06, seed=7):
    """Create `<machine>/<id_XX>/{normal,abnormal}/*.wav` under root."""
    rng = np.random.default_rng(seed)
    id_dirs = {"M0": "id_00", "M2": "id_02", "M4": "id_04", "M6": "id_06"}
    for machine, mid in groups:
        for label_dir, count, anomalous in (
            ("normal", n_normal, False),
            ("abnormal", n_anomalous, True),
        ):
            d = root / machine / id_dirs[mid] / label_dir
            d.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                write_clip(d / f"{i:08d}.wav", tone_clip(rng, duration_s, anomalous))
    return root


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """One fan/M0 group: 14 normal + 6 anomalous short clips."""
    root = tmp_path_factory.mktemp("corpus")
    return make_corpus(root, [("fan", "M0")], n_normal=14, n_anomalous=6)
