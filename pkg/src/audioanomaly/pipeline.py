"""Pipeline orchestration: manifest to feature caches to experiment
cells. Caches are keyed by a content hash of the DSP/render parameters
and the backend graph file, so changed parameters never reuse stale
features."""

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import embedding, ingest, patches as patching, spectral

PIPELINE_SAMPLE_RATE = 16000


class PipelineError(Exception):
    pass


def mel_for_waveform(w, dsp):
    if w.sample_rate_hz != PIPELINE_SAMPLE_RATE:
        raise PipelineError(
            f"sample rate {w.sample_rate_hz} != {PIPELINE_SAMPLE_RATE}; "
            "resampling is not performed"
        )
    cfg = spectral.StftConfig(n_fft=dsp["n_fft"], hop=dsp["hop"])
    power = spectral.stft_power(w, cfg)
    fb = spectral.build_mel_filterbank(
        sr=w.sample_rate_hz,
        n_fft=dsp["n_fft"],
        n_mels=dsp["n_mels"],
        f_min=dsp["f_min"],
        f_max=dsp["f_max"],
        scale=dsp["scale"],
    )
    return spectral.mel_db(power, fb, top_db=dsp["top_db"])


def _clip_rows(root, entry, backend, dsp, render):
    w = ingest.decode_wav(Path(root) / entry.path)
    mel = mel_for_waveform(w, dsp)
    patch_list = patching.extract_patches(
        mel, clip_id=entry.path, width=render["width"], stride=render["stride"]
    )
    rows = backend.embed_patches(patch_list, orientation=render["orientation"])
    meta = tuple((p.clip_id, p.frame_offset) for p in patch_list)
    return rows, meta


def featurize_entries(root, entries, backend, dsp, render, workers=1):
    """FeatureMatrix over all patches of the given clips, row order clip
    lexicographic then offset ascending."""
    entries = sorted(entries, key=lambda e: e.path)

    def work(entry):
        return _clip_rows(root, entry, backend, dsp, render)

    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]

    values = np.concatenate([r for r, _ in results], axis=0)
    row_meta = tuple(m for _, meta in results for m in meta)
    return embedding.FeatureMatrix(
        values=values,
        row_meta=row_meta,
        extractor_id=backend.extractor_id,
        standardized=False,
        orientation=render["orientation"],
    )


def cache_key(extractor_id, dsp, render, graph_path=None):
    """Content hash identifying a feature cache."""
    payload = {
        "extractor": extractor_id,
        "dsp": {k: dsp[k] for k in sorted(dsp)},
        "render": {k: render[k] for k in sorted(render)},
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
    if graph_path:
        digest.update(Path(graph_path).read_bytes())
    return digest.hexdigest()[:16]


def cache_path(cache_dir, machine_type, machine_id, extractor_id, key):
    return Path(cache_dir) / f"{machine_type}_{machine_id}_{extractor_id}_{key}.fch"


class DatasetProvider:
    """Feature/index provider backed by a dataset directory and a feature
    cache directory; caches are built on first use and reused after."""

    def __init__(self, cfg, index=None):
        self.cfg = cfg
        self.index = index if index is not None else ingest.index_dataset(cfg.dataset_root)
        self.cache_dir = Path(cfg.effective_cache_dir())
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._backends = {}

    def backend_for(self, extractor_id):
        if extractor_id not in self._backends:
            spec = embedding.EmbeddingBackendSpec(
                extractor_id=extractor_id,
                graph_path=self.cfg.graphs.get(extractor_id, ""),
            )
            self._backends[extractor_id] = embedding.load_backend(spec)
        return self._backends[extractor_id]

    def index_for(self, machine_type, machine_id):
        group = self.index.filter(machine_type=machine_type, machine_id=machine_id)
        if not group.entries:
            raise PipelineError(f"no clips for {machine_type}/{machine_id}")
        return group

    def features_for(self, extractor_id, machine_type, machine_id):
        key = cache_key(
            extractor_id,
            self.cfg.dsp,
            self.cfg.render,
            self.cfg.graphs.get(extractor_id) or None,
        )
        path = cache_path(self.cache_dir, machine_type, machine_id, extractor_id, key)
        if path.exists():
            return embedding.read_cache(path)
        group = self.index_for(machine_type, machine_id)
        matrix = featurize_entries(
            self.index.root,
            group.entries,
            self.backend_for(extractor_id),
            self.cfg.dsp,
            self.cfg.render,
            workers=self.cfg.effective_workers(),
        )
        tmp = path.with_suffix(".tmp")
        embedding.write_cache(matrix, tmp)
        os.replace(tmp, path)  # write-once, atomic publish
        return embedding.read_cache(path)
