"""Feature extraction backends, standardization and the feature cache.

Backends map rendered 224x224 RGB tensors (or, for the identity backend,
raw 64x64 patches) to fixed-length feature vectors. Features are
standardized per dimension with statistics fitted on training rows only.
"""

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import patches as patching
from .graphrt import GraphExecutor

EXPECTED_DIMS = {
    "alexnet": 4096,
    "resnet18": 512,
    "resnet34": 512,
    "squeezenet": 2048,
    "identity": 64,
}

STD_FLOOR = 1e-8
CACHE_MAGIC = b"FCH1"

_ORIENT_CODES = {patching.ORIENT_LOW_TOP: 0, patching.ORIENT_LOW_BOTTOM: 1}
_CODE_ORIENTS = {v: k for k, v in _ORIENT_CODES.items()}


class EmbeddingError(Exception):
    pass


class ShapeMismatchError(EmbeddingError):
    pass


class CacheError(EmbeddingError):
    pass


@dataclass(frozen=True)
class EmbeddingBackendSpec:
    extractor_id: str
    graph_path: str = ""
    input_name: str = ""
    output_name: str = ""

    @property
    def expected_dim(self):
        if self.extractor_id not in EXPECTED_DIMS:
            raise EmbeddingError(f"unknown extractor {self.extractor_id!r}")
        return EXPECTED_DIMS[self.extractor_id]


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # [N, d]
    row_meta: tuple  # of (clip_id, frame_offset)
    extractor_id: str
    standardized: bool = False
    orientation: str = patching.ORIENT_LOW_BOTTOM

    def __post_init__(self):
        if self.values.ndim != 2:
            raise EmbeddingError("feature values must be a 2-D matrix")
        if len(self.row_meta) != len(self.values):
            raise EmbeddingError("row metadata length does not match row count")

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def sorted_rows(self):
        """Rows reordered clip-lexicographic, then offset ascending."""
        order = sorted(range(self.n_rows), key=lambda i: self.row_meta[i])
        return replace(
            self,
            values=self.values[order],
            row_meta=tuple(self.row_meta[i] for i in order),
        )

    def clip_ids(self):
        seen = []
        for clip_id, _ in self.row_meta:
            if not seen or seen[-1] != clip_id:
                if clip_id in seen:
                    raise EmbeddingError("rows are not grouped by clip")
                seen.append(clip_id)
        return seen

    def rows_for_clip(self, clip_id):
        idx = [i for i, (cid, _) in enumerate(self.row_meta) if cid == clip_id]
        return self.values[idx]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # floored at STD_FLOOR


class IdentityBackend:
    """Embeds a 64x64 patch by 8x8 mean-pool downsampling and flattening
    to a 64-dimensional vector. Needs no pretrained graph."""

    extractor_id = "identity"
    dim = 64

    def embed_patches(self, patch_list, orientation=patching.ORIENT_LOW_BOTTOM):
        rows = np.empty((len(patch_list), self.dim))
        for i, p in enumerate(patch_list):
            u = patching.patch_to_unit(p)
            if orientation == patching.ORIENT_LOW_BOTTOM:
                u = u[::-1, :]
            pooled = u.reshape(8, 8, 8, 8).mean(axis=(1, 3))
            rows[i] = pooled.reshape(-1)
        return rows


class OnnxBackend:
    """Runs an ONNX feature-extractor graph on rendered patches."""

    def __init__(self, spec, executor):
        self.spec = spec
        self.extractor_id = spec.extractor_id
        self.dim = spec.expected_dim
        self.executor = executor
        self.cmap = patching.viridis()

    def run(self, imgs):
        return np.asarray(self.executor.run(imgs), dtype=np.float64)

    def embed_patches(self, patch_list, orientation=patching.ORIENT_LOW_BOTTOM, batch=16):
        imgs = np.stack(
            [
                patching.render_patch(p, self.cmap, orientation=orientation).values
                for p in patch_list
            ]
        )
        return embed_batch(self, imgs, batch=batch)


def load_backend(spec):
    """Load and validate an inference backend.

    The graph is probed with one 1x3x224x224 input; the output must be a
    1 x expected_dim vector, otherwise the tap is misconfigured.
    """
    if spec.extractor_id == "identity":
        return IdentityBackend()
    executor = GraphExecutor.from_file(spec.graph_path)
    if spec.input_name and executor.input_name != spec.input_name:
        raise EmbeddingError(
            f"graph input is {executor.input_name!r}, expected {spec.input_name!r}"
        )
    if spec.output_name and executor.output_name != spec.output_name:
        raise EmbeddingError(
            f"graph output is {executor.output_name!r}, expected {spec.output_name!r}"
        )
    probe = np.zeros((1, 3, 224, 224), dtype=np.float32)
    out = executor.run(probe)
    if out.shape != (1, spec.expected_dim):
        raise ShapeMismatchError(
            f"{spec.extractor_id}: graph produced shape {out.shape}, "
            f"expected (1, {spec.expected_dim})"
        )
    return OnnxBackend(spec, executor)


def embed_batch(backend, imgs, batch=16):
    """Run images through the backend in batches; the result is
    independent of the batch size up to float accumulation order."""
    imgs = np.asarray(imgs)
    if imgs.ndim == 3:
        imgs = imgs[np.newaxis]
    rows = []
    for start in range(0, len(imgs), max(batch, 1)):
        rows.append(backend.run(imgs[start : start + batch]))
    return np.concatenate(rows, axis=0)


def fit_standardizer(m):
    """Per-dimension mean and population std over training rows."""
    if m.standardized:
        raise EmbeddingError("matrix is already standardized")
    if m.n_rows < 2:
        raise EmbeddingError("need at least 2 rows to fit a standardizer")
    values = np.asarray(m.values, dtype=np.float64)
    mean = values.mean(axis=0)
    std = np.maximum(values.std(axis=0), STD_FLOOR)  # population std
    return Standardizer(mean=mean, std=std)


def apply_standardizer(s, m):
    if m.dim != len(s.mean):
        raise EmbeddingError(f"dimension mismatch: {m.dim} vs {len(s.mean)}")
    values = (np.asarray(m.values, dtype=np.float64) - s.mean) / s.std
    return replace(m, values=values, standardized=True)


def invert_standardizer(s, m):
    values = np.asarray(m.values, dtype=np.float64) * s.std + s.mean
    return replace(m, values=values, standardized=False)


STANDARDIZER_MAGIC = b"STD1"


def save_standardizer(s, path):
    with open(path, "wb") as fh:
        fh.write(STANDARDIZER_MAGIC)
        fh.write(struct.pack("<I", len(s.mean)))
        fh.write(np.ascontiguousarray(s.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(s.std, dtype="<f8").tobytes())


def load_standardizer(path):
    with open(path, "rb") as fh:
        if fh.read(4) != STANDARDIZER_MAGIC:
            raise EmbeddingError(f"{path}: not a standardizer file")
        (d,) = struct.unpack("<I", fh.read(4))
        mean = np.frombuffer(fh.read(8 * d), dtype="<f8").copy()
        std = np.frombuffer(fh.read(8 * d), dtype="<f8").copy()
    return Standardizer(mean=mean, std=std)


@dataclass(frozen=True)
class PcaProjection:
    mean: np.ndarray
    components: np.ndarray  # [n_components, d]


def fit_pca(m, n_components):
    """PCA on training rows (optional dimensionality equalization)."""
    values = np.asarray(m.values, dtype=np.float64)
    mean = values.mean(axis=0)
    _, _, vt = np.linalg.svd(values - mean, full_matrices=False)
    return PcaProjection(mean=mean, components=vt[:n_components])


def apply_pca(p, m):
    values = (np.asarray(m.values, dtype=np.float64) - p.mean) @ p.components.T
    return replace(m, values=values, extractor_id=m.extractor_id + "+pca")


def write_cache(m, path):
    """Feature cache: magic FCH1, u32 d, u64 N, u8 standardized,
    u8 orientation, length-prefixed extractor id, N*d row-major float32
    LE, then a per-row provenance trailer (u16 clip-id length, clip id
    utf-8, u32 frame offset)."""
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<IQBB", m.dim, m.n_rows, int(m.standardized),
                             _ORIENT_CODES[m.orientation]))
        ident = m.extractor_id.encode("utf-8")
        fh.write(struct.pack("<H", len(ident)))
        fh.write(ident)
        fh.write(np.ascontiguousarray(m.values, dtype="<f4").tobytes())
        for clip_id, offset in m.row_meta:
            cid = clip_id.encode("utf-8")
            fh.write(struct.pack("<H", len(cid)))
            fh.write(cid)
            fh.write(struct.pack("<I", offset))


def read_cache(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise CacheError(f"{path}: bad magic {magic!r}")
        header = fh.read(14)
        if len(header) != 14:
            raise CacheError(f"{path}: truncated header")
        d, n, standardized, orient_code = struct.unpack("<IQBB", header)
        if orient_code not in _CODE_ORIENTS:
            raise CacheError(f"{path}: unknown orientation code {orient_code}")
        (ident_len,) = struct.unpack("<H", fh.read(2))
        extractor_id = fh.read(ident_len).decode("utf-8")
        payload = fh.read(n * d * 4)
        if len(payload) != n * d * 4:
            raise CacheError(f"{path}: truncated feature payload")
        values = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
        row_meta = []
        for _ in range(n):
            raw = fh.read(2)
            if len(raw) != 2:
                raise CacheError(f"{path}: truncated provenance trailer")
            (cid_len,) = struct.unpack("<H", raw)
            clip_id = fh.read(cid_len).decode("utf-8")
            (offset,) = struct.unpack("<I", fh.read(4))
            row_meta.append((clip_id, offset))
    return FeatureMatrix(
        values=values,
        row_meta=tuple(row_meta),
        extractor_id=extractor_id,
        standardized=bool(standardized),
        orientation=_CODE_ORIENTS[orient_code],
    )
