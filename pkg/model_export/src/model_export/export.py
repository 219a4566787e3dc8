"""Graph export with pre-write verification.

The exported file is only published after the serialized bytes have been
parsed back and executed on 16 random standardized probe images, and the
tap activations match the source network within 1e-4 max abs. A sidecar
JSON records the weight checksum, tap name and dimension; a lockfile
pins the weight checksums across exports.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nets, runtime, wire

EXPORTABLE = tuple(sorted(nets.ARCHITECTURES))
EXPORT_VERSION = 1
OPSET = 13
IR_VERSION = 8
N_PROBES = 16
PROBE_TOL = 1e-4
INPUT_SHAPE = (1, 3, 224, 224)


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class ExportSpec:
    extractor_id: str
    out_path: str
    seed: int = 0
    weights_path: str = ""  # optional .npz checkpoint; random init otherwise

    def __post_init__(self):
        if self.extractor_id not in nets.ARCHITECTURES:
            raise ExportError(
                f"unknown model {self.extractor_id!r}; choose from {EXPORTABLE}"
            )

    @property
    def expected_dim(self):
        return nets.ARCHITECTURES[self.extractor_id][1]


def _probes(seed):
    rng = np.random.default_rng([seed, 0x9E3779B9])
    return rng.standard_normal((N_PROBES, 3, 224, 224)).astype(np.float32)


def weights_checksum(inits):
    digest = hashlib.sha256()
    for name in sorted(inits):
        digest.update(name.encode("utf-8"))
        digest.update(inits[name].tobytes())
    return digest.hexdigest()


def _update_lockfile(lock_path, extractor_id, checksum):
    lines = {}
    path = Path(lock_path)
    if path.exists():
        for line in path.read_text().splitlines():
            if line.strip():
                key, value = line.split("\t")
                lines[key] = value
    if lines.get(extractor_id, checksum) != checksum:
        raise ExportError(
            f"{extractor_id}: weight checksum {checksum[:12]} conflicts with "
            f"pinned {lines[extractor_id][:12]} in {lock_path}"
        )
    lines[extractor_id] = checksum
    path.write_text("".join(f"{k}\t{v}\n" for k, v in sorted(lines.items())))


def export_model(spec, lockfile=None, opset=OPSET, ir_version=IR_VERSION):
    """Build, verify and write one graph. Returns the sidecar dict."""
    arch_fn, expected_dim = nets.ARCHITECTURES[spec.extractor_id]
    params = (
        nets.NpzParams(spec.weights_path)
        if spec.weights_path
        else nets.RandomParams(spec.seed)
    )
    probes = _probes(spec.seed)
    tracer = nets.Tracer(params, probes)
    output_name, tap = arch_fn(tracer)
    reference = tracer.values[output_name]
    if reference.shape != (N_PROBES, expected_dim):
        raise ExportError(
            f"{spec.extractor_id}: tap produced shape {reference.shape}, "
            f"expected ({N_PROBES}, {expected_dim})"
        )

    checksum = weights_checksum(tracer.inits)
    metadata = {
        "extractor_id": spec.extractor_id,
        "tap": tap,
        "dim": str(expected_dim),
        "export_version": str(EXPORT_VERSION),
        "weights_sha256": checksum,
    }
    data = wire.model(
        wire.graph(tracer.nodes, tracer.inits, nets.Tracer.INPUT,
                   list(INPUT_SHAPE), output_name),
        metadata=metadata, opset=opset, ir_version=ir_version,
    )

    # round-trip verification before anything touches the filesystem
    replayed = runtime.run_graph(data, probes)
    diff = float(np.max(np.abs(replayed - reference)))
    if diff > PROBE_TOL:
        raise ExportError(
            f"{spec.extractor_id}: verification failed, max abs diff {diff:.3g} "
            f"> {PROBE_TOL}"
        )

    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    sidecar = {
        "model": spec.extractor_id,
        "tap": tap,
        "dim": expected_dim,
        "opset": opset,
        "ir_version": ir_version,
        "export_version": EXPORT_VERSION,
        "weights_sha256": checksum,
        "file_sha256": hashlib.sha256(data).hexdigest(),
        "probe_max_abs_diff": diff,
    }
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    if lockfile:
        _update_lockfile(lockfile, spec.extractor_id, checksum)
    return sidecar
