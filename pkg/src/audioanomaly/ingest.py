"""WAV decoding and MIMII-style dataset indexing.

Dataset layout expected under the root directory:

    <machine_type>/<id_XX>/{normal,abnormal}/*.wav

with machine_type in {fan, pump, slider, valve} and id_XX in
{id_00, id_02, id_04, id_06} (mapped to machine ids M0/M2/M4/M6).
Labels come from the directory name only, never from audio content.
"""

import struct
import warnings
import wave
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

MACHINE_TYPES = ("fan", "pump", "slider", "valve")
MACHINE_IDS = ("M0", "M2", "M4", "M6")
_ID_DIR_MAP = {"id_00": "M0", "id_02": "M2", "id_04": "M4", "id_06": "M6"}

MANIFEST_VERSION = 1
_MANIFEST_COLUMNS = ("path", "machine_type", "machine_id", "label", "split", "seed")


class IngestError(Exception):
    """Base class for ingest failures."""


class WavFormatError(IngestError):
    """Malformed or unsupported WAV file."""


class EmptyDatasetError(IngestError):
    """No WAV files found under the dataset root."""


class SplitError(IngestError):
    """Train/test split cannot be constructed as requested."""


class ManifestError(IngestError):
    """Malformed manifest file."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate_hz: int

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise WavFormatError(f"non-positive sample rate {self.sample_rate_hz}")

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class RecordingMeta:
    path: str  # relative to the dataset root
    machine_type: str
    machine_id: str
    label: str  # "normal" | "anomalous"
    snr_tag: str = ""
    split: str = ""  # "", "train" or "test"
    seed: int | None = None


@dataclass(frozen=True)
class DatasetIndex:
    entries: tuple
    root: str

    def __len__(self):
        return len(self.entries)

    def filter(self, machine_type=None, machine_id=None, label=None):
        out = []
        for e in self.entries:
            if machine_type is not None and e.machine_type != machine_type:
                continue
            if machine_id is not None and e.machine_id != machine_id:
                continue
            if label is not None and e.label != label:
                continue
            out.append(e)
        return DatasetIndex(entries=tuple(out), root=self.root)


def decode_wav(path):
    """Decode a PCM16 mono WAV file to a Waveform.

    Samples are scaled by 1/32768 exactly. Multi-channel files (the source
    dataset is recorded with a microphone array) are reduced to channel 0
    with a warning.
    """
    path = Path(path)
    if not path.is_file():
        raise WavFormatError(f"no such file: {path}")
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError, struct.error) as exc:
        raise WavFormatError(f"malformed WAV file {path}: {exc}") from exc
    if sampwidth != 2:
        raise WavFormatError(
            f"{path}: unsupported sample width {sampwidth * 8} bit (need PCM 16-bit)"
        )
    data = np.frombuffer(raw, dtype="<i2")
    if n_channels > 1:
        warnings.warn(
            f"{path}: {n_channels} channels, using channel 0 only", stacklevel=2
        )
        data = data[::n_channels]
    samples = data.astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate_hz=rate)


def encode_wav(w, path):
    """Write a Waveform back to mono PCM16. Inverse of decode_wav for
    values that came from PCM16 (round trip is the identity)."""
    clipped = np.clip(np.asarray(w.samples, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    pcm = np.round(clipped * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate_hz)
        wf.writeframes(pcm.tobytes())


def _parse_entry(root, wav_path):
    rel = wav_path.relative_to(root)
    parts = rel.parts
    if len(parts) < 4:
        return None
    machine_type, id_dir, label_dir = parts[-4], parts[-3], parts[-2]
    if machine_type not in MACHINE_TYPES:
        raise IngestError(f"unknown machine type directory: {machine_type!r}")
    if id_dir not in _ID_DIR_MAP:
        raise IngestError(f"unknown machine id directory: {id_dir!r}")
    if label_dir not in ("normal", "abnormal"):
        raise IngestError(f"unknown label directory: {label_dir!r}")
    return RecordingMeta(
        path=str(rel),
        machine_type=machine_type,
        machine_id=_ID_DIR_MAP[id_dir],
        label="anomalous" if label_dir == "abnormal" else "normal",
    )


def index_dataset(root):
    """Index every WAV under root into a DatasetIndex.

    Entries are deduplicated by path and sorted lexicographically, so the
    index is a pure function of the directory contents.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"dataset root does not exist: {root}")
    seen = {}
    for wav_path in root.rglob("*.wav"):
        entry = _parse_entry(root, wav_path)
        if entry is not None:
            seen[entry.path] = entry
    if not seen:
        raise EmptyDatasetError(f"no WAV files found under {root}")
    entries = tuple(seen[p] for p in sorted(seen))
    return DatasetIndex(entries=entries, root=str(root))


# --- seeded selection -------------------------------------------------------
#
# The split must be reproducible across implementations, so it uses an
# explicitly specified PRNG rather than a library default: splitmix64
# (64-bit state; Steele et al. 2014) driving a Fisher-Yates shuffle with
# modulo reduction. The stream for each (machine_type, machine_id) group
# is seeded with seed XOR FNV-1a(group name) so groups are independent.

_MASK64 = (1 << 64) - 1


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


def _fnv1a(text):
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def _shuffled(items, seed_state):
    items = list(items)
    state = seed_state
    for i in range(len(items) - 1, 0, -1):
        state, z = _splitmix64(state)
        j = z % (i + 1)
        items[i], items[j] = items[j], items[i]
    return items


def split_train_test(index, seed, n_test_normal=150):
    """Per (machine_type, machine_id) group: move n_test_normal random
    normal clips plus up to n_test_normal random anomalous clips into the
    test set; the remaining normal clips form the training set. Anomalous
    clips never enter train."""
    groups = {}
    for e in index.entries:
        groups.setdefault((e.machine_type, e.machine_id), []).append(e)

    train, test = [], []
    for key in sorted(groups):
        machine_type, machine_id = key
        entries = groups[key]
        normals = [e for e in entries if e.label == "normal"]
        anomalous = [e for e in entries if e.label == "anomalous"]
        if len(normals) < n_test_normal:
            raise SplitError(
                f"{machine_type}/{machine_id}: {len(normals)} normal clips, "
                f"need at least {n_test_normal}"
            )
        stream = (seed & _MASK64) ^ _fnv1a(f"{machine_type}/{machine_id}")
        shuffled_normal = _shuffled(normals, stream)
        shuffled_anom = _shuffled(anomalous, _splitmix64(stream)[0] ^ _fnv1a("anomalous"))
        n_anom = min(n_test_normal, len(anomalous))
        test_part = shuffled_normal[:n_test_normal] + shuffled_anom[:n_anom]
        train_part = shuffled_normal[n_test_normal:]
        train.extend(replace(e, split="train", seed=seed) for e in train_part)
        test.extend(replace(e, split="test", seed=seed) for e in test_part)

    train.sort(key=lambda e: e.path)
    test.sort(key=lambda e: e.path)
    return (
        DatasetIndex(entries=tuple(train), root=index.root),
        DatasetIndex(entries=tuple(test), root=index.root),
    )


def write_manifest(entries, path):
    """Write a manifest: a versioned header line, a column comment, then
    one tab-separated record per clip."""
    lines = [f"manifest_version: {MANIFEST_VERSION}"]
    lines.append("# " + "\t".join(_MANIFEST_COLUMNS))
    for e in entries:
        seed = "-" if e.seed is None else str(e.seed)
        split = e.split or "-"
        lines.append(
            "\t".join([e.path, e.machine_type, e.machine_id, e.label, split, seed])
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("manifest_version:"):
        raise ManifestError(f"{path}: missing manifest_version header")
    version = lines[0].split(":", 1)[1].strip()
    if version != str(MANIFEST_VERSION):
        raise ManifestError(f"{path}: unsupported manifest version {version!r}")
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != len(_MANIFEST_COLUMNS):
            raise ManifestError(f"{path}:{lineno}: expected {len(_MANIFEST_COLUMNS)} fields")
        p, machine_type, machine_id, label, split, seed = fields
        entries.append(
            RecordingMeta(
                path=p,
                machine_type=machine_type,
                machine_id=machine_id,
                label=label,
                split="" if split == "-" else split,
                seed=None if seed == "-" else int(seed),
            )
        )
    return entries
