"""Power STFT and dB-scaled Mel spectrograms.

Defaults follow the pipeline parameters: 1024-point FFT with a periodic
Hann window, hop 256, 64 Mel bands over 0..8000 Hz, slaney scale with
area normalization, per-clip max referencing and an 80 dB floor.
"""

from dataclasses import dataclass, field

import numpy as np

AMIN = 1e-10


class SpectralError(Exception):
    pass


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 1024
    hop: int = 256
    center: bool = True

    def __post_init__(self):
        if self.hop > self.n_fft:
            raise SpectralError("hop must not exceed n_fft")
        if self.n_fft <= 0 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise SpectralError("n_fft must be a positive power of two")


@dataclass(frozen=True)
class PowerSpectrogram:
    values: np.ndarray  # [n_fft/2+1, T]
    config: StftConfig
    sample_rate_hz: int


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # [n_mels, n_fft/2+1]
    f_min: float
    f_max: float
    scale: str  # "slaney" | "htk"


@dataclass(frozen=True)
class MelSpectrogram:
    values_db: np.ndarray  # [n_mels, T]
    ref_db: float
    config: StftConfig = field(default_factory=StftConfig)
    sample_rate_hz: int = 16000


def _hann_periodic(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_power(w, cfg=StftConfig()):
    """Power spectrogram |STFT|^2.

    With center=True the signal is reflect-padded by n_fft/2 on both
    sides, so frame t is centered on sample t*hop and the frame count is
    floor(len/hop) + 1.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    if x.size == 0:
        raise SpectralError("empty input")
    if not np.all(np.isfinite(x)):
        raise SpectralError("non-finite samples")
    n_fft, hop = cfg.n_fft, cfg.hop
    if cfg.center:
        x = np.pad(x, n_fft // 2, mode="reflect")
    if len(x) < n_fft:
        raise SpectralError(f"input too short for n_fft={n_fft}")
    n_frames = (len(x) - n_fft) // hop + 1
    frames = np.lib.stride_tricks.as_strided(
        x,
        shape=(n_frames, n_fft),
        strides=(x.strides[0] * hop, x.strides[0]),
    )
    window = _hann_periodic(n_fft)
    spec = np.fft.rfft(frames * window, axis=1)
    power = (spec.real**2 + spec.imag**2).T  # [bins, T]
    return PowerSpectrogram(values=power, config=cfg, sample_rate_hz=w.sample_rate_hz)


def hz_to_mel(f, scale="slaney"):
    f = np.asarray(f, dtype=np.float64)
    if scale == "htk":
        return 2595.0 * np.log10(1.0 + f / 700.0)
    if scale != "slaney":
        raise SpectralError(f"unknown mel scale {scale!r}")
    # linear below 1 kHz, logarithmic above
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    logstep = np.log(6.4) / 27.0
    mel = f / f_sp
    above = f >= min_log_hz
    mel = np.where(above, min_log_hz / f_sp + np.log(np.maximum(f, 1e-30) / min_log_hz) / logstep, mel)
    return mel


def mel_to_hz(m, scale="slaney"):
    m = np.asarray(m, dtype=np.float64)
    if scale == "htk":
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    if scale != "slaney":
        raise SpectralError(f"unknown mel scale {scale!r}")
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    hz = m * f_sp
    above = m >= min_log_mel
    return np.where(above, min_log_hz * np.exp(logstep * (m - min_log_mel)), hz)


def build_mel_filterbank(sr=16000, n_fft=1024, n_mels=64, f_min=0.0, f_max=None, scale="slaney"):
    """Triangular Mel filterbank [n_mels, n_fft/2+1].

    Filter edges are equally spaced on the chosen mel scale; under slaney
    each filter is divided by its bandwidth (area normalization).
    """
    if f_max is None:
        f_max = sr / 2.0
    if not (0 <= f_min < f_max <= sr / 2.0):
        raise SpectralError(f"invalid frequency range [{f_min}, {f_max}] for sr={sr}")
    n_bins = n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, sr / 2.0, n_bins)
    mel_edges = np.linspace(hz_to_mel(f_min, scale), hz_to_mel(f_max, scale), n_mels + 2)
    hz_edges = mel_to_hz(mel_edges, scale)

    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lower, center, upper = hz_edges[m], hz_edges[m + 1], hz_edges[m + 2]
        up = (fft_freqs - lower) / max(center - lower, 1e-30)
        down = (upper - fft_freqs) / max(upper - center, 1e-30)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    if scale == "slaney":
        enorm = 2.0 / (hz_edges[2 : n_mels + 2] - hz_edges[:n_mels])
        weights *= enorm[:, np.newaxis]
    if np.any(weights.max(axis=1) <= 0):
        raise SpectralError("degenerate filterbank: empty filter row (n_mels too large?)")
    return MelFilterbank(weights=weights, f_min=float(f_min), f_max=float(f_max), scale=scale)


def mel_db(p, fb, top_db=80.0):
    """Project a power spectrogram onto the Mel filterbank and convert to
    dB referenced to the per-clip maximum (peak at 0 dB, floor -top_db)."""
    if p.values.shape[0] != fb.weights.shape[1]:
        raise SpectralError(
            f"bin count mismatch: spectrogram {p.values.shape[0]}, filterbank {fb.weights.shape[1]}"
        )
    mel_power = fb.weights @ p.values
    db = 10.0 * np.log10(np.maximum(mel_power, AMIN))
    ref = float(db.max())
    db = np.maximum(db - ref, -top_db)
    return MelSpectrogram(
        values_db=db, ref_db=ref, config=p.config, sample_rate_hz=p.sample_rate_hz
    )


MELS_MAGIC = b"MELS"


def write_mels(m, path):
    """Debug dump: magic MELS, u32 rows, u32 cols, row-major float32 LE."""
    rows, cols = m.values_db.shape
    with open(path, "wb") as fh:
        fh.write(MELS_MAGIC)
        fh.write(np.uint32(rows).tobytes())
        fh.write(np.uint32(cols).tobytes())
        fh.write(m.values_db.astype("<f4").tobytes())


def read_mels(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MELS_MAGIC:
            raise SpectralError(f"{path}: bad magic {magic!r}")
        rows = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        cols = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
        if data.size != rows * cols:
            raise SpectralError(f"{path}: truncated file")
    return data.reshape(rows, cols).astype(np.float64)
