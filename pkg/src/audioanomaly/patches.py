"""Patch extraction and RGB rendering.

A Mel spectrogram is sliced into 64x64 patches (stride 32 frames), each
patch is min-max normalized, mapped through the viridis LUT, bilinearly
upscaled to 224x224 and standardized with the ImageNet channel statistics.
"""

from dataclasses import dataclass

import numpy as np

from .viridis import VIRIDIS_LUT

PATCH_WIDTH = 64
PATCH_STRIDE = 32
RENDER_SIZE = 224

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])

# Row 0 of a MelSpectrogram is the lowest band; images put row 0 at the
# top, so the default rendering flips the band axis (low frequency at the
# bottom). The choice changes embeddings and is recorded in feature caches.
ORIENT_LOW_BOTTOM = "low-bottom"
ORIENT_LOW_TOP = "low-top"


class PatchError(Exception):
    pass


@dataclass(frozen=True)
class Patch:
    values_db: np.ndarray  # [64 bands, 64 frames]
    clip_id: str
    frame_offset: int


@dataclass(frozen=True)
class RgbTensor:
    values: np.ndarray  # [3, 224, 224]
    standardized: bool
    clip_id: str = ""
    frame_offset: int = 0


@dataclass(frozen=True)
class ColorMap:
    lut: np.ndarray  # [256, 3], channels in [0, 1]

    def __post_init__(self):
        if self.lut.shape != (256, 3):
            raise PatchError(f"colormap LUT must be 256x3, got {self.lut.shape}")
        if self.lut.min() < 0 or self.lut.max() > 1:
            raise PatchError("colormap LUT channels must lie in [0, 1]")


def viridis():
    return ColorMap(lut=np.array(VIRIDIS_LUT))


def extract_patches(m, clip_id="", width=PATCH_WIDTH, stride=PATCH_STRIDE):
    """Slide a window of `width` frames across the spectrogram with the
    given stride; trailing frames that do not fill a window are dropped."""
    n_bands, n_frames = m.values_db.shape
    if n_frames < width:
        raise PatchError(f"spectrogram has {n_frames} frames, patch needs {width}")
    count = (n_frames - width) // stride + 1
    return [
        Patch(
            values_db=m.values_db[:, off : off + width].copy(),
            clip_id=clip_id,
            frame_offset=off,
        )
        for off in (i * stride for i in range(count))
    ]


def patch_to_unit(p):
    """Min-max normalize patch values to [0, 1]; a constant patch maps to
    all zeros."""
    v = p.values_db if isinstance(p, Patch) else np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise PatchError("non-finite patch values")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v, dtype=np.float64)
    return (v - lo) / (hi - lo)


def apply_colormap(u, cmap=None):
    """Map unit values through the LUT: index = round(u*255), half away
    from zero, so 0.5 lands on entry 128. Returns [3, H, W]."""
    u = np.asarray(u, dtype=np.float64)
    if u.min() < 0 or u.max() > 1:
        raise PatchError("colormap input must lie in [0, 1]")
    if cmap is None:
        cmap = viridis()
    idx = np.floor(u * 255.0 + 0.5).astype(np.intp)  # round half up
    rgb = cmap.lut[idx]  # [H, W, 3]
    return np.moveaxis(rgb, -1, 0)


def _axis_weights(n_in, n_out):
    # half-pixel centers (align_corners=False)
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def resize_bilinear(img, size=RENDER_SIZE):
    """Bilinear resize of [C, H, W] to [C, size, size] using the
    half-pixel-center convention."""
    img = np.asarray(img, dtype=np.float64)
    _, h, w = img.shape
    y0, y1, fy = _axis_weights(h, size)
    x0, x1, fx = _axis_weights(w, size)
    rows = img[:, y0, :] * (1.0 - fy)[np.newaxis, :, np.newaxis]
    rows += img[:, y1, :] * fy[np.newaxis, :, np.newaxis]
    out = rows[:, :, x0] * (1.0 - fx) + rows[:, :, x1] * fx
    return out


def imagenet_standardize(img, clip_id="", frame_offset=0):
    """Per-channel (v - mean) / std with the ImageNet statistics."""
    img = np.asarray(img, dtype=np.float64)
    if img.min() < 0 or img.max() > 1:
        raise PatchError("standardization input must lie in [0, 1]")
    values = (img - IMAGENET_MEAN[:, np.newaxis, np.newaxis]) / IMAGENET_STD[
        :, np.newaxis, np.newaxis
    ]
    return RgbTensor(
        values=values, standardized=True, clip_id=clip_id, frame_offset=frame_offset
    )


def imagenet_destandardize(t):
    return t.values * IMAGENET_STD[:, np.newaxis, np.newaxis] + IMAGENET_MEAN[
        :, np.newaxis, np.newaxis
    ]


def render_patch(p, cmap=None, orientation=ORIENT_LOW_BOTTOM, normalization=None):
    """Full render path: normalize, orient, colormap, upscale, standardize.

    `normalization` may be a (lo, hi) pair to normalize against per-clip
    extrema instead of the patch's own.
    """
    if normalization is None:
        u = patch_to_unit(p)
    else:
        lo, hi = normalization
        if hi == lo:
            u = np.zeros_like(p.values_db)
        else:
            u = np.clip((p.values_db - lo) / (hi - lo), 0.0, 1.0)
    if orientation == ORIENT_LOW_BOTTOM:
        u = u[::-1, :]
    elif orientation != ORIENT_LOW_TOP:
        raise PatchError(f"unknown orientation {orientation!r}")
    rgb = apply_colormap(u, cmap)
    big = resize_bilinear(rgb)
    return imagenet_standardize(big, clip_id=p.clip_id, frame_offset=p.frame_offset)


def write_ppm(img, path):
    """Export an unstandardized [3, H, W] image in [0, 1] as binary PPM."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise PatchError("expected [3, H, W] image")
    _, h, w = img.shape
    pixels = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.moveaxis(pixels, 0, -1).tobytes())
