"""36-bin HOG appearance descriptor: 2x2 blocks, 9 unsigned orientation bins each."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import DimensionError, InvalidPatchError

PATCH_SIZE = 64
N_BLOCKS = 2
N_BINS = 9
DESCRIPTOR_LEN = N_BLOCKS * N_BLOCKS * N_BINS


def _resample(patch: np.ndarray, size: int) -> np.ndarray:
    h, w = patch.shape
    # pixel-center aligned bilinear sampling
    rows = (np.arange(size) + 0.5) * (h / size) - 0.5
    cols = (np.arange(size) + 0.5) * (w / size) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(patch, [rr, cc], order=1, mode="nearest")


def compute_descriptor(patch) -> np.ndarray:
    """Descriptor of a grayscale patch as a length-36 float array.

    Block order is top-left, top-right, bottom-left, bottom-right. Each
    block histogram is L1-normalized; gradient-free blocks stay zero.
    """
    img = np.asarray(patch, dtype=float)
    if img.ndim == 3:
        img = img.mean(axis=2)
    if img.ndim != 2 or img.size == 0:
        raise InvalidPatchError(f"patch must be a non-empty 2D array, got shape {img.shape}")
    if min(img.shape) < 4:
        raise InvalidPatchError(f"patch {img.shape} has fewer than 2x2 interior pixels")
    if not np.all(np.isfinite(img)):
        raise InvalidPatchError("patch has non-finite pixels")

    img = _resample(img, PATCH_SIZE)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = img[:, 2:] - img[:, :-2]
    gy[1:-1, :] = img[2:, :] - img[:-2, :]
    mag = np.hypot(gx, gy)
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    bins = np.minimum((angle // (180.0 / N_BINS)).astype(int), N_BINS - 1)

    half = PATCH_SIZE // N_BLOCKS
    out = np.zeros(DESCRIPTOR_LEN)
    k = 0
    for by in range(N_BLOCKS):
        for bx in range(N_BLOCKS):
            sl = (slice(by * half, (by + 1) * half), slice(bx * half, (bx + 1) * half))
            hist = np.bincount(bins[sl].ravel(), weights=mag[sl].ravel(), minlength=N_BINS)
            total = hist.sum()
            if total > 0:
                hist = hist / total
            out[k * N_BINS:(k + 1) * N_BINS] = hist
            k += 1
    return out


def descriptor_distance(a, b) -> float:
    """L1 distance between two descriptors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (DESCRIPTOR_LEN,) or b.shape != (DESCRIPTOR_LEN,):
        raise DimensionError(f"descriptors must have length {DESCRIPTOR_LEN}, got {a.shape} and {b.shape}")
    return float(np.abs(a - b).sum())
