"""Image similarity metrics (NCC, SSIM) and small image utilities.

Images are plain 2D float arrays; values are expected in [0, 1].
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionMismatch, IndivisibleFactor, ZeroVariance

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise DimensionMismatch("empty image")
    return a, b


def ncc(a, b) -> float:
    """Zero-normalized cross-correlation, in [-1, 1]."""
    a, b = _pair(a, b)
    a0 = a - a.mean()
    b0 = b - b.mean()
    saa = float(np.sum(a0 * a0))
    sbb = float(np.sum(b0 * b0))
    if saa == 0.0 or sbb == 0.0:
        raise ZeroVariance("ncc undefined for a constant image")
    r = float(np.sum(a0 * b0)) / np.sqrt(saa * sbb)
    return float(np.clip(r, -1.0, 1.0))


def ncc_or_zero(a, b) -> float:
    try:
        return ncc(a, b)
    except ZeroVariance:
        return 0.0


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, g1: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation with a symmetric 1D kernel
    k = g1.size
    rows = sliding_window_view(img, k, axis=0) @ g1
    return sliding_window_view(rows, k, axis=1) @ g1


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over all full 11x11 Gaussian windows (sigma 1.5)."""
    a, b = _pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise DimensionMismatch(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}"
        )
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    g1 = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    g1 /= g1.sum()

    mu_a = _filter_valid(a, g1)
    mu_b = _filter_valid(b, g1)
    # variances from E[x^2] - E[x]^2, clipped against roundoff
    s_aa = _filter_valid(a * a, g1) - mu_a * mu_a
    s_bb = _filter_valid(b * b, g1) - mu_b * mu_b
    s_ab = _filter_valid(a * b, g1) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (s_aa + s_bb + c2)
    return float(np.mean(num / den))


def downsample(a, factor: int) -> np.ndarray:
    """Block-mean pooling by an integer factor along both axes."""
    a = np.asarray(a, dtype=np.float64)
    factor = int(factor)
    if factor < 1:
        raise IndivisibleFactor(f"factor must be >= 1, got {factor}")
    h, w = a.shape
    if h % factor or w % factor:
        raise IndivisibleFactor(f"factor {factor} does not divide {a.shape}")
    if factor == 1:
        return a.copy()
    return a.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def minmax_normalize(a) -> np.ndarray:
    """Rescale to [0, 1]; a constant image maps to all zeros."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi <= lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def stack_frames(frames) -> np.ndarray:
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    shape = frames[0].shape
    for f in frames[1:]:
        if f.shape != shape:
            raise DimensionMismatch(f"frame shapes differ: {shape} vs {f.shape}")
    return np.stack(frames, axis=0)
