"""Classical saliency maps used by the guided and transport policies.

Maps are returned as ``(H, W)`` float arrays that are non-negative and sum to
one. A map with no signal at all (e.g. from a constant image) becomes the
uniform distribution so that guided policies still have something to follow.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import check_image
from .errors import ParameterError
from .masks import partition

LUMA = np.array([0.299, 0.587, 0.114])


def luminance(x: np.ndarray) -> np.ndarray:
    x = check_image(x)
    if x.shape[2] == 1:
        return x[:, :, 0].copy()
    return x @ LUMA


def normalize_map(raw: np.ndarray) -> np.ndarray:
    raw = np.maximum(np.asarray(raw, dtype=np.float64), 0.0)
    total = raw.sum()
    if not np.isfinite(total) or total <= 0.0:
        return np.full(raw.shape, 1.0 / raw.size)
    return raw / total


def sobel_saliency(x: np.ndarray) -> np.ndarray:
    """Gradient magnitude of the luminance from 3x3 Sobel kernels (edge replication)."""
    lum = luminance(x)
    gx = ndimage.sobel(lum, axis=1, mode="nearest")
    gy = ndimage.sobel(lum, axis=0, mode="nearest")
    return normalize_map(np.hypot(gx, gy))


def spectral_residual_saliency(x: np.ndarray, sigma: float = 2.5) -> np.ndarray:
    """Spectral-residual saliency of the luminance channel."""
    lum = luminance(x)
    if np.ptp(lum) == 0.0:
        return normalize_map(np.zeros_like(lum))
    spectrum = np.fft.fft2(lum)
    log_amp = np.log(np.maximum(np.abs(spectrum), 1e-12))
    phase = np.angle(spectrum)
    # the spectrum is periodic, so the box filter wraps around
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    sal = ndimage.gaussian_filter(sal, sigma=sigma, mode="wrap")
    return normalize_map(sal)


DETECTORS = {
    "sobel": sobel_saliency,
    "spectral": spectral_residual_saliency,
}


def saliency_map(x: np.ndarray, detector: str = "sobel") -> np.ndarray:
    try:
        fn = DETECTORS[detector]
    except KeyError:
        raise ParameterError(
            f"unknown saliency detector {detector!r}; choose from {sorted(DETECTORS)}"
        ) from None
    return fn(x)


def block_reduce(s: np.ndarray, b: int) -> np.ndarray:
    """Sum a pixel map into a ``b x b`` grid; trailing blocks take the remainder rows/cols."""
    s = np.asarray(s, dtype=np.float64)
    h, w = s.shape
    if not 1 <= b <= min(h, w):
        raise ParameterError(f"blocks per side must be in [1, {min(h, w)}], got {b}")
    ry = partition(h, b)[:-1]
    rx = partition(w, b)[:-1]
    return np.add.reduceat(np.add.reduceat(s, ry, axis=0), rx, axis=1)
