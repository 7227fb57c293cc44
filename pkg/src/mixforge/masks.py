"""Mask generators for the hand-crafted and Fourier-guided cutting policies.

All generators return ``(H, W)`` float64 arrays in which 1 keeps the pixel of
sample ``i`` and 0 takes it from sample ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import check_lambda, round_half_up
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class RectSpec:
    """Axis-aligned cut rectangle given by its center and nominal side lengths."""

    cx: int
    cy: int
    cut_w: int
    cut_h: int

    def bounds(self, h: int, w: int) -> tuple[int, int, int, int]:
        """Clipped ``(y1, y2, x1, x2)`` half-open bounds inside an ``h x w`` image."""
        x1 = self.cx - self.cut_w // 2
        y1 = self.cy - self.cut_h // 2
        return (
            min(max(y1, 0), h),
            min(max(y1 + self.cut_h, 0), h),
            min(max(x1, 0), w),
            min(max(x1 + self.cut_w, 0), w),
        )

    def clipped_area(self, h: int, w: int) -> int:
        y1, y2, x1, x2 = self.bounds(h, w)
        return (y2 - y1) * (x2 - x1)


def _check_hw(h: int, w: int) -> None:
    if h < 1 or w < 1:
        raise ShapeError(f"mask size must be positive, got {h}x{w}")


def partition(n: int, parts: int) -> np.ndarray:
    """Boundaries of ``parts`` equal slices of ``n``; the remainder joins the last slice."""
    step = n // parts
    edges = np.arange(parts + 1) * step
    edges[-1] = n
    return edges


def cut_sides(h: int, w: int, lam: float) -> tuple[int, int]:
    """Side lengths ``(cut_h, cut_w)`` of a cut removing a ``1 - lam`` share."""
    ratio = math.sqrt(1.0 - lam)
    return round_half_up(h * ratio), round_half_up(w * ratio)


def place_rect(h: int, w: int, cut_h: int, cut_w: int, cy: int, cx: int) -> RectSpec:
    # A cut as long as the image axis can only cover that whole axis.
    if cut_w >= w:
        cx = cut_w // 2
    if cut_h >= h:
        cy = cut_h // 2
    return RectSpec(cx=int(cx), cy=int(cy), cut_w=int(cut_w), cut_h=int(cut_h))


def rect_to_mask(h: int, w: int, rect: RectSpec) -> np.ndarray:
    mask = np.ones((h, w))
    y1, y2, x1, x2 = rect.bounds(h, w)
    mask[y1:y2, x1:x2] = 0.0
    return mask


def rect_mask(h: int, w: int, lam: float, rng: np.random.Generator) -> tuple[np.ndarray, RectSpec]:
    """CutMix mask: a zero rectangle with sides ``round(side * sqrt(1 - lam))``.

    The center is uniform over pixel positions and the rectangle is clipped to
    the image, so the realised area can only shrink (``mean(mask) >= lam`` up to
    rounding of the sides).
    """
    _check_hw(h, w)
    lam = check_lambda(lam)
    cut_h, cut_w = cut_sides(h, w, lam)
    cy = int(rng.integers(0, h))
    cx = int(rng.integers(0, w))
    rect = place_rect(h, w, cut_h, cut_w, cy, cx)
    return rect_to_mask(h, w, rect), rect


def grid_mask(h: int, w: int, n_cells: int, lam: float, rng: np.random.Generator) -> np.ndarray:
    """GridMix mask: keep exactly ``round(lam * n_cells**2)`` random cells."""
    _check_hw(h, w)
    lam = check_lambda(lam)
    if not 1 <= n_cells <= min(h, w):
        raise ParameterError(f"n_cells must be in [1, {min(h, w)}], got {n_cells}")
    n_units = n_cells * n_cells
    keep = round_half_up(lam * n_units)
    chosen = rng.permutation(n_units)[:keep]
    cells = np.zeros(n_units)
    cells[chosen] = 1.0
    cells = cells.reshape(n_cells, n_cells)
    ry = np.diff(partition(h, n_cells))
    rx = np.diff(partition(w, n_cells))
    return np.repeat(np.repeat(cells, ry, axis=0), rx, axis=1)


def _gaussian_bump_mean(d2: np.ndarray, sigma: float) -> float:
    return float(np.mean(-np.expm1(-d2 / (2.0 * sigma * sigma))))


def smooth_mask(
    h: int,
    w: int,
    lam: float,
    rng: np.random.Generator,
    tol: float = 1e-3,
    max_iter: int = 60,
) -> np.ndarray:
    """SmoothMix mask ``1 - exp(-|p - c|^2 / (2 sigma^2))`` with mean ``lam``.

    ``sigma`` is found by bisection in log space on ``[1e-2, 10 * max(h, w)]``;
    the bracket is widened when ``lam`` is beyond what it can reach.
    """
    _check_hw(h, w)
    lam = check_lambda(lam)
    cy = rng.uniform(0.0, h - 1)
    cx = rng.uniform(0.0, w - 1)
    if lam == 0.0:
        return np.zeros((h, w))
    if lam == 1.0:
        return np.ones((h, w))

    yy, xx = np.mgrid[0:h, 0:w]
    d2 = (yy - cy) ** 2 + (xx - cx) ** 2
    lo, hi = 1e-2, 10.0 * max(h, w)
    # mean is decreasing in sigma
    while _gaussian_bump_mean(d2, lo) < lam - tol and lo > 1e-8:
        lo /= 2.0
    while _gaussian_bump_mean(d2, hi) > lam + tol and hi < 1e30:
        hi *= 2.0
    log_lo, log_hi = math.log(lo), math.log(hi)
    sigma = hi
    for _ in range(max_iter):
        mid = 0.5 * (log_lo + log_hi)
        sigma = math.exp(mid)
        m = _gaussian_bump_mean(d2, sigma)
        if abs(m - lam) <= tol / 10:
            break
        if m > lam:
            log_lo = mid
        else:
            log_hi = mid
    return -np.expm1(-d2 / (2.0 * sigma * sigma))


def fourier_frequencies(h: int, w: int) -> np.ndarray:
    """Radial frequency ``sqrt((min(u, h-u)/h)^2 + (min(v, w-v)/w)^2)`` per FFT bin."""
    u = np.arange(h)
    v = np.arange(w)
    fu = np.minimum(u, h - u) / h
    fv = np.minimum(v, w - v) / w
    return np.sqrt(fu[:, None] ** 2 + fv[None, :] ** 2)


def fourier_field(h: int, w: int, decay: float, rng: np.random.Generator) -> np.ndarray:
    """Real low-frequency random field used to threshold FMix masks."""
    freq = fourier_frequencies(h, w)
    spectrum = rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))
    # Hermitian symmetrisation: S(u, v) = conj(S(-u, -v)) makes the inverse real.
    mirrored = np.conj(np.roll(spectrum[::-1, ::-1], shift=(1, 1), axis=(0, 1)))
    spectrum = 0.5 * (spectrum + mirrored)
    scale = np.zeros_like(freq)
    nz = freq > 0
    scale[nz] = 1.0 / freq[nz] ** decay
    return np.fft.ifft2(spectrum * scale).real


def top_k_mask(field: np.ndarray, k: int) -> np.ndarray:
    """Binary mask of the ``k`` largest values; ties go to the earlier pixel."""
    flat = field.ravel()
    order = np.argsort(-flat, kind="stable")
    mask = np.zeros(flat.size)
    mask[order[:k]] = 1.0
    return mask.reshape(field.shape)


def fourier_mask(
    h: int, w: int, lam: float, rng: np.random.Generator, decay: float = 3.0
) -> np.ndarray:
    """FMix mask: the ``round(lam * h * w)`` largest pixels of a 1/f^decay field."""
    _check_hw(h, w)
    lam = check_lambda(lam)
    if not decay > 0:
        raise ParameterError(f"decay must be positive, got {decay}")
    field = fourier_field(h, w, decay, rng)
    return top_k_mask(field, round_half_up(lam * h * w))


def resize_paste_mask(
    h: int, w: int, tau: float, rng: np.random.Generator
) -> tuple[np.ndarray, RectSpec]:
    """ResizeMix paste region of ``round(tau*h) x round(tau*w)`` fully inside the image."""
    _check_hw(h, w)
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"tau must lie in (0, 1), got {tau}")
    ph = round_half_up(tau * h)
    pw = round_half_up(tau * w)
    y1 = int(rng.integers(0, h - ph + 1))
    x1 = int(rng.integers(0, w - pw + 1))
    rect = RectSpec(cx=x1 + pw // 2, cy=y1 + ph // 2, cut_w=pw, cut_h=ph)
    return rect_to_mask(h, w, rect), rect


def apply_mask(x_i: np.ndarray, x_j: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-pixel blend ``mask * x_i + (1 - mask) * x_j`` over all channels."""
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ShapeError(f"image shapes differ: {x_i.shape} vs {x_j.shape}")
    if x_i.ndim != 3 or mask.shape != x_i.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match image {x_i.shape}")
    m = mask[:, :, None]
    out = m * x_i + (1.0 - m) * x_j
    out = np.where(x_i == x_j, x_i, out)
    return np.clip(out, 0.0, 1.0)
