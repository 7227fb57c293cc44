"""Desk-scale optimal-transported cutting (a block-level PuzzleMix).

The pixel grid is split into ``b x b`` blocks. Two exact discrete steps
replace the original continuous optimisation:

1. **Block mask.** Keep exactly ``k = round(lam * b^2)`` blocks of ``x_i``
   maximising ``sum_kept sal_i + sum_dropped sal_j``. Rewriting the objective
   as ``sum(sal_j) + sum_kept (sal_i - sal_j)`` shows it is separable per
   block, so keeping the ``k`` largest differences is optimal.
2. **Transport.** Fill every dropped position with a distinct block of
   ``x_j`` no further than ``max_shift`` blocks away (Chebyshev distance),
   maximising the carried saliency. This is a linear assignment problem,
   solved with the Hungarian method.

The label weight is the pixel share of ``x_i``, which transport never changes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import assignment
from .core import check_image, check_lambda, round_half_up
from .errors import ParameterError, ShapeError
from .masks import partition
from .saliency import block_reduce, saliency_map

# Tie-break: among equally salient plans prefer the smallest total squared
# displacement, so blocks stay in place whenever that costs nothing.
MOVE_PENALTY = 1e-12


@dataclass(frozen=True)
class BlockGrid:
    sal_i: np.ndarray
    sal_j: np.ndarray

    def __post_init__(self):
        si = np.asarray(self.sal_i, dtype=np.float64)
        sj = np.asarray(self.sal_j, dtype=np.float64)
        if si.ndim != 2 or si.shape[0] != si.shape[1] or si.shape != sj.shape:
            raise ShapeError(f"block grids must be equal b x b arrays, got {si.shape}, {sj.shape}")
        for name, g in (("sal_i", si), ("sal_j", sj)):
            if np.any(g < 0) or abs(g.sum() - 1.0) > 1e-6:
                raise ParameterError(f"{name} must be non-negative and sum to 1")
        object.__setattr__(self, "sal_i", si)
        object.__setattr__(self, "sal_j", sj)

    @property
    def b(self) -> int:
        return self.sal_i.shape[0]


@dataclass(frozen=True)
class TransportPlan:
    """Source block (flat index into the donor grid) for every dropped position."""

    assignment: dict[int, int]
    max_shift: int
    feasible: bool = True

    def objective(self, sal_j: np.ndarray) -> float:
        flat = np.asarray(sal_j, dtype=np.float64).ravel()
        return float(sum(flat[s] for s in self.assignment.values()))


def optimize_block_mask(grid: BlockGrid, lam: float) -> np.ndarray:
    lam = check_lambda(lam)
    b = grid.b
    k = round_half_up(lam * b * b)
    gain = (grid.sal_i - grid.sal_j).ravel()
    order = np.argsort(-gain, kind="stable")
    mask = np.zeros(b * b, dtype=np.int8)
    mask[order[:k]] = 1
    return mask.reshape(b, b)


def mask_objective(grid: BlockGrid, mask: np.ndarray) -> float:
    keep = np.asarray(mask).astype(bool)
    return float(grid.sal_i[keep].sum() + grid.sal_j[~keep].sum())


def _block_coords(b: int) -> tuple[np.ndarray, np.ndarray]:
    return np.divmod(np.arange(b * b), b)


def squared_shift(b: int) -> np.ndarray:
    """``(b^2, b^2)`` matrix of squared Euclidean distances between block positions."""
    r, c = _block_coords(b)
    return (r[:, None] - r[None, :]) ** 2 + (c[:, None] - c[None, :]) ** 2


def chebyshev(b: int) -> np.ndarray:
    """``(b^2, b^2)`` matrix of Chebyshev distances between block positions."""
    r, c = _block_coords(b)
    return np.maximum(np.abs(r[:, None] - r[None, :]), np.abs(c[:, None] - c[None, :]))


def transport_blocks(
    sal_j: np.ndarray,
    mask: np.ndarray,
    max_shift: int,
    compatible: Optional[np.ndarray] = None,
) -> TransportPlan:
    """Assign donor blocks to the zero positions of ``mask``.

    Args:
        sal_j: ``b x b`` donor block saliency.
        mask: ``b x b`` binary block mask (0 = filled from the donor).
        max_shift: largest allowed Chebyshev move, in blocks.
        compatible: optional ``(b^2, b^2)`` boolean matrix; ``[p, s]`` False
            forbids moving source ``s`` to position ``p`` (e.g. unequal sizes).
    """
    sal_j = np.asarray(sal_j, dtype=np.float64)
    mask = np.asarray(mask)
    if sal_j.ndim != 2 or sal_j.shape[0] != sal_j.shape[1] or mask.shape != sal_j.shape:
        raise ShapeError(f"saliency {sal_j.shape} and mask {mask.shape} must be equal b x b")
    if max_shift < 0:
        raise ParameterError(f"max_shift must be >= 0, got {max_shift}")
    b = sal_j.shape[0]
    targets = np.flatnonzero(mask.ravel() == 0)
    identity = TransportPlan({int(p): int(p) for p in targets}, max_shift)
    if targets.size == 0 or max_shift == 0:
        return identity

    allowed = chebyshev(b)[targets] <= max_shift
    if compatible is not None:
        allowed &= np.asarray(compatible, dtype=bool)[targets]
    flat = sal_j.ravel()
    weight = flat[None, :] - MOVE_PENALTY * squared_shift(b)[targets]
    # forbidden moves sit far below any feasible total
    sentinel = -(targets.size + 1) * (np.abs(flat).max() + 1.0) * 2.0
    weight[~allowed] = sentinel
    cols = assignment.solve_max(weight)
    if not np.all(allowed[np.arange(targets.size), cols]):
        warnings.warn("no feasible block transport; keeping blocks in place", RuntimeWarning)
        return TransportPlan(identity.assignment, max_shift, feasible=False)
    return TransportPlan({int(p): int(s) for p, s in zip(targets, cols)}, max_shift)


def block_slices(h: int, w: int, b: int) -> list[tuple[slice, slice]]:
    ey = partition(h, b)
    ex = partition(w, b)
    return [
        (slice(ey[r], ey[r + 1]), slice(ex[c], ex[c + 1])) for r in range(b) for c in range(b)
    ]


def _same_shape_blocks(h: int, w: int, b: int) -> np.ndarray:
    sl = block_slices(h, w, b)
    shapes = [(s[0].stop - s[0].start, s[1].stop - s[1].start) for s in sl]
    return np.array([[p == q for q in shapes] for p in shapes])


def puzzle_mix(
    x_i: np.ndarray,
    x_j: np.ndarray,
    lam: float,
    rng: Optional[np.random.Generator] = None,
    blocks: int = 4,
    max_shift: int = 1,
    saliency: str = "sobel",
) -> tuple[np.ndarray, np.ndarray, TransportPlan]:
    """Mix two images by saliency-optimal block selection and transport.

    Returns ``(image, pixel_mask, plan)``; ``corrected_lambda(pixel_mask)`` is the
    label weight of ``x_i``. ``rng`` is accepted for interface symmetry: every
    step is deterministic given the images and ``lam``.
    """
    x_i = check_image(x_i, "x_i")
    x_j = check_image(x_j, "x_j")
    if x_i.shape != x_j.shape:
        raise ShapeError(f"image shapes differ: {x_i.shape} vs {x_j.shape}")
    lam = check_lambda(lam)
    h, w = x_i.shape[:2]
    if not 1 <= blocks <= min(h, w):
        raise ParameterError(f"blocks must be in [1, {min(h, w)}], got {blocks}")

    grid = BlockGrid(
        block_reduce(saliency_map(x_i, saliency), blocks),
        block_reduce(saliency_map(x_j, saliency), blocks),
    )
    bmask = optimize_block_mask(grid, lam)
    plan = transport_blocks(grid.sal_j, bmask, max_shift, _same_shape_blocks(h, w, blocks))

    sl = block_slices(h, w, blocks)
    out = x_i.copy()
    pixel_mask = np.ones((h, w))
    for pos, src in plan.assignment.items():
        out[sl[pos]] = x_j[sl[src]]
        pixel_mask[sl[pos]] = 0.0
    return out, pixel_mask, plan
