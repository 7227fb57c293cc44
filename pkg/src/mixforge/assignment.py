"""Dense O(n^3) Hungarian solver (shortest augmenting paths with potentials)."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def solve_min(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment of every row to a distinct column.

    Args:
        cost: ``(n, m)`` finite cost matrix with ``n <= m``.

    Returns:
        Integer array ``cols`` of length ``n``; row ``r`` is assigned ``cols[r]``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ShapeError(f"cost matrix must be 2-D, got shape {cost.shape}")
    n, m = cost.shape
    if n > m:
        raise ShapeError(f"need rows <= columns, got {n}x{m}")
    if n == 0:
        return np.zeros(0, dtype=int)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")

    # 1-based bookkeeping; column 0 is the virtual source of each augmentation.
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=int)
    way = np.zeros(m + 1, dtype=int)
    for row in range(1, n + 1):
        owner[0] = row
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    cols = np.empty(n, dtype=int)
    for j in range(1, m + 1):
        if owner[j]:
            cols[owner[j] - 1] = j - 1
    return cols


def solve_max(weight: np.ndarray) -> np.ndarray:
    """Maximum-weight assignment; see :func:`solve_min`."""
    return solve_min(-np.asarray(weight, dtype=np.float64))
