"""Hungarian algorithm (Kuhn-Munkres) for rectangular assignment problems.

Shortest-augmenting-path formulation with row/column potentials, O(n^2 m).
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray


def hungarian(cost: ArrayLike) -> tuple[NDArray, NDArray]:
    """Minimum-cost one-to-one assignment.

    Parameters
    ----------
    cost : (n, m) array_like
        Finite cost matrix. Rectangular matrices are allowed; ``min(n, m)``
        pairs are returned.

    Returns
    -------
    rows, cols : ndarray of int
        Matched index pairs, sorted by row.
    """
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if C.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")

    transposed = C.shape[0] > C.shape[1]
    if transposed:
        C = C.T
    n, m = C.shape

    # 1-based bookkeeping; column 0 is the virtual start of each augmenting path
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=int)  # owner[j]: row assigned to column j (0 = free)
    way = np.zeros(m + 1, dtype=int)

    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cols = np.nonzero(free)[0] + 1
            reduced = C[i0 - 1, cols - 1] - u[i0] - v[cols]
            better = reduced < minv[cols]
            minv[cols[better]] = reduced[better]
            way[cols[better]] = j0
            j1 = cols[np.argmin(minv[cols])]
            delta = minv[j1]
            used_idx = np.nonzero(used)[0]
            u[owner[used_idx]] += delta
            v[used_idx] -= delta
            minv[cols] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    pairs = [(owner[j] - 1, j - 1) for j in range(1, m + 1) if owner[j] != 0]
    rows = np.array([p[0] for p in pairs], dtype=int)
    cols = np.array([p[1] for p in pairs], dtype=int)
    if transposed:
        rows, cols = cols, rows
    order = np.argsort(rows)
    return rows[order], cols[order]
