"""Fill-reducing ordering for grid-structured normal equations."""

from __future__ import annotations

import numpy as np


def nested_dissection(nx: int, ny: int, width: int = 2, leaf: int = 16) -> np.ndarray:
    """Geometric nested dissection of an ``nx`` by ``ny`` node grid.

    Returns flat indices ``i * ny + j`` in elimination order.  Separators are
    ``width`` lines thick; the normal equations of a 5-point residual couple
    nodes two steps apart, so ``width=2`` is needed to actually disconnect the
    halves.
    """
    order: list[int] = []
    stack = [(0, nx, 0, ny, False)]
    # iterative post-order: children first, then the separator
    while stack:
        i0, i1, j0, j1, emit = stack.pop()
        ni, nj = i1 - i0, j1 - j0
        if ni <= 0 or nj <= 0:
            continue
        if emit or ni * nj <= leaf or (ni <= width + 1 and nj <= width + 1):
            order.extend((i * ny + j) for i in range(i0, i1) for j in range(j0, j1))
            continue
        if ni >= nj:
            m = i0 + (ni - width) // 2
            stack.append((m, min(m + width, i1), j0, j1, True))
            stack.append((m + width, i1, j0, j1, False))
            stack.append((i0, m, j0, j1, False))
        else:
            m = j0 + (nj - width) // 2
            stack.append((i0, i1, m, min(m + width, j1), True))
            stack.append((i0, i1, m + width, j1, False))
            stack.append((i0, i1, j0, m, False))
    return np.asarray(order, dtype=np.int64)
