"""Compiled inner loops."""

import numpy as np
from numba import njit


@njit(cache=True)
def scan_finite_chain(cum, start, u):
    """State indices visited from ``start`` using one draw per step.

    Row inverse-CDF: the next state is the first ``j`` with ``u < cum[i, j]``.
    """
    n = u.shape[0]
    m = cum.shape[1]
    out = np.empty(n + 1, dtype=np.int64)
    cur = start
    out[0] = cur
    for j in range(n):
        x = u[j]
        k = 0
        while k < m - 1 and x >= cum[cur, k]:
            k += 1
        cur = k
        out[j + 1] = cur
    return out
