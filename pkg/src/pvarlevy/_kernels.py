"""Compiled inner loops for p-variation dynamic programming."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _dist(x, i, j):
    s = 0.0
    for k in range(x.shape[1]):
        u = x[j, k] - x[i, k]
        s += u * u
    return math.sqrt(s)


@njit(cache=True)
def pvar_dp(x, p, stop_at):
    """best[j] = max_{i<j} best[i] + |x_j - x_i|^p with ball-tree pruning.

    Returns (best, back, last) where ``last`` is the last index processed;
    processing stops early once best reaches ``stop_at``.  Ties go to the
    smaller predecessor index.
    """
    n = x.shape[0]
    best = np.zeros(n)
    back = -np.ones(n, dtype=np.int64)
    if n <= 1:
        return best, back, n - 1
    size = 1
    while size < n:
        size *= 2
    lo = np.empty(2 * size, dtype=np.int64)
    hi = np.empty(2 * size, dtype=np.int64)
    rad = np.zeros(2 * size)
    for i in range(size):
        lo[size + i] = i
        hi[size + i] = i + 1
    for k in range(size - 1, 0, -1):
        lo[k] = lo[2 * k]
        hi[k] = hi[2 * k + 1]
        if lo[2 * k + 1] < n:
            r = _dist(x, lo[k], lo[2 * k + 1]) + rad[2 * k + 1]
            rad[k] = max(rad[2 * k], r)
        else:
            rad[k] = rad[2 * k]
    stack = np.empty(64, dtype=np.int64)
    for j in range(1, n):
        cur = best[j - 1] + _dist(x, j - 1, j) ** p
        arg = j - 1
        # the predecessors chosen for j-1 are good first guesses for j
        i = back[j - 1]
        for _ in range(4):
            if i < 0:
                break
            v = best[i] + _dist(x, i, j) ** p
            if v > cur or (v == cur and i < arg):
                cur = v
                arg = i
            i = back[i]
        top = 0
        stack[top] = 1
        top += 1
        while top > 0:
            top -= 1
            k = stack[top]
            a = lo[k]
            if a >= j:
                continue
            b = min(hi[k], j)
            if b - a == 1:
                v = best[a] + _dist(x, a, j) ** p
                if v > cur or (v == cur and a < arg):
                    cur = v
                    arg = a
                continue
            # slack absorbs rounding in the ball radii
            bound = best[b - 1] + ((_dist(x, a, j) + rad[k]) * (1.0 + 1e-12)) ** p
            if bound < cur:
                continue
            stack[top] = 2 * k
            top += 1
            stack[top] = 2 * k + 1
            top += 1
        best[j] = cur
        back[j] = arg
        if cur >= stop_at:
            return best, back, j
    return best, back, n - 1


@njit(cache=True)
def pvar_dp_windowed(t, x, p, mesh):
    """Chains from the first to the last node whose steps satisfy t_j - t_i <= mesh.

    Unreachable nodes keep best = -inf.
    """
    n = x.shape[0]
    best = np.full(n, -np.inf)
    back = -np.ones(n, dtype=np.int64)
    best[0] = 0.0
    for j in range(1, n):
        i = j - 1
        while i >= 0 and t[j] - t[i] <= mesh:
            if best[i] > -np.inf:
                v = best[i] + _dist(x, i, j) ** p
                if v >= best[j]:
                    best[j] = v
                    back[j] = i
            i -= 1
    return best, back
