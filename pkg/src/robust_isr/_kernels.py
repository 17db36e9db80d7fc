"""Compiled value-iteration sweeps over the two-phase state space."""

import numba
import numpy as np


@numba.njit(cache=True)
def value_iteration_kernel(sense_best, move_gain, targets, counts, gamma, tol, max_iter, V):
    """Jacobi sweeps until the sup-norm change drops below ``tol``.

    ``sense_best[v]`` is the best sense-action reward at ``v`` plus its novelty
    bonus; ``move_gain[u]`` is ``-c_move + lambda_nov * n(u)``. ``V`` has shape
    ``(S, 2)`` (sense, move) and is not modified. Returns (V, n_iter, residual).
    """
    n = sense_best.shape[0]
    cur = V.copy()
    new = np.empty_like(cur)
    residual = np.inf
    k = 0
    while k < max_iter:
        residual = 0.0
        for v in range(n):
            s = sense_best[v] + gamma * cur[v, 1]
            best = -np.inf
            for j in range(counts[v]):
                u = targets[v, j]
                q = move_gain[u] + gamma * cur[u, 0]
                if q > best:
                    best = q
            new[v, 0] = s
            new[v, 1] = best
            d0 = abs(s - cur[v, 0])
            d1 = abs(best - cur[v, 1])
            if d0 > residual:
                residual = d0
            if d1 > residual:
                residual = d1
        cur, new = new, cur
        k += 1
        if residual < tol:
            break
    return cur, k, residual
