"""Numba sweep kernels.  All loops are sequential and deterministic."""
import numpy as np
from numba import njit

DI = np.array([1, -1, 0, 0, 1, -1, -1, 1], dtype=np.int64)
DJ = np.array([0, 0, 1, -1, 1, -1, 1, -1], dtype=np.int64)


@njit(cache=True)
def _neighbour_sum(u, W, i, j):
    s = 0.0
    for k in range(8):
        w = W[k, i, j]
        if w != 0.0:
            s += w * u[i + DI[k], j + DJ[k]]
    return s


@njit(cache=True)
def psor_pass(u, g, b, W, diag, free, omega, i0, i1, j0, j1, reverse):
    """One lexicographic projected SOR pass over the window [i0,i1) x [j0,j1).

    Minimizes ``u.K.u - 2 b.u`` coordinate-wise subject to ``u <= g``.
    Returns the largest nodal change.
    """
    maxdu = 0.0
    ni = i1 - i0
    nj = j1 - j0
    for a in range(ni):
        i = i1 - 1 - a if reverse else i0 + a
        for c in range(nj):
            j = j1 - 1 - c if reverse else j0 + c
            if not free[i, j]:
                continue
            target = (b[i, j] + _neighbour_sum(u, W, i, j)) / diag[i, j]
            old = u[i, j]
            new = old + omega * (target - old)
            if new > g[i, j]:
                new = g[i, j]
            du = abs(new - old)
            if du > maxdu:
                maxdu = du
            u[i, j] = new
    return maxdu


@njit(cache=True)
def bernoulli_pass(u, W, diag, free, h2, eps_reg, eps_p, omega, reverse):
    """One thresholded Gauss-Seidel pass for ``Q(u) + h^2 * penalty(u)``, u >= 0.

    ``eps_reg > 0`` uses the ramp penalty ``min(t / eps_reg, 1)``;
    ``eps_reg == 0`` uses the exact indicator ``t > eps_p``.  Every nodal
    subproblem is solved exactly by comparing candidates; over-relaxation is
    only applied when the old and new values sit on the same smooth branch,
    which keeps each update energy-nonincreasing.

    Returns ``(max change, number of support flips)``.
    """
    n = u.shape[0]
    maxdu = 0.0
    flips = 0
    for a in range(n):
        i = n - 1 - a if reverse else a
        for c in range(n):
            j = n - 1 - c if reverse else c
            if not free[i, j]:
                continue
            d = diag[i, j]
            s = _neighbour_sum(u, W, i, j)
            tstar = s / d
            old = u[i, j]
            if eps_reg > 0.0:
                best = 0.0
                ebest = 0.0
                t1 = (s - 0.5 * h2 / eps_reg) / d
                if t1 > eps_reg:
                    t1 = eps_reg
                if t1 > 0.0:
                    e1 = d * t1 * t1 - 2.0 * s * t1 + h2 * t1 / eps_reg
                    if e1 < ebest:
                        best = t1
                        ebest = e1
                t2 = tstar if tstar > eps_reg else eps_reg
                e2 = d * t2 * t2 - 2.0 * s * t2 + h2
                if e2 < ebest:
                    best = t2
                    ebest = e2
                    if old >= eps_reg and omega != 1.0:
                        t = old + omega * (t2 - old)
                        if t >= eps_reg:
                            best = t
                new = best
                was_pos = old >= eps_reg
                is_pos = new >= eps_reg
            else:
                new = 0.0
                if tstar > eps_p and d * tstar * tstar > h2:
                    new = tstar
                    if old > eps_p and omega != 1.0:
                        t = old + omega * (tstar - old)
                        if t > eps_p:
                            new = t
                was_pos = old > eps_p
                is_pos = new > eps_p
            if was_pos != is_pos:
                flips += 1
            du = abs(new - old)
            if du > maxdu:
                maxdu = du
            u[i, j] = new
    return maxdu, flips
