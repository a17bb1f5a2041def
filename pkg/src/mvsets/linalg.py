"""Dirichlet solves, discrete Green's functions and L-subharmonic fields."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, PreconditionError
from .operator import OFFSETS

log = logging.getLogger(__name__)

TOL_LIN = 1e-10
# Green's functions feed obstacle data and flux identities, so they are
# solved well below the generic linear tolerance.
TOL_GREEN = 1e-14


def _pcg(A, b, minv, x, tol_abs, max_iter, floor_scale=0.0):
    """Jacobi-preconditioned CG stopping on the max-norm of the true residual.

    The threshold is never taken below the rounding level of ``A @ x``,
    ``16 eps * floor_scale * max|x|``, which a tiny ``tol_abs`` could
    otherwise demand.
    """
    eps16 = 16 * np.finfo(float).eps * floor_scale
    r = b - A @ x
    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(max_iter + 1):
        thresh = max(tol_abs, eps16 * float(np.abs(x).max(initial=0.0)))
        if np.abs(r).max() <= thresh:
            r_true = b - A @ x
            if np.abs(r_true).max() <= thresh:
                return x, it, float(np.abs(r_true).max())
            r = r_true
            z = minv * r
            p = z.copy()
            rz = float(r @ z)
        if it == max_iter:
            break
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if it % 500 == 499:
            r = b - A @ x
        z = minv * r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    res = float(np.abs(b - A @ x).max())
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations "
                           f"(residual {res:.3e} > {tol_abs:.3e})", residual=res)


def solve_dirichlet(op, rhs, boundary, tol=TOL_LIN, max_iter=None, method="cg", x0=None):
    """Solve ``L u = rhs`` at unknown nodes with ``u = boundary`` elsewhere.

    Parameters
    ----------
    op : DiscreteOperator
    rhs, boundary : ndarray or float
        Right-hand side (only unknown nodes are read) and the Dirichlet
        values (only fixed nodes are read).
    tol : float
        Stop once ``max |L u - rhs| <= tol * max(1, max |rhs|)``.
    max_iter : int, optional
        Defaults to ``50 * N``.
    method : {"cg", "direct"}
        ``"direct"`` uses a cached sparse LU of the operator instead of CG.

    Returns
    -------
    ndarray
        The solution on the full grid; inactive nodes are zero.
    """
    shape = op.shape
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), shape)
    boundary = np.broadcast_to(np.asarray(boundary, dtype=float), shape)
    flat_u, flat_b, K_uu, K_ub = op._blocks
    h2 = op.h ** 2
    f_u = rhs.ravel()[flat_u]
    g_b = boundary.ravel()[flat_b]
    b = -h2 * f_u - K_ub @ g_b
    scale = max(1.0, float(np.abs(f_u).max()) if f_u.size else 1.0)

    if method == "direct":
        x = op.factorized(b)
    elif method == "cg":
        if max_iter is None:
            max_iter = 50 * op.grid.n
        d = K_uu.diagonal()
        minv = 1.0 / d
        start = np.zeros_like(b) if x0 is None else np.asarray(x0, float).ravel()[flat_u].copy()
        floor = 2.0 * float(d.max(initial=0.0))
        x, iters, res = _pcg(K_uu, b, minv, start, tol * scale * h2, max_iter, floor)
        log.debug("CG converged in %d iterations, residual %.3e", iters, res / h2)
    else:
        raise ValueError(f"unknown method {method!r}")

    u = np.zeros(shape[0] * shape[1])
    u[flat_b] = g_b
    u[flat_u] = x
    return u.reshape(shape)


def solve_on_subset(op, rhs, values, subset, tol=TOL_LIN):
    """Solve ``L u = rhs`` on the nodes in ``subset``; every other node keeps ``values``.

    Used for harmonic replacement inside a ball.  ``subset`` must lie within
    the operator's unknown nodes.
    """
    import scipy.sparse.linalg as spla

    subset = np.asarray(subset, dtype=bool) & op.unknown
    values = np.asarray(values, dtype=float)
    inside = np.flatnonzero(subset.ravel())
    outside = np.flatnonzero(~subset.ravel())
    K = op.K.tocsr()
    rows = K[inside]
    A = rows[:, inside].tocsc()
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), op.shape).ravel()[inside]
    b = -op.h ** 2 * rhs - rows[:, outside] @ values.ravel()[outside]
    u = values.copy().ravel()
    u[inside] = spla.spsolve(A, b)
    return u.reshape(op.shape)


@dataclass(frozen=True, eq=False)
class GreensFunction:
    """Discrete Green's function ``-L G = delta_h`` with zero boundary values.

    ``boundary_flux`` is the total flux of ``A grad G`` through the Dirichlet
    boundary, summed edge by edge.
    """

    field: np.ndarray
    source: tuple
    boundary_flux: float

    @property
    def values(self):
        return self.field


def _boundary_flux(op, G):
    unk = op.unknown
    n = op.grid.n
    flux = 0.0
    for k, (di, dj) in enumerate(OFFSETS):
        w = op.weights[k]
        i0, i1 = max(0, -di), n - max(0, di)
        j0, j1 = max(0, -dj), n - max(0, dj)
        nb_unknown = np.zeros_like(unk)
        nb_unknown[i0:i1, j0:j1] = unk[i0 + di:i1 + di, j0 + dj:j1 + dj]
        nb_vals = np.zeros_like(G)
        nb_vals[i0:i1, j0:j1] = G[i0 + di:i1 + di, j0 + dj:j1 + dj]
        src = unk & ~nb_unknown & (w != 0)
        flux += float(np.sum(w[src] * (G[src] - nb_vals[src])))
    return flux


def greens_function(op, x0=None, method="direct", tol=TOL_GREEN, min_distance=4):
    """Green's function of ``op`` with pole at node ``x0`` (default: grid centre).

    The pole must sit at least ``min_distance`` cells from any fixed node.
    """
    node = op.grid.resolve_node(x0)
    i, j = node
    m = min_distance - 1
    window = op.unknown[max(0, i - m):i + m + 1, max(0, j - m):j + m + 1]
    if window.shape != (2 * m + 1, 2 * m + 1) or not window.all():
        raise PreconditionError(
            f"source {node} is closer than {min_distance} cells to the boundary")
    rhs = np.zeros(op.shape)
    rhs[node] = -1.0 / op.h ** 2
    G = solve_dirichlet(op, rhs, 0.0, tol=tol, method=method)
    G.setflags(write=False)
    return GreensFunction(field=G, source=node, boundary_flux=_boundary_flux(op, G))


def make_subharmonic(op, q, boundary, tol=TOL_LIN, method="cg"):
    """Return ``v`` with ``L v = q >= 0`` and the given boundary values."""
    q = np.broadcast_to(np.asarray(q, dtype=float), op.shape)
    if np.any(q[op.unknown] < 0):
        raise PreconditionError("q must be nonnegative for a subsolution")
    return solve_dirichlet(op, q, boundary, tol=tol, method=method)
