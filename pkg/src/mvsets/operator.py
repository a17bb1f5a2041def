"""Finite-volume assembly of ``L u = div(A grad u)`` on a cell-centred grid.

The discrete energy is a weighted sum of squared differences over graph
edges::

    Q(u) = sum_edges w_e (u_p - u_q)**2  ~  integral of (A grad u) . grad u

Face edges carry the harmonically averaged diagonal entries.  The cross
term ``2 a12 u_x u_y`` on the dual square with corners a=(i,j), b=(i+1,j),
c=(i,j+1), d=(i+1,j+1) equals ``a12/2 * ((u_d-u_a)**2 - (u_b-u_c)**2)``
when the gradient is averaged over the square, so it becomes two diagonal
edges of weight +-a12/2.  The stiffness matrix ``K`` is half the Hessian of
``Q`` and ``-L = K / h**2`` on unknown nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, GridError

# neighbour offsets: E, W, N, S, NE, SW, NW, SE
OFFSETS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (-1, 1), (1, -1)],
                   dtype=np.int64)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    grid: object
    coeffs: object
    weights: np.ndarray   # (8, n, n) edge weight from node to each neighbour
    K: sp.csr_matrix      # stiffness over all n*n nodes

    @property
    def h(self):
        return self.grid.h

    @property
    def shape(self):
        return self.grid.shape

    @property
    def field(self):
        return self.coeffs.field

    @property
    def unknown(self):
        return self.grid.unknown

    @cached_property
    def diag(self):
        d = self.K.diagonal().reshape(self.shape)
        d.setflags(write=False)
        return d

    @property
    def nine_point(self):
        return bool(np.any(self.weights[4:] != 0))

    @cached_property
    def _blocks(self):
        flat_u = np.flatnonzero(self.grid.unknown.ravel())
        flat_b = np.flatnonzero((self.grid.active & ~self.grid.unknown).ravel())
        rows = self.K[flat_u]
        return flat_u, flat_b, rows[:, flat_u].tocsr(), rows[:, flat_b].tocsr()

    @cached_property
    def factorized(self):
        """Sparse LU solve for the unknown block (computed on first use)."""
        from scipy.sparse.linalg import factorized
        return factorized(self._blocks[2].tocsc())

    def stencil(self, node):
        """3x3 coefficients of ``-L`` at ``node`` (row = x offset + 1)."""
        i, j = node
        s = np.zeros((3, 3))
        s[1, 1] = self.diag[i, j] / self.h ** 2
        for k, (di, dj) in enumerate(OFFSETS):
            s[1 + di, 1 + dj] = -self.weights[k, i, j] / self.h ** 2
        return s

    def quadratic_form(self, u):
        """``Q(u) = u^T K u``; equals ``<-Lu, u> h^2`` when u vanishes on the boundary."""
        v = np.asarray(u, dtype=float).ravel()
        return float(v @ (self.K @ v))

    def check_field(self, u, name="field"):
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise GridError(f"{name} has shape {u.shape}, operator grid is {self.shape}")
        return u


def assemble_operator(grid, coeffs):
    """Build the symmetric stencil and stiffness matrix for ``coeffs`` on ``grid``."""
    n = grid.n
    if coeffs.a11.shape != grid.shape:
        raise GridError("coefficients were sampled on a different grid")
    if grid.lateral_neumann and np.any(coeffs.corner != 0):
        raise AssemblyError("lateral Neumann walls are only supported for diagonal tensors")
    act = grid.active
    W = np.zeros((8, n, n))

    ex = np.where(act[:-1, :] & act[1:, :], coeffs.face_x, 0.0)
    W[0, :-1, :] = ex
    W[1, 1:, :] = ex
    ey = np.where(act[:, :-1] & act[:, 1:], coeffs.face_y, 0.0)
    W[2, :, :-1] = ey
    W[3, :, 1:] = ey
    half = 0.5 * coeffs.corner
    ed = np.where(act[:-1, :-1] & act[1:, 1:], half, 0.0)
    W[4, :-1, :-1] = ed
    W[5, 1:, 1:] = ed
    ea = np.where(act[1:, :-1] & act[:-1, 1:], -half, 0.0)
    W[6, 1:, :-1] = ea
    W[7, :-1, 1:] = ea

    idx = np.arange(n * n).reshape(n, n)
    pairs = [
        (idx[:-1, :], idx[1:, :], ex),
        (idx[:, :-1], idx[:, 1:], ey),
        (idx[:-1, :-1], idx[1:, 1:], ed),
        (idx[1:, :-1], idx[:-1, 1:], ea),
    ]
    p = np.concatenate([a.ravel() for a, _, _ in pairs])
    q = np.concatenate([b.ravel() for _, b, _ in pairs])
    w = np.concatenate([c.ravel() for _, _, c in pairs])
    keep = w != 0
    p, q, w = p[keep], q[keep], w[keep]
    K = sp.coo_matrix(
        (np.concatenate([w, w, -w, -w]),
         (np.concatenate([p, q, p, q]), np.concatenate([p, q, q, p]))),
        shape=(n * n, n * n)).tocsr()
    K.sum_duplicates()

    asym = abs(K - K.T)
    if asym.nnz and asym.max() != 0:
        raise AssemblyError(f"assembled stiffness is not symmetric (max |K-K^T| = {asym.max():.3e})")
    W.setflags(write=False)
    return DiscreteOperator(grid=grid, coeffs=coeffs, weights=W, K=K)


def build_operator(field, spec, lateral_neumann=False):
    """Convenience: grid + samples + assembly in one call."""
    from .coefficients import sample_coefficients
    from .grid import build_grid

    grid = build_grid(spec, lateral_neumann=lateral_neumann)
    return assemble_operator(grid, sample_coefficients(field, grid))


def apply_operator(op, u):
    """``L u`` at unknown nodes; zero on boundary and inactive nodes."""
    u = op.check_field(u, "u")
    Lu = -(op.K @ u.ravel()).reshape(op.shape) / op.h ** 2
    Lu[~op.unknown] = 0.0
    return Lu
