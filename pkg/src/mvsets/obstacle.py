"""Projected SOR for the obstacle problem whose noncontact set is D_R(x0).

The discrete problem is::

    minimize  J(u) = Q(u) - 2 h^2 sum_i f_i u_i   over  u <= g,  u = boundary on fixed nodes

with ``Q`` the operator's energy form.  For the mean-value instance the
obstacle is the Green's function ``G(., x0)`` and ``f = R**-2``, so that
``L u = -R**-2`` off the contact set.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConvergenceError, DomainMarginError, PreconditionError
from .linalg import greens_function
from .operator import apply_operator

log = logging.getLogger(__name__)

OMEGA = 1.5
PSOR_REL_TOL = 1e-10
KKT_REL_TOL = 1e-8
CONTACT_FACTOR = 1e3
MAX_SWEEPS = 400_000


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    """Data of one obstacle problem.

    ``forcing`` is the level ``f`` in ``L u = -f`` on the noncontact set; a
    scalar (``R**-2`` for the mean-value instance) or a per-node array.
    """

    operator: object
    obstacle: np.ndarray
    forcing: object
    boundary: np.ndarray
    radius: float = None

    def __post_init__(self):
        op = self.operator
        g = op.check_field(self.obstacle, "obstacle")
        bnd = op.check_field(np.broadcast_to(self.boundary, op.shape), "boundary")
        fixed = op.grid.active & ~op.unknown
        if np.any(bnd[fixed] > g[fixed]):
            raise PreconditionError("boundary values exceed the obstacle on fixed nodes")
        if self.radius is not None and not self.radius > 0:
            raise PreconditionError("radius must be positive")
        object.__setattr__(self, "obstacle", g)
        object.__setattr__(self, "boundary", bnd)

    @property
    def forcing_field(self):
        return np.broadcast_to(np.asarray(self.forcing, dtype=float), self.operator.shape)


@dataclass(frozen=True)
class KKTReport:
    """Residuals of the discrete complementarity system.

    With ``m = L u + f``:

    * ``max_feasibility_violation`` is ``max(u - g, 0)``;
    * ``max_stationarity_residual_on_noncontact`` is ``max |m|`` off the
      contact set, folded together with ``max(-m, 0)`` on it (the multiplier
      must be nonnegative where the constraint binds);
    * ``max_complementarity_product`` is ``max (g - u) * |m|``.
    """

    max_feasibility_violation: float
    max_stationarity_residual_on_noncontact: float
    max_complementarity_product: float
    sweeps_used: int
    tol: float
    scale: float = 1.0

    @property
    def passed(self):
        return (self.max_feasibility_violation <= self.tol
                and self.max_stationarity_residual_on_noncontact <= self.tol
                and self.max_complementarity_product <= self.tol * self.scale)


@dataclass(frozen=True, eq=False)
class ObstacleSolution:
    problem: ObstacleProblem
    u: np.ndarray
    contact_mask: np.ndarray
    sweeps: int
    kkt: KKTReport
    eps_c: float
    tol_kkt: float
    x0: tuple = None
    energy_history: tuple = field(default=(), repr=False)

    @property
    def w(self):
        """Height function ``g - u`` (``w_R`` for the mean-value instance)."""
        return self.problem.obstacle - self.u

    @property
    def R(self):
        return self.problem.radius

    @property
    def operator(self):
        return self.problem.operator

    @property
    def noncontact_mask(self):
        return self.operator.unknown & ~self.contact_mask


def discrete_energy(problem, u):
    op = problem.operator
    f = problem.forcing_field
    return op.quadratic_form(u) - 2.0 * op.h ** 2 * float(np.sum(f[op.unknown] * u[op.unknown]))


def _contact(problem, u, eps_c):
    return problem.operator.unknown & (problem.obstacle - u <= eps_c)


def _kkt(problem, u, eps_c, tol, sweeps):
    op = problem.operator
    unk = op.unknown
    g = problem.obstacle
    m = apply_operator(op, u) + problem.forcing_field
    gap = g - u
    contact = unk & (gap <= eps_c)
    free = unk & ~contact
    feas = float(max(0.0, np.max(-gap[unk]))) if unk.any() else 0.0
    stat = 0.0
    if free.any():
        stat = float(np.max(np.abs(m[free])))
    if contact.any():
        stat = max(stat, float(np.max(np.maximum(-m[contact], 0.0))))
    comp = float(np.max(np.maximum(gap[unk], 0.0) * np.abs(m[unk]))) if unk.any() else 0.0
    scale = max(1.0, float(np.max(gap[unk]))) if unk.any() else 1.0
    return KKTReport(feas, stat, comp, sweeps, tol, scale)


def kkt_residuals(sol):
    """Recompute the KKT report of ``sol`` from its fields alone."""
    return _kkt(sol.problem, sol.u, sol.eps_c, sol.tol_kkt, sol.sweeps)


def energy(sol):
    """Discrete ``J_R`` at the solution."""
    return discrete_energy(sol.problem, sol.u)


def _window(active_mask, pad):
    idx = np.nonzero(active_mask)
    n = active_mask.shape[0]
    if idx[0].size == 0:
        return None
    return (max(0, idx[0].min() - pad), min(n, idx[0].max() + pad + 1),
            max(0, idx[1].min() - pad), min(n, idx[1].max() + pad + 1))


def solve_obstacle(problem, omega=OMEGA, tol=None, tol_kkt=None, eps_c=None,
                   max_sweeps=MAX_SWEEPS, init=None, record_energy=False, x0=None):
    """Projected SOR with symmetric (forward then backward) lexicographic sweeps.

    Parameters
    ----------
    problem : ObstacleProblem
    omega : float
        Relaxation factor in ``[1, 2)``.
    tol : float, optional
        Nodal update threshold; defaults to ``1e-10 * max|g|``.
    tol_kkt : float, optional
        Residual threshold; defaults to ``1e-8 * max(|f|, 1)``.
    eps_c : float, optional
        Contact classification gap; defaults to ``1e3 * tol``.
    init : ndarray, optional
        Feasible starting point; the obstacle itself by default.
    record_energy : bool
        Store ``J`` after every pass in ``energy_history``.

    Sweeps cover the bounding box of the current noncontact set (plus two
    cells); convergence is only declared after a full-grid sweep and a
    from-scratch KKT check both pass.
    """
    if not 1.0 <= omega < 2.0:
        raise PreconditionError("omega must lie in [1, 2)")
    op = problem.operator
    unk = op.unknown
    g = problem.obstacle
    gmax = float(np.max(np.abs(g[unk]))) if unk.any() else 1.0
    fmax = float(np.max(np.abs(problem.forcing_field[unk]))) if unk.any() else 0.0
    tol = PSOR_REL_TOL * max(gmax, 1e-300) if tol is None else tol
    tol_kkt = KKT_REL_TOL * max(fmax, 1.0) if tol_kkt is None else tol_kkt
    eps_c = CONTACT_FACTOR * tol if eps_c is None else eps_c

    fixed = ~unk
    if init is None:
        u = np.array(g, dtype=float)
    else:
        u = np.minimum(np.array(init, dtype=float), g)
    u[fixed] = problem.boundary[fixed]
    u = np.ascontiguousarray(u)
    g_c = np.ascontiguousarray(g, dtype=float)
    b = np.ascontiguousarray(problem.forcing_field * op.h ** 2)
    W = np.ascontiguousarray(op.weights)
    diag = np.ascontiguousarray(op.diag)
    free = np.ascontiguousarray(unk)
    n = op.grid.n
    history = [discrete_energy(problem, u)] if record_energy else []

    def sweep(win):
        i0, i1, j0, j1 = win
        d1 = _kernels.psor_pass(u, g_c, b, W, diag, free, omega, i0, i1, j0, j1, False)
        if record_energy:
            history.append(discrete_energy(problem, u))
        d2 = _kernels.psor_pass(u, g_c, b, W, diag, free, omega, i0, i1, j0, j1, True)
        if record_energy:
            history.append(discrete_energy(problem, u))
        return max(d1, d2)

    full = (0, n, 0, n)
    sweeps = 2
    du = sweep(full)
    kkt = None
    while True:
        if du < tol:
            du_full = sweep(full)
            sweeps += 2
            if du_full < tol:
                kkt = _kkt(problem, u, eps_c, tol_kkt, sweeps)
                if kkt.passed:
                    break
        if sweeps >= max_sweeps:
            kkt = _kkt(problem, u, eps_c, tol_kkt, sweeps)
            raise ConvergenceError(
                f"PSOR sweep budget ({max_sweeps}) exhausted: {kkt}", residual=kkt)
        win = _window(unk & (g_c - u > 0), 2) or full
        du = sweep(win)
        sweeps += 2

    contact = _contact(problem, u, eps_c)
    u.setflags(write=False)
    contact.setflags(write=False)
    log.debug("PSOR converged after %d passes", sweeps)
    return ObstacleSolution(problem=problem, u=u, contact_mask=contact, sweeps=sweeps,
                            kkt=kkt, eps_c=eps_c, tol_kkt=tol_kkt, x0=x0,
                            energy_history=tuple(history))


def check_radius(op, x0, R, margin_factor=2.0):
    """Raise :class:`DomainMarginError` unless ``margin_factor*R + 4h`` fits around ``x0``."""
    node = op.grid.resolve_node(x0)
    room = op.grid.boundary_distance(node)
    need = margin_factor * R + 4 * op.h
    if need > room:
        raise DomainMarginError(
            f"R={R:g} needs {need:.4g} of room around node {node}, only {room:.4g} available")
    return node


def solve_mvt_problem(op, x0, R, green=None, margin_factor=2.0, **kwargs):
    """Solve the obstacle problem that defines ``D_R(x0)``.

    ``green`` may carry a precomputed :class:`~mvsets.linalg.GreensFunction`
    for the same pole.  Besides the a-priori radius check, the computed
    noncontact set must stay four cells away from the fixed nodes, which is
    where the solution is independent of the domain.
    """
    node = check_radius(op, x0, R, margin_factor)
    if green is None:
        green = greens_function(op, node)
    elif tuple(green.source) != tuple(node):
        raise PreconditionError("Green's function pole does not match x0")
    G = green.field
    problem = ObstacleProblem(op, G, 1.0 / R ** 2, G, radius=R)
    sol = solve_obstacle(problem, x0=node, **kwargs)
    ii, jj = np.nonzero(sol.noncontact_mask)
    if ii.size:
        n = op.grid.n
        cells = int(min(ii.min(), jj.min(), n - 1 - ii.max(), n - 1 - jj.max()))
        if cells < 4:
            raise DomainMarginError(f"D_{R:g} reaches within {cells} cells of the boundary")
    return sol
