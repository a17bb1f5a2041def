"""Local minimizers of the one-phase functional

    J_a(u) = Q(u) + h^2 * #{u > eps_p},    u >= 0,  u = phi on fixed nodes,

and checks of their free-boundary behaviour (nondegeneracy, two-sided
density, local minimality, and the growth step built on mean-value sets).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from . import _kernels
from .errors import ConvergenceError, PreconditionError
from .grid import GridSpec, build_grid
from .linalg import greens_function, solve_dirichlet, solve_on_subset
from .mvset import boundary_cells, extract_mvset, mv_average
from .obstacle import solve_mvt_problem
from .operator import apply_operator, assemble_operator, build_operator
from .coefficients import CoefficientField, sample_coefficients

log = logging.getLogger(__name__)

EPS_P_REL = 1e-8
OMEGA = 1.5
TOL_REL = 1e-10
KKT_TOL = 1e-8
MAX_SWEEPS = 200_000
MIN_COARSE = 17


def bernoulli_energy(op, u, eps_p):
    """``Q(u) + h^2 * #{u > eps_p}`` over unknown nodes."""
    u = op.check_field(u, "u")
    return op.quadratic_form(u) + op.h ** 2 * int(np.count_nonzero(u[op.unknown] > eps_p))


@dataclass(frozen=True, eq=False)
class BernoulliState:
    """A discrete local minimizer of ``J_a``.

    ``restart_energies`` lists the final energy of every initialization in
    the order harmonic, collar, coarse; the lowest one was kept.
    """

    operator: object
    u: np.ndarray
    phi: np.ndarray
    energy: float
    eps_p: float
    sweeps: int = 0
    restart_energies: tuple = ()
    start: str = ""
    energy_history: tuple = field(default=(), repr=False)

    @property
    def positivity_mask(self):
        return self.operator.grid.active & (self.u > self.eps_p)

    @property
    def zero_mask(self):
        return self.operator.unknown & ~self.positivity_mask

    @property
    def free_boundary_cells(self):
        """Positive unknown cells with a zero unknown 4-neighbour."""
        pos = self.positivity_mask & self.operator.unknown
        return boundary_cells(pos, outside=self.zero_mask)

    def interior_harmonicity(self):
        """``max |L u|`` on positive cells whose whole stencil is positive."""
        op = self.operator
        pos = self.positivity_mask | ~op.grid.active
        full = ndimage.binary_erosion(pos, structure=np.ones((3, 3)), border_value=1)
        sel = full & op.unknown
        if not sel.any():
            return 0.0
        return float(np.abs(apply_operator(op, self.u)[sel]).max())


def _validate_phi(op, phi):
    phi = np.array(np.broadcast_to(np.asarray(phi, dtype=float), op.shape))
    fixed = op.grid.active & ~op.unknown
    if np.any(phi[fixed] < 0):
        raise PreconditionError("boundary data must be nonnegative")
    return phi


def _descend(op, u, eps_p, tol, omega, max_sweeps, history=None):
    """Continuation in the ramp width, then exact thresholded sweeps with harmonic polishing."""
    W = np.ascontiguousarray(op.weights)
    diag = np.ascontiguousarray(op.diag)
    free = np.ascontiguousarray(op.unknown)
    h2 = op.h ** 2
    sweeps = 0
    umax = max(float(u.max()), eps_p)

    def run(eps_reg, stop):
        nonlocal sweeps
        while True:
            d1, f1 = _kernels.bernoulli_pass(u, W, diag, free, h2, eps_reg, eps_p, omega, False)
            d2, f2 = _kernels.bernoulli_pass(u, W, diag, free, h2, eps_reg, eps_p, omega, True)
            sweeps += 2
            if history is not None and eps_reg == 0.0:
                history.append(bernoulli_energy(op, u, eps_p))
            if max(d1, d2) < stop and f1 + f2 == 0:
                return
            if sweeps >= max_sweeps:
                raise ConvergenceError(f"thresholded descent exhausted {max_sweeps} sweeps",
                                       residual=max(d1, d2))

    # the ramp penalty min(t/eps, 1) lets the front travel before the exact
    # indicator pins it to the grid
    eps = 0.25 * umax
    while eps > 0.25 * op.h:
        run(eps, 1e-6 * umax)
        eps *= 0.5
    for _ in range(100):
        run(0.0, 1e-6 * umax)
        pos = op.unknown & (u > eps_p)
        if pos.any():
            zero = np.where(op.grid.active & ~pos & op.unknown, 0.0, u)
            polished = solve_on_subset(op, 0.0, zero, pos)
            polished[op.unknown & ~pos] = 0.0
            np.maximum(polished, 0.0, out=polished)
            if bernoulli_energy(op, polished, eps_p) <= bernoulli_energy(op, u, eps_p):
                u[...] = polished
        d1, f1 = _kernels.bernoulli_pass(u, W, diag, free, h2, 0.0, eps_p, 1.0, False)
        d2, f2 = _kernels.bernoulli_pass(u, W, diag, free, h2, 0.0, eps_p, 1.0, True)
        sweeps += 2
        if history is not None:
            history.append(bernoulli_energy(op, u, eps_p))
        if max(d1, d2) < tol and f1 + f2 == 0:
            return sweeps
    raise ConvergenceError("support kept changing after polishing", residual=None)


def _prolong(coarse_grid, uc, fine_grid):
    interp = RegularGridInterpolator((coarse_grid.coords, coarse_grid.coords), uc,
                                     bounds_error=False, fill_value=None)
    pts = np.column_stack([fine_grid.X.ravel(), fine_grid.Y.ravel()])
    return interp(pts).reshape(fine_grid.shape)


def _coarse_start(op, phi, eps_rel, rng):
    n = op.grid.n
    nc = (n + 1) // 2
    nc += 1 - nc % 2
    if nc < MIN_COARSE or nc >= n:
        return None
    grid = op.grid
    cspec = GridSpec(nc, grid.half_width)
    cgrid = build_grid(cspec, lateral_neumann=grid.lateral_neumann)
    cop = assemble_operator(cgrid, sample_coefficients(op.field, cgrid))
    phi_i = RegularGridInterpolator((grid.coords, grid.coords), phi, bounds_error=False, fill_value=None)
    cphi = phi_i(np.column_stack([cgrid.X.ravel(), cgrid.Y.ravel()])).reshape(cgrid.shape)
    # boundary data on the coarse ring come from the nearest fine boundary values
    fixed_c = cgrid.active & ~cgrid.unknown
    fixed_f = grid.active & ~grid.unknown
    _, (ii, jj) = ndimage.distance_transform_edt(~fixed_f, return_indices=True)
    for i, j in zip(*np.nonzero(fixed_c)):
        a, b = grid.node_at(cgrid.coords[i], cgrid.coords[j])
        cphi[i, j] = phi[ii[a, b], jj[a, b]]
    cphi[~cgrid.active] = 0.0
    cstate = minimize_bernoulli(cop, np.maximum(cphi, 0.0), restarts=3, rng=rng, eps_rel=eps_rel)
    u = _prolong(cgrid, cstate.u, grid)
    return np.maximum(u, 0.0)


def minimize_bernoulli(op, phi, restarts=3, rng=None, eps_rel=EPS_P_REL, omega=OMEGA,
                       tol=None, max_sweeps=MAX_SWEEPS, record_energy=False):
    """Thresholded coordinate descent for ``J_a`` with up to three initializations.

    Parameters
    ----------
    op : DiscreteOperator
    phi : ndarray
        Nonnegative data; only fixed nodes are read.
    restarts : int
        How many of the starts (harmonic extension, zero with a boundary
        collar, prolonged coarse-grid minimizer) to run; the lowest final
        energy wins.
    rng : numpy.random.Generator, optional
        Handed to the coarse-grid solve; the descent itself is deterministic.

    Each start first relaxes a ramp penalty ``h^2 min(u/eps, 1)`` while
    halving ``eps`` from ``max(phi)/4`` to a fraction of a cell, then runs
    exact thresholded sweeps.  Between sweeps the positive part is replaced
    by the harmonic function on the current support whenever that lowers
    ``J_a``.  The result admits no single-node move that lowers the energy.
    """
    phi = _validate_phi(op, phi)
    fixed = op.grid.active & ~op.unknown
    pmax = float(phi[fixed].max()) if fixed.any() else 0.0
    eps_p = eps_rel * pmax
    if pmax == 0.0:
        u = np.zeros(op.shape)
        u.setflags(write=False)
        return BernoulliState(op, u, phi, 0.0, 0.0, restart_energies=(0.0,), start="zero")
    tol = TOL_REL * pmax if tol is None else tol
    rng = np.random.default_rng(0) if rng is None else rng

    harmonic = np.maximum(solve_dirichlet(op, 0.0, phi, method="direct"), 0.0)
    starts = [("harmonic", lambda: harmonic)]
    if restarts >= 2:
        def collar():
            dist = ndimage.distance_transform_edt(op.unknown)
            u0 = np.where(dist <= 2, harmonic, 0.0)
            return u0
        starts.append(("collar", collar))
    if restarts >= 3:
        starts.append(("coarse", lambda: _coarse_start(op, phi, eps_rel, rng)))

    best = None
    energies = []
    for name, make in starts[:max(1, restarts)]:
        u0 = make()
        if u0 is None:
            continue
        u = np.ascontiguousarray(u0, dtype=float)
        u[fixed] = phi[fixed]
        u[~op.grid.active] = 0.0
        hist = [bernoulli_energy(op, u, eps_p)] if record_energy else None
        sweeps = _descend(op, u, eps_p, tol, omega, max_sweeps, hist)
        e = bernoulli_energy(op, u, eps_p)
        energies.append(e)
        log.debug("start %s: J_a = %.12g after %d passes", name, e, sweeps)
        if best is None or e < best[0]:
            best = (e, name, u, sweeps, hist)
    e, name, u, sweeps, hist = best
    u.setflags(write=False)
    return BernoulliState(op, u, phi, e, eps_p, sweeps=sweeps, restart_energies=tuple(energies),
                          start=name, energy_history=tuple(hist or ()))


# local minimality ------------------------------------------------------------

@dataclass(frozen=True)
class MinimalityReport:
    """Outcome of competitor tests; ``gaps`` are ``J_a(v) - J_a(u)`` per trial."""

    trials: int
    violations: int
    min_gap: float
    harmonic_gaps: tuple
    tol: float

    @property
    def passed(self):
        return self.violations == 0


def _ball(grid, center, r):
    return grid.distances(grid.point(center)) <= r


def harmonic_replacement(state, center, r):
    """``u`` with its values on ``B_r(center)`` replaced by the L-harmonic function with the same trace."""
    op = state.operator
    ball = _ball(op.grid, center, r) & op.unknown
    v = solve_on_subset(op, 0.0, state.u, ball)
    return np.maximum(v, 0.0)


def verify_local_minimality(state, trials=50, rng=None, harmonic_balls=10, radii=(2, 6), tol=None):
    """Compare ``J_a`` at ``state`` with random competitors on random balls.

    Each trial picks a ball of ``radii[0]..radii[1]`` cells around a random
    free-boundary or positive node, perturbs ``u`` inside (noise, zeroing or
    a bump, clipped at 0) and records the energy gap.  Separately, the
    harmonic replacement on ``harmonic_balls`` balls centred at
    free-boundary cells is evaluated; its gaps must be strictly positive.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    op = state.operator
    grid = op.grid
    J0 = state.energy
    tol = 1e-9 * max(1.0, abs(J0)) if tol is None else tol
    fb = np.argwhere(state.free_boundary_cells)
    pos = np.argwhere(state.positivity_mask & op.unknown)
    pool = fb if len(fb) else pos
    if len(pool) == 0:
        pool = np.argwhere(op.unknown)
    scale = max(float(state.u.max()), 1e-12)
    gaps = []
    for _ in range(trials):
        c = tuple(pool[rng.integers(len(pool))])
        r = rng.uniform(*radii) * grid.h
        ball = _ball(grid, c, r) & op.unknown
        v = np.array(state.u)
        kind = rng.integers(3)
        if kind == 0:
            v[ball] += rng.normal(0.0, 0.05 * scale, ball.sum())
        elif kind == 1:
            v[ball] *= rng.uniform(0.0, 1.0)
        else:
            d = grid.distances(grid.point(c))
            v[ball] += rng.uniform(-0.5, 0.5) * scale * np.maximum(0.0, 1 - d[ball] / r)
        np.maximum(v, 0.0, out=v)
        gaps.append(bernoulli_energy(op, v, state.eps_p) - J0)
    hgaps = []
    fb_pool = fb if len(fb) else pool
    for k in range(min(harmonic_balls, len(fb_pool))):
        c = tuple(fb_pool[rng.integers(len(fb_pool))])
        r = rng.uniform(*radii) * grid.h
        hgaps.append(bernoulli_energy(op, harmonic_replacement(state, c, r), state.eps_p) - J0)
    gaps = np.array(gaps)
    viol = int(np.count_nonzero(gaps < -tol))
    return MinimalityReport(trials=trials, violations=viol,
                            min_gap=float(gaps.min()) if len(gaps) else np.inf,
                            harmonic_gaps=tuple(hgaps), tol=tol)


def single_node_moves(state, tol=None):
    """Count unknown nodes where the best single-node value lowers ``J_a`` by more than ``tol``.

    Returns ``(count, largest decrease)``.  Every node is examined.
    """
    op = state.operator
    u = state.u
    h2 = op.h ** 2
    s = np.zeros(op.shape)
    n = op.grid.n
    W = op.weights
    pad = np.pad(u, 1)
    for k in range(8):
        di, dj = int(_kernels.DI[k]), int(_kernels.DJ[k])
        s += W[k] * pad[1 + di:1 + di + n, 1 + dj:1 + dj + n]
    d = op.diag
    unk = op.unknown
    safe = np.where(d > 0, d, 1.0)

    def local(t):
        return d * t * t - 2 * s * t + h2 * (t > state.eps_p)
    e_cur = local(u)
    tstar = np.maximum(s / safe, 0.0)
    e_best = np.minimum(local(np.zeros_like(u)), local(tstar))
    gain = np.where(unk, e_cur - e_best, 0.0)
    tol = 1e-9 * h2 if tol is None else tol
    return int(np.count_nonzero(gain > tol)), float(gain.max())


# free-boundary diagnostics ---------------------------------------------------

@dataclass(frozen=True)
class FreeBoundaryDiagnostics:
    """Per-sample measurements ``(z0, r, sup_ratio, pos_density, zero_density)``.

    ``z0`` is a node index; densities count cell centres in ``B_r(z0)``.
    """

    samples: tuple

    def _col(self, k):
        return np.array([s[k] for s in self.samples])

    @property
    def sup_ratios(self):
        return self._col(2)

    @property
    def pos_densities(self):
        return self._col(3)

    @property
    def zero_densities(self):
        return self._col(4)

    @property
    def sup_ratio_range(self):
        r = self.sup_ratios
        return float(r.min()), float(r.max())

    @property
    def theta_pos(self):
        return float(self.pos_densities.min())

    @property
    def theta_zero(self):
        return float(self.zero_densities.min())


def _eligible(state, r):
    op = state.operator
    grid = op.grid
    room = ndimage.distance_transform_edt(op.unknown) * grid.h
    return state.free_boundary_cells & (room > r)


def _sample_fb(state, samples, radii, rng, centers):
    grid = state.operator.grid
    radii = [float(r) for r in radii]
    for r in radii:
        if r < 5 * grid.h:
            raise PreconditionError(f"radius {r:g} is below 5 cells")
    rmax = max(radii)
    ok = _eligible(state, rmax)
    if centers is not None:
        centers = [tuple(int(v) for v in c) for c in centers]
        for c in centers:
            if not state.free_boundary_cells[c]:
                raise PreconditionError(f"{c} is not a free-boundary cell")
            if not ok[c]:
                raise PreconditionError(f"ball of radius {rmax:g} around {c} leaves the domain")
        return centers, radii
    pool = np.argwhere(ok)
    if len(pool) == 0:
        raise PreconditionError("no free-boundary cell admits the requested radii")
    rng = np.random.default_rng(0) if rng is None else rng
    pick = np.sort(rng.choice(len(pool), size=min(samples, len(pool)), replace=False))
    return [tuple(int(v) for v in pool[k]) for k in pick], radii


def _measure(state, centers, radii):
    grid = state.operator.grid
    pos = state.positivity_mask
    out = []
    for c in centers:
        d = grid.distances(grid.point(c))
        for r in radii:
            ball = (d <= r) & grid.active
            n = int(ball.sum())
            a = int(np.count_nonzero(ball & pos))
            out.append((c, r, float(state.u[ball].max()) / r, a / n, (n - a) / n))
    return FreeBoundaryDiagnostics(tuple(out))


def nondegeneracy_check(state, samples=20, radii=(0.1,), rng=None, centers=None):
    """``sup_{B_r(z0)} u / r`` at free-boundary cells ``z0``."""
    c, r = _sample_fb(state, samples, radii, rng, centers)
    return _measure(state, c, r)


def density_check(state, samples=20, radii=(0.1,), rng=None, centers=None):
    """Positive and zero densities in ``B_r(z0)`` at free-boundary cells ``z0``."""
    c, r = _sample_fb(state, samples, radii, rng, centers)
    return _measure(state, c, r)


# growth step -----------------------------------------------------------------

@dataclass(frozen=True)
class GrowthReport:
    """Measured constants of one growth step at level ``sigma = u(x0)``.

    ``rho`` is the largest radius (to bisection accuracy) with
    ``D_rho(x0)`` inside ``{u > sigma/3}``; ``eta = outradius(D_rho)/sigma``;
    ``beta = sup_{B_{eta sigma}(x0)} u / sigma`` and ``gamma = beta - 1``.
    ``comparability`` is the range of ``u / dist(., free boundary)`` on
    ``{u >= sigma/3}`` near ``x0``.
    """

    x0: tuple
    sigma: float
    hypothesis_met: bool
    comparability: tuple
    rho: float = np.nan
    eta: float = np.nan
    gamma: float = np.nan
    beta: float = np.nan
    lipschitz: float = np.nan
    y0: tuple = None
    u_y0_ratio: float = np.nan
    mv_identity_error: float = np.nan


def lipschitz_constant(state):
    """Largest difference quotient of ``u`` across grid edges between active nodes."""
    u, act, h = state.u, state.operator.grid.active, state.operator.h
    qx = np.abs(np.diff(u, axis=0))[act[:-1] & act[1:]]
    qy = np.abs(np.diff(u, axis=1))[act[:, :-1] & act[:, 1:]]
    return float(max(qx.max(initial=0.0), qy.max(initial=0.0))) / h


def _dirichlet_twin(op):
    grid = build_grid(op.grid.spec)
    return assemble_operator(grid, sample_coefficients(op.field, grid))


def growth_iteration_check(state, x0, comparability_bounds=(0.25, 4.0), steps=20,
                           window=4.0, margin_factor=0.75):
    """Run one step of the growth iteration at ``x0`` and report the constants.

    Mean-value sets are computed for the same coefficients on the grid with
    Dirichlet data on every side; they stay clear of the walls, so the
    boundary conditions of ``state`` do not affect them.
    """
    op = state.operator
    grid = op.grid
    x0 = grid.resolve_node(x0)
    u = state.u
    sigma = float(u[x0])
    if not sigma > state.eps_p:
        raise PreconditionError("x0 must lie in the positivity set")
    pos = state.positivity_mask & op.unknown
    zero = state.zero_mask
    if not zero.any():
        raise PreconditionError("the state has no zero set")
    dist = np.maximum(ndimage.distance_transform_edt(~zero) * grid.h - 0.5 * grid.h, 0.5 * grid.h)
    near = grid.distances(grid.point(x0)) <= window * sigma
    region = pos & (u >= sigma / 3) & near
    ratio = u[region] / dist[region]
    comp = (float(ratio.min()), float(ratio.max()))
    lo, hi = comparability_bounds
    if comp[0] < lo or comp[1] > hi:
        return GrowthReport(x0=x0, sigma=sigma, hypothesis_met=False, comparability=comp)

    twin = _dirichlet_twin(op)
    green = greens_function(twin, x0)
    level = pos & (u > sigma / 3)

    def fits(R):
        sol = solve_mvt_problem(twin, x0, R, green=green, margin_factor=margin_factor)
        return not np.any(sol.noncontact_mask & ~level), sol

    room = twin.grid.boundary_distance(x0)
    cap = (room - 4 * grid.h) / margin_factor
    a = grid.h
    ok, sol_a = fits(a)
    if not ok:
        raise PreconditionError("even the smallest mean-value set leaves {u > sigma/3}")
    b = a
    while True:
        b = min(1.5 * b, cap)
        ok, sol = fits(b)
        if not ok:
            break
        a, sol_a = b, sol
        if b >= cap:
            raise PreconditionError("{u > sigma/3} contains every mean-value set that fits the grid")
    for _ in range(steps):
        if b - a <= 0.25 * grid.h:
            break
        m = 0.5 * (a + b)
        ok, sol = fits(m)
        if ok:
            a, sol_a = m, sol
        else:
            b = m
    mv = extract_mvset(sol_a)
    eta = mv.outradius / sigma
    ball = (grid.distances(grid.point(x0)) <= eta * sigma) & grid.active
    sup = float(u[ball].max())
    bnd = np.argwhere(mv.boundary)
    k = int(np.argmin(u[mv.boundary]))
    y0 = tuple(int(v) for v in bnd[k])
    return GrowthReport(x0=x0, sigma=sigma, hypothesis_met=True, comparability=comp, rho=a,
                        eta=eta, gamma=sup / sigma - 1.0, beta=sup / sigma,
                        lipschitz=lipschitz_constant(state), y0=y0,
                        u_y0_ratio=float(u[y0]) / (sigma / 3),
                        mv_identity_error=abs(mv_average(mv, u) - sigma))


# slab test data --------------------------------------------------------------

def slab_setup(n, c=0.5, field=None, half_width=1.0):
    """Operator with zero-flux top and bottom walls and data ``c`` on the left edge, 0 on the right.

    Returns ``(op, phi, s)`` where ``s`` is the distance along x from the
    left Dirichlet column.  The one-dimensional minimizer is
    ``max(c - s, 0)`` with energy ``2c`` per unit height when ``c`` is less
    than half the slab width.
    """
    field = CoefficientField.identity() if field is None else field
    op = build_operator(field, GridSpec(n, half_width), lateral_neumann=True)
    phi = np.zeros(op.shape)
    phi[0, 1:-1] = c
    s = op.grid.X - op.grid.coords[0]
    return op, phi, s
