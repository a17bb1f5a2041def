"""Geometric checks on mean-value sets: boundary density, continuous
expansion, convergence of minimizers and independence of the domain."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import DomainMarginError, PreconditionError
from .grid import GridSpec
from .linalg import greens_function
from .mvset import extract_mvset
from .obstacle import solve_mvt_problem
from .operator import build_operator

log = logging.getLogger(__name__)

MIN_BALL_CELLS = 1.5
BOUNDARY_SMOOTHING = 1.0
BISECTION_STEPS = 20


# boundary density ---------------------------------------------------------

@dataclass(frozen=True)
class DensityReport:
    """Fraction of small boundary balls covered by the set.

    ``samples`` holds ``(y0, h_frac, ratio)`` with ``y0`` in coordinates.
    """

    R: float
    ball_radius: float
    samples: tuple

    @property
    def ratios(self):
        return np.array([s[2] for s in self.samples])

    @property
    def tau_min(self):
        return float(self.ratios.min()) if self.samples else np.nan

    @property
    def tau_max(self):
        return float(self.ratios.max()) if self.samples else np.nan


def boundary_points(mvset, smoothing=BOUNDARY_SMOOTHING):
    """Points on the boundary of ``mvset``, in coordinates.

    The cell mask is blurred with a Gaussian of ``smoothing`` cells and the
    0.5 level line is traced by marching squares; its vertices are returned.
    On the raw staircase, points at stair corners see lopsided balls, which
    the blur removes while moving the curve by well under a cell.
    """
    grid = mvset.grid
    soft = ndimage.gaussian_filter(mvset.mask.astype(float), smoothing, mode="constant")
    idx = np.arange(grid.n)
    pts = [np.column_stack([np.interp(c[:, 0], idx, grid.coords), np.interp(c[:, 1], idx, grid.coords)])
           for c in measure.find_contours(soft, 0.5)]
    return np.concatenate(pts) if pts else np.zeros((0, 2))


def ball_fraction(mask, grid, y0, r):
    """``|B_r(y0) & mask| / |B_r(y0)|`` by cell-centre membership."""
    ball = grid.distances(y0) <= r
    total = int(ball.sum())
    if total == 0:
        raise PreconditionError(f"ball of radius {r:g} contains no cell centre")
    return int(np.count_nonzero(ball & mask)) / total


def boundary_density(mvset, h_frac, sample_count, rng=None, c_emp=None):
    """Density of ``mvset`` in balls of radius ``c_emp * h_frac * R`` centred on its boundary.

    Parameters
    ----------
    mvset : MeanValueSet
    h_frac : float
        In ``(0, 1/2)``.
    sample_count : int
        Boundary points (see :func:`boundary_points`) drawn uniformly
        without replacement.
    rng : numpy.random.Generator, optional
    c_emp : float, optional
        Inner sandwich constant; defaults to ``inradius / R`` of the set
        itself.  Pass the family's value to use one constant for all radii.
    """
    if not 0 < h_frac < 0.5:
        raise PreconditionError("h_frac must lie in (0, 1/2)")
    grid = mvset.grid
    c = mvset.inradius / mvset.R if c_emp is None else c_emp
    r = c * h_frac * mvset.R
    if r < MIN_BALL_CELLS * grid.h:
        raise PreconditionError(
            f"ball radius {r:.4g} is below {MIN_BALL_CELLS} cells and cannot be resolved")
    pts = boundary_points(mvset)
    if len(pts) < sample_count:
        raise PreconditionError(f"only {len(pts)} boundary points for {sample_count} samples")
    rng = np.random.default_rng(0) if rng is None else rng
    pick = np.sort(rng.choice(len(pts), size=sample_count, replace=False))
    samples = tuple((tuple(map(float, pts[k])), float(h_frac), ball_fraction(mvset.mask, grid, pts[k], r))
                    for k in pick)
    return DensityReport(R=mvset.R, ball_radius=float(r), samples=samples)


# continuous expansion -----------------------------------------------------

@dataclass(frozen=True)
class ExpansionResult:
    """Bracket ``(s, t)`` around the radius at which ``y0`` enters ``D_r(x0)``.

    ``y0 in D_t`` and ``y0 not in D_s``; ``r_star`` is the bracket midpoint.
    ``near_boundary`` records whether ``y0`` lies within one cell of the
    boundary cells of ``D_t``.
    """

    y0: tuple
    bracket: tuple
    r_star: float
    band: float
    steps: int
    near_boundary: bool


def _member(op, x0, y0, r, green, **kw):
    sol = solve_mvt_problem(op, x0, r, green=green, **kw)
    return bool(sol.noncontact_mask[y0]), sol


def continuous_expansion(op, x0, y0, s, t, green=None, tol=None, max_steps=BISECTION_STEPS, **kw):
    """Bisection for the radius at which the node ``y0`` joins ``D_r(x0)``.

    Requires ``y0`` outside ``D_s`` and at least two cells inside ``D_t``.
    Stops once the bracket is narrower than ``tol`` (default ``h/4``).
    """
    grid = op.grid
    x0 = grid.resolve_node(x0)
    y0 = grid.resolve_node(y0)
    if y0 == x0:
        raise PreconditionError("y0 coincides with x0, which lies in every D_r")
    if not 0 < s < t:
        raise PreconditionError("need 0 < s < t")
    if green is None:
        green = greens_function(op, x0)
    tol = 0.25 * grid.h if tol is None else tol

    inside, _ = _member(op, x0, y0, s, green, **kw)
    if inside:
        raise PreconditionError(f"y0 already lies in D_{s:g}")
    inside, sol_t = _member(op, x0, y0, t, green, **kw)
    if not inside:
        raise PreconditionError(f"y0 does not lie in D_{t:g}; bracket does not straddle")
    bnd = extract_mvset(sol_t).boundary
    d = grid.distances(grid.point(y0))
    if bnd.any() and float(d[bnd].min()) < 2 * grid.h:
        raise PreconditionError("y0 is within two cells of the boundary of D_t")

    steps = 0
    while t - s > tol and steps < max_steps:
        m = 0.5 * (s + t)
        inside, sol = _member(op, x0, y0, m, green, **kw)
        if inside:
            t, sol_t = m, sol
        else:
            s = m
        steps += 1
    bnd = extract_mvset(sol_t).boundary
    near = bool(bnd.any() and float(d[bnd].min()) <= grid.h * (1 + 1e-9))
    return ExpansionResult(y0=y0, bracket=(s, t), r_star=0.5 * (s + t), band=t - s,
                           steps=steps, near_boundary=near)


def expansion_indicator(op, x0, y0, radii, green=None, **kw):
    """``[y0 in D_r]`` for each radius, and the number of switches along the list."""
    x0 = op.grid.resolve_node(x0)
    y0 = op.grid.resolve_node(y0)
    if green is None:
        green = greens_function(op, x0)
    flags = [_member(op, x0, y0, r, green, **kw)[0] for r in radii]
    switches = sum(a != b for a, b in zip(flags, flags[1:]))
    return flags, switches


# convergence of minimizers ------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    """Sup-norm distances from ``u_r`` (and ``w_r``) to ``u_{r+delta}``.

    Both are measured off a ``(2k+1)``-cell square around the pole, with
    ``k = exclude_cells``.  ``h1_energy_bound`` is the largest ``Q(w)`` over
    the family.
    """

    r: float
    deltas: tuple
    sup_norm_diffs: tuple
    w_sup_norm_diffs: tuple
    h1_energy_bound: float
    exclude_cells: int

    @property
    def strictly_decreasing(self):
        """True when the diffs shrink strictly as ``|delta|`` decreases."""
        order = np.argsort(-np.abs(np.array(self.deltas)), kind="stable")
        d = np.array(self.sup_norm_diffs)[order]
        return bool(np.all(np.diff(d) < 0))


def minimizer_convergence(op, x0, r, deltas, green=None, exclude_cells=3, **kw):
    x0 = op.grid.resolve_node(x0)
    if green is None:
        green = greens_function(op, x0)
    base = solve_mvt_problem(op, x0, r, green=green, **kw)
    window = op.unknown.copy()
    i, j = x0
    k = exclude_cells
    window[i - k:i + k + 1, j - k:j + k + 1] = False
    du, dw = [], []
    energies = [op.quadratic_form(base.w)]
    for d in deltas:
        sol = base if d == 0 else solve_mvt_problem(op, x0, r + d, green=green, **kw)
        du.append(float(np.abs(sol.u - base.u)[window].max()))
        dw.append(float(np.abs(sol.w - base.w)[window].max()))
        energies.append(op.quadratic_form(sol.w))
    return ConvergenceReport(r=r, deltas=tuple(deltas), sup_norm_diffs=tuple(du),
                             w_sup_norm_diffs=tuple(dw), h1_energy_bound=float(max(energies)),
                             exclude_cells=exclude_cells)


# domain independence ------------------------------------------------------

@dataclass(frozen=True)
class DomainIndependenceResult:
    """Comparison of ``D_R(x0)`` on a grid and on one twice as wide at equal spacing.

    ``mismatched_cells`` counts disagreements of the two masks on the small
    window; ``w_max_diff`` is the largest change of the height function
    there.  Truthiness is mask identity.
    """

    R: float
    mismatched_cells: int
    w_max_diff: float
    outradius: float

    def __bool__(self):
        return self.mismatched_cells == 0


def domain_independence(spec, coeff, x0, R, margin_cells=4, **kw):
    """Solve for ``D_R(x0)`` on ``spec`` and on a grid of ``2N+1`` cells with the same spacing."""
    small = build_operator(coeff, spec)
    node = small.grid.resolve_node(x0)
    sol_s = solve_mvt_problem(small, node, R, **kw)
    mv = extract_mvset(sol_s)
    room = small.grid.boundary_distance(node)
    if mv.outradius + margin_cells * small.h > room:
        raise DomainMarginError(
            f"D_{R:g} reaches {mv.outradius:.4g} from x0; only {room:.4g} available "
            f"with a {margin_cells}-cell margin")
    n2 = 2 * spec.n + 1
    big = build_operator(coeff, GridSpec.from_spacing(n2, spec.spacing))
    off = (n2 - spec.n) // 2
    sol_b = solve_mvt_problem(big, (node[0] + off, node[1] + off), R, **kw)
    win = (slice(off, off + spec.n), slice(off, off + spec.n))
    mask_b = sol_b.noncontact_mask[win]
    mism = int(np.count_nonzero(mask_b != sol_s.noncontact_mask))
    unk = small.unknown
    wdiff = float(np.abs(sol_b.w[win] - sol_s.w)[unk].max())
    return DomainIndependenceResult(R=R, mismatched_cells=mism, w_max_diff=wdiff,
                                    outradius=mv.outradius)
