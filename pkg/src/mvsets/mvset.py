"""Mean-value sets D_R(x0) extracted from obstacle solutions, and families of them.

A mean-value set is the noncontact set of the obstacle problem solved by
:func:`mvsets.obstacle.solve_mvt_problem`.  All geometry is measured on
cell centres: a ball ``B_r(y)`` is the set of cells whose centre lies within
``r`` of ``y``, and the area of a mask is its cell count times ``h**2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConvergenceError, PreconditionError
from .linalg import greens_function
from .obstacle import solve_mvt_problem

log = logging.getLogger(__name__)

FOUR = ndimage.generate_binary_structure(2, 1)


def boundary_cells(mask, outside=None):
    """Cells of ``mask`` with at least one 4-neighbour in ``outside`` (default ``~mask``)."""
    mask = np.asarray(mask, dtype=bool)
    if outside is None:
        outside = ~mask
    pad = np.pad(outside, 1, constant_values=True)
    touch = pad[2:, 1:-1] | pad[:-2, 1:-1] | pad[1:-1, 2:] | pad[1:-1, :-2]
    return mask & touch


def count_components(mask):
    """Number of 4-connected components and the label array."""
    labels, count = ndimage.label(mask, structure=FOUR)
    return int(count), labels


@dataclass(frozen=True, eq=False)
class MeanValueSet:
    """Discrete ``D_R(x0)`` with its geometry diagnostics.

    Attributes
    ----------
    mask : ndarray of bool
        Noncontact unknown nodes.
    R : float
    x0 : tuple of int
        Pole node.
    h : float
        Grid spacing.
    area : float
        ``mask.sum() * h**2``.
    components : int
        Number of 4-connected components.
    inradius, outradius : float
        Radii of the largest ball around ``x0`` inside the set and the
        smallest ball containing it, each measured to the cell edge
        (distance to the nearest outside cell centre minus ``h/2``, and
        to the farthest inside cell centre plus ``h/2``).
    boundary : ndarray of bool
        Noncontact cells with a contact 4-neighbour.
    violations : tuple of str
        Structural problems found during extraction (kept, not repaired).
    """

    mask: np.ndarray
    R: float
    x0: tuple
    h: float
    area: float
    components: int
    inradius: float
    outradius: float
    boundary: np.ndarray
    violations: tuple = ()
    solution: object = field(default=None, repr=False)

    @property
    def boundary_cells(self):
        return self.boundary

    @property
    def grid(self):
        return self.solution.operator.grid

    @property
    def cell_count(self):
        return int(self.mask.sum())


def extract_mvset(sol):
    """Build a :class:`MeanValueSet` from a converged obstacle solution."""
    op = sol.operator
    grid = op.grid
    x0 = sol.x0 if sol.x0 is not None else grid.center_index
    mask = np.array(sol.noncontact_mask)
    h = grid.h
    violations = []
    count, labels = count_components(mask)
    if not mask[x0]:
        violations.append(f"pole {x0} is not in the set")
    elif count != 1:
        violations.append(f"{count} connected components")
    if mask[x0] and labels[x0] and np.any(mask & (labels != labels[x0])):
        violations.append("cells disconnected from the pole")

    d = grid.distances(grid.point(x0))
    outside = ~mask
    inradius = float(d[outside].min()) - 0.5 * h if outside.any() else np.inf
    outradius = float(d[mask].max()) + 0.5 * h if mask.any() else 0.0
    bnd = boundary_cells(mask, outside=op.unknown & ~mask)
    for arr in (mask, bnd):
        arr.setflags(write=False)
    return MeanValueSet(mask=mask, R=sol.R, x0=tuple(x0), h=h, area=float(mask.sum()) * h * h,
                        components=count, inradius=max(inradius, 0.0), outradius=outradius,
                        boundary=bnd, violations=tuple(violations), solution=sol)


@dataclass(frozen=True, eq=False)
class MeanValueFamily:
    """Sets for increasing radii at one pole.

    ``gaps`` maps each radius whose solve failed to the error message; those
    radii are absent from ``sets``.
    """

    sets: tuple
    x0: tuple
    operator: object = field(repr=False)
    gaps: dict = field(default_factory=dict)

    @property
    def radii(self):
        return tuple(s.R for s in self.sets)

    @property
    def c_emp(self):
        return min(s.inradius / s.R for s in self.sets) if self.sets else np.nan

    @property
    def C_emp(self):
        return max(s.outradius / s.R for s in self.sets) if self.sets else np.nan

    @property
    def descriptor(self):
        f = self.operator.field
        return {"kind": f.kind, **dict(f.params), "n": self.operator.grid.n,
                "half_width": self.operator.grid.half_width}

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, k):
        return self.sets[k]


def compute_family(op, x0, radii, green=None, **solver_kwargs):
    """Solve the obstacle problem for every radius and extract the sets.

    The Green's function is computed once.  A solver failure for one radius
    leaves a gap in the family; a radius that does not fit the domain is a
    caller error and propagates.
    """
    radii = [float(r) for r in radii]
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise PreconditionError("radii must be sorted in increasing order")
    node = op.grid.resolve_node(x0)
    if green is None:
        green = greens_function(op, node)
    sets, gaps = [], {}
    for R in radii:
        try:
            sol = solve_mvt_problem(op, node, R, green=green, **solver_kwargs)
        except ConvergenceError as exc:
            log.warning("R=%g: %s", R, exc)
            gaps[R] = str(exc)
            continue
        sets.append(extract_mvset(sol))
    return MeanValueFamily(sets=tuple(sets), x0=node, operator=op, gaps=gaps)


@dataclass(frozen=True)
class NestingReport:
    """``pairs`` holds ``(R, S, cells of D_R outside D_S)`` for consecutive radii."""

    pairs: tuple

    @property
    def violations(self):
        return sum(p[2] for p in self.pairs)

    @property
    def passed(self):
        return self.violations == 0


def check_nesting(family):
    sets = list(family)
    if len(sets) < 2:
        raise PreconditionError("nesting needs at least two radii")
    pairs = tuple((a.R, b.R, int(np.count_nonzero(a.mask & ~b.mask)))
                  for a, b in zip(sets, sets[1:]))
    return NestingReport(pairs)


def mv_average(mvset, v):
    """Average of ``v`` over the cells of the set."""
    v = np.asarray(v, dtype=float)
    if v.shape != mvset.mask.shape:
        raise PreconditionError(f"field has shape {v.shape}, set grid is {mvset.mask.shape}")
    n = mvset.cell_count
    if n == 0:
        raise PreconditionError("empty mean-value set")
    return float(np.sum(v[mvset.mask])) / n


def _gradient(G, h):
    gx = np.zeros_like(G)
    gy = np.zeros_like(G)
    gx[1:-1, :] = (G[2:, :] - G[:-2, :]) / (2 * h)
    gy[:, 1:-1] = (G[:, 2:] - G[:, :-2]) / (2 * h)
    return gx, gy


def _band_clearance(op, node, clearance):
    """Nodes at least ``clearance`` from the pole and from every fixed node."""
    grid = op.grid
    far_pole = grid.distances(grid.point(node)) >= clearance
    fixed = ndimage.distance_transform_edt(op.unknown) * grid.h
    return far_pole & (fixed >= clearance) & op.unknown


def lsw_level(op, x0=None, green=None, clearance_cells=5):
    """A level ``a`` whose band ``{a <= G <= 3a}`` keeps ``clearance_cells`` away from pole and boundary.

    ``a`` is the geometric mean of the admissible interval
    ``(max G near the boundary, min G near the pole / 3)``.
    """
    node = op.grid.resolve_node(x0)
    if green is None:
        green = greens_function(op, node)
    G = green.field
    grid = op.grid
    clearance = clearance_cells * op.h
    near_wall = op.unknown & (ndimage.distance_transform_edt(op.unknown) * grid.h < clearance)
    near_pole = grid.distances(grid.point(node)) < clearance
    lo = float(G[near_wall].max())
    hi = float(G[near_pole].min()) / 3.0
    if not lo < hi:
        raise PreconditionError("grid too coarse for a level band clear of pole and boundary")
    return float(np.sqrt(lo * hi))


def lsw_average(op, x0, v, a, green=None, clearance_cells=5):
    """Weighted level-band average ``(1/2a) * sum_{a <= G <= 3a} v * (A grad G . grad G) h^2``.

    The gradient of ``G`` is taken by centred differences and the band is
    selected by nodal values.  For ``v = 1`` each level set carries unit
    flux, so the average is 1 up to discretization error.
    """
    node = op.grid.resolve_node(x0)
    if not a > 0:
        raise PreconditionError("level a must be positive")
    if green is None:
        green = greens_function(op, node)
    G = green.field
    v = op.check_field(v, "v")
    band = op.unknown & (G >= a) & (G <= 3 * a)
    if not band.any():
        raise PreconditionError(f"level band [{a:g}, {3 * a:g}] is empty")
    ok = _band_clearance(op, node, clearance_cells * op.h)
    if np.any(band & ~ok):
        raise PreconditionError(
            f"level band [{a:g}, {3 * a:g}] comes within {clearance_cells} cells of the pole or boundary")
    c = op.coeffs
    gx, gy = _gradient(G, op.h)
    weight = c.a11 * gx * gx + 2 * c.a12 * gx * gy + c.a22 * gy * gy
    return float(np.sum(v[band] * weight[band])) * op.h ** 2 / (2 * a)
