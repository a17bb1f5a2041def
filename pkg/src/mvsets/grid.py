"""Uniform cell-centred grids on the square [-half_width, half_width]^2.

Nodes are cell centres.  Arrays are indexed ``[i, j]`` with ``i`` running
along x and ``j`` along y.  The outermost ring of cells carries Dirichlet
data; with ``lateral_neumann=True`` the top and bottom rows are removed
from the domain instead (zero-flux walls), which is what the slab tests use.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError

MIN_CELLS = 16


@dataclass(frozen=True)
class GridSpec:
    """Size of a square grid.

    Parameters
    ----------
    n : int
        Cells per axis.  Must be odd so that the origin is a node.
    half_width : float
        The domain is ``[-half_width, half_width]**2``.
    spacing : float, optional
        Cell width.  Derived as ``2 * half_width / n`` when omitted; pass it
        explicitly (see :meth:`from_spacing`) to line up two grids of
        different extent node for node.
    """

    n: int
    half_width: float = 1.0
    spacing: float = field(default=None)

    def __post_init__(self):
        if int(self.n) != self.n:
            raise GridError(f"N must be an integer, got {self.n!r}")
        if self.n < MIN_CELLS:
            raise GridError(f"N must be at least {MIN_CELLS}, got {self.n}")
        if self.n % 2 == 0:
            raise GridError(f"N must be odd, got {self.n}")
        if not self.half_width > 0:
            raise GridError("half_width must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", 2.0 * self.half_width / self.n)
        elif not self.spacing > 0:
            raise GridError("spacing must be positive")

    @classmethod
    def from_spacing(cls, n, spacing):
        return cls(n=n, half_width=0.5 * n * spacing, spacing=spacing)

    @property
    def center_index(self):
        c = (self.n - 1) // 2
        return (c, c)


@dataclass(frozen=True, eq=False)
class Grid:
    spec: GridSpec
    lateral_neumann: bool = False

    def __post_init__(self):
        n, h = self.spec.n, self.spec.spacing
        c = (n - 1) // 2
        coords = (np.arange(n) - c) * h
        X, Y = np.meshgrid(coords, coords, indexing="ij")
        ring = np.zeros((n, n), dtype=bool)
        ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
        active = np.ones((n, n), dtype=bool)
        if self.lateral_neumann:
            active[:, 0] = active[:, -1] = False
            dirichlet = np.zeros((n, n), dtype=bool)
            dirichlet[0, 1:-1] = dirichlet[-1, 1:-1] = True
        else:
            dirichlet = ring
        for name, arr in (("coords", coords), ("X", X), ("Y", Y),
                          ("active", active), ("dirichlet", dirichlet)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        unknown = active & ~dirichlet
        unknown.setflags(write=False)
        object.__setattr__(self, "unknown", unknown)

    @property
    def n(self):
        return self.spec.n

    @property
    def h(self):
        return self.spec.spacing

    @property
    def half_width(self):
        return self.spec.half_width

    @property
    def shape(self):
        return (self.spec.n, self.spec.n)

    @property
    def center_index(self):
        return self.spec.center_index

    def point(self, node):
        i, j = node
        return np.array([self.coords[i], self.coords[j]])

    def node_at(self, x, y):
        """Index of the node nearest to the point ``(x, y)``."""
        c = (self.n - 1) // 2
        i = int(np.rint(x / self.h)) + c
        j = int(np.rint(y / self.h)) + c
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise GridError(f"point ({x}, {y}) lies outside the grid")
        return (i, j)

    def resolve_node(self, x0):
        if x0 is None or (isinstance(x0, str) and x0 == "center"):
            return self.center_index
        i, j = (int(v) for v in x0)
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise GridError(f"node {x0!r} outside the grid")
        return (i, j)

    def distances(self, point):
        """Euclidean distance from every node to ``point`` (coordinates)."""
        px, py = point
        return np.hypot(self.X - px, self.Y - py)

    def boundary_distance(self, node):
        """Distance from a node to the nearest Dirichlet/inactive node."""
        i, j = node
        fixed = ~self.unknown
        d = self.distances(self.point(node))
        return float(d[fixed].min())


def build_grid(spec, lateral_neumann=False):
    """Realize coordinates and boundary classification for ``spec``."""
    if not isinstance(spec, GridSpec):
        spec = GridSpec(*spec)
    return Grid(spec, lateral_neumann=lateral_neumann)
