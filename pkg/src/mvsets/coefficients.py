"""Symmetric uniformly elliptic coefficient fields and their grid samples."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoefficientError

KINDS = ("identity", "diagonal", "rotated_anisotropic", "checkerboard", "smooth_variable")
MAX_ANISOTROPY = 10.0

_REQUIRED = {
    "identity": (),
    "diagonal": ("a1", "a2"),
    "rotated_anisotropic": ("angle", "ratio"),
    "checkerboard": ("a_low", "a_high", "period"),
    "smooth_variable": ("base", "amplitude", "anisotropy", "wavelength"),
}


@dataclass(frozen=True)
class CoefficientField:
    """A matrix field ``A(x)`` together with its ellipticity bounds.

    Build instances with the named constructors (:meth:`identity`,
    :meth:`diagonal`, ...).  ``params`` holds the kind-specific numbers as a
    sorted tuple of ``(name, value)`` pairs so that the field is hashable.

    For ``rotated_anisotropic`` the direction at ``angle`` carries
    conductivity 1 and the perpendicular direction carries ``ratio``.
    ``checkerboard`` alternates ``a_low``/``a_high`` on square tiles of side
    ``period / 2``; the tile containing the origin is centred on it and
    holds ``a_low``.
    """

    kind: str
    params: tuple = ()
    allow_strong_anisotropy: bool = False
    lam: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CoefficientError(f"unknown coefficient kind {self.kind!r}")
        p = dict(self.params)
        missing = [k for k in _REQUIRED[self.kind] if k not in p]
        if missing:
            raise CoefficientError(f"{self.kind} needs parameter(s) {', '.join(missing)}")
        extra = set(p) - set(_REQUIRED[self.kind])
        if extra:
            raise CoefficientError(f"{self.kind} does not take {', '.join(sorted(extra))}")
        object.__setattr__(self, "params", tuple(sorted((k, float(v)) for k, v in p.items())))
        lam, mu = self._bounds(dict(self.params))
        if not (0 < lam <= mu < np.inf):
            raise CoefficientError(f"field is not uniformly elliptic (lambda={lam}, mu={mu})")
        object.__setattr__(self, "lam", float(lam))
        object.__setattr__(self, "mu", float(mu))

    def _bounds(self, p):
        if self.kind == "identity":
            return 1.0, 1.0
        if self.kind == "diagonal":
            if p["a1"] <= 0 or p["a2"] <= 0:
                raise CoefficientError("diagonal entries must be positive")
            return min(p["a1"], p["a2"]), max(p["a1"], p["a2"])
        if self.kind == "rotated_anisotropic":
            k = p["ratio"]
            if k <= 0:
                raise CoefficientError("anisotropy ratio must be positive")
            if max(k, 1.0 / k) > MAX_ANISOTROPY and not self.allow_strong_anisotropy:
                raise CoefficientError(
                    f"anisotropy ratio {k} exceeds {MAX_ANISOTROPY}; "
                    "set allow_strong_anisotropy to override")
            return min(1.0, k), max(1.0, k)
        if self.kind == "checkerboard":
            if p["a_low"] <= 0:
                raise CoefficientError("a_low must be positive")
            if p["a_high"] < p["a_low"]:
                raise CoefficientError("a_high must be >= a_low")
            if p["period"] <= 0:
                raise CoefficientError("period must be positive")
            return p["a_low"], p["a_high"]
        # smooth_variable: eigenvalues are b(x) +- anisotropy
        b, amp, c = p["base"], p["amplitude"], p["anisotropy"]
        if not (0 <= amp < 1) or c < 0 or p["wavelength"] <= 0:
            raise CoefficientError("smooth_variable needs 0 <= amplitude < 1, anisotropy >= 0")
        return b * (1 - amp) - c, b * (1 + amp) + c

    # named constructors -------------------------------------------------
    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def diagonal(cls, a1, a2):
        return cls("diagonal", (("a1", a1), ("a2", a2)))

    @classmethod
    def rotated_anisotropic(cls, angle, ratio, allow_strong_anisotropy=False):
        return cls("rotated_anisotropic", (("angle", angle), ("ratio", ratio)),
                   allow_strong_anisotropy=allow_strong_anisotropy)

    @classmethod
    def checkerboard(cls, a_low, a_high, period):
        return cls("checkerboard", (("a_low", a_low), ("a_high", a_high), ("period", period)))

    @classmethod
    def smooth_variable(cls, base=2.0, amplitude=0.5, anisotropy=0.5, wavelength=0.5):
        return cls("smooth_variable", (("base", base), ("amplitude", amplitude),
                                       ("anisotropy", anisotropy), ("wavelength", wavelength)))

    @property
    def is_diagonal(self):
        if self.kind == "rotated_anisotropic":
            p = dict(self.params)
            return np.sin(2 * p["angle"]) == 0 or p["ratio"] == 1
        return self.kind in ("identity", "diagonal", "checkerboard")

    def tensor(self, x, y):
        """Return ``(a11, a12, a22)`` evaluated at the points ``(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        p = dict(self.params)
        one = np.ones(shape)
        if self.kind == "identity":
            return one, np.zeros(shape), one.copy()
        if self.kind == "diagonal":
            return p["a1"] * one, np.zeros(shape), p["a2"] * one
        if self.kind == "rotated_anisotropic":
            c, s, k = np.cos(p["angle"]), np.sin(p["angle"]), p["ratio"]
            return ((c * c + k * s * s) * one, ((1 - k) * c * s) * one, (s * s + k * c * c) * one)
        if self.kind == "checkerboard":
            tile = 0.5 * p["period"]
            parity = (np.floor(x / tile + 0.5) + np.floor(y / tile + 0.5)) % 2
            a = np.where(parity == 0, p["a_low"], p["a_high"]) * one
            return a, np.zeros(shape), a.copy()
        L = p["wavelength"]
        b = p["base"] * (1 + p["amplitude"] * np.sin(2 * np.pi * x / L) * np.sin(2 * np.pi * y / L))
        psi = np.pi * (x + y) / L
        c = p["anisotropy"]
        return (b + c * np.cos(2 * psi)) * one, (c * np.sin(2 * psi)) * one, (b - c * np.cos(2 * psi)) * one


@dataclass(frozen=True, eq=False)
class FaceCoefficients:
    """Grid samples of a coefficient field.

    ``a11, a12, a22`` live on cells.  ``face_x[i, j]`` couples cells
    ``(i, j)`` and ``(i+1, j)`` (harmonic mean of a11), ``face_y[i, j]``
    couples ``(i, j)`` and ``(i, j+1)`` (harmonic mean of a22), and
    ``corner[i, j]`` is the arithmetic mean of a12 over the four cells
    meeting at the vertex between them.
    """

    field: CoefficientField
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    face_x: np.ndarray
    face_y: np.ndarray
    corner: np.ndarray


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def sample_coefficients(field, grid):
    a11, a12, a22 = field.tensor(grid.X, grid.Y)
    # eigenvalues of [[a11, a12], [a12, a22]]
    mid = 0.5 * (a11 + a22)
    rad = np.hypot(0.5 * (a11 - a22), a12)
    slack = 1e-12 * field.mu
    if (mid - rad).min() < field.lam - slack or (mid + rad).max() > field.mu + slack:
        raise CoefficientError("sampled coefficients violate the ellipticity bounds")
    face_x = _harmonic(a11[:-1, :], a11[1:, :])
    face_y = _harmonic(a22[:, :-1], a22[:, 1:])
    corner = 0.25 * (a12[:-1, :-1] + a12[1:, :-1] + a12[:-1, 1:] + a12[1:, 1:])
    arrays = dict(a11=a11, a12=a12, a22=a22, face_x=face_x, face_y=face_y, corner=corner)
    for arr in arrays.values():
        arr.setflags(write=False)
    return FaceCoefficients(field=field, **arrays)
