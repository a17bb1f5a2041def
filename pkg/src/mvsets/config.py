"""Scenario configuration in line-oriented ``key = value`` form.

Keys are dotted (``grid.n = 257``); ``#`` starts a comment.  Values are
integers, reals, ``true``/``false``, bare or double-quoted strings, or
bracketed lists of reals.  Unknown keys, malformed values and duplicate keys
are errors that cite the offending line(s).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .coefficients import _REQUIRED, KINDS, CoefficientField
from .errors import CoefficientError, ConfigError, GridError
from .grid import GridSpec


def _bool(text):
    if text in ("true", "false"):
        return text == "true"
    raise ValueError(f"expected true or false, got {text!r}")


def _int(text):
    return int(text)


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"{text!r} is not finite")
    return v


def _str(text):
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return text[1:-1]
    return text


def _floats(text):
    if not (text.startswith("[") and text.endswith("]")):
        raise ValueError(f"expected a bracketed list, got {text!r}")
    body = text[1:-1].strip()
    return tuple(_float(t.strip()) for t in body.split(",")) if body else ()


def _x0(text):
    if text == "center":
        return "center"
    i, j = (int(t) for t in _floats(text))
    return (i, j)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if len(value) == 2 and all(isinstance(v, int) for v in value):
            return f"[{value[0]}, {value[1]}]"
        return "[" + ", ".join(repr(float(v)) for v in value) + "]"
    value = str(value)
    if value != value.strip() or any(c in value for c in '#="'):
        if '"' in value:
            raise ConfigError(f"cannot write a string containing a double quote: {value!r}")
        return f'"{value}"'
    return value


# key -> (parser, default); None marks keys without a default
SCHEMA = {
    "grid.n": (_int, None),
    "grid.half_width": (_float, 1.0),
    "coeff.kind": (_str, None),
    "coeff.a1": (_float, None),
    "coeff.a2": (_float, None),
    "coeff.angle": (_float, None),
    "coeff.ratio": (_float, None),
    "coeff.a_low": (_float, None),
    "coeff.a_high": (_float, None),
    "coeff.period": (_float, None),
    "coeff.base": (_float, None),
    "coeff.amplitude": (_float, None),
    "coeff.anisotropy": (_float, None),
    "coeff.wavelength": (_float, None),
    "coeff.allow_strong_anisotropy": (_bool, False),
    "x0": (_x0, "center"),
    "radii": (_floats, None),
    "solver.tol_lin": (_float, 1e-10),
    "solver.tol_psor": (_float, 1e-10),
    "solver.tol_kkt": (_float, 1e-8),
    "solver.eps_c": (_float, 1e-7),
    "solver.eps_p": (_float, 1e-8),
    "solver.omega": (_float, 1.5),
    "checks.nesting": (_bool, True),
    "checks.sandwich": (_bool, True),
    "checks.area": (_bool, True),
    "checks.density": (_bool, True),
    "checks.expansion": (_bool, True),
    "checks.convergence": (_bool, True),
    "checks.lsw": (_bool, True),
    "checks.bernoulli": (_bool, True),
    "density.samples": (_int, 20),
    "density.h_fracs": (_floats, (0.25, 0.4)),
    "expansion.distance": (_float, 0.1),
    "expansion.probes": (_int, 20),
    "convergence.r": (_float, 0.2),
    "convergence.deltas": (_floats, (0.02, 0.01, 0.005)),
    "bernoulli.n": (_int, 129),
    "bernoulli.c": (_float, 0.5),
    "bernoulli.radius": (_float, 0.1),
    "bernoulli.samples": (_int, 20),
    "bernoulli.trials": (_int, 50),
    "bernoulli.sigmas": (_floats, (0.05, 0.1, 0.2)),
    "output.dir": (_str, "out"),
    "seed": (_int, 0),
}

LOCATION_KEYS = ("output.dir",)
_COEFF_KEYS = {f"coeff.{p}" for ps in _REQUIRED.values() for p in ps}
_TOLERANCES = ("solver.tol_lin", "solver.tol_psor", "solver.tol_kkt", "solver.eps_c", "solver.eps_p")


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated configuration; ``values`` holds every key in schema order."""

    values: tuple

    def __getitem__(self, key):
        return dict(self.values)[key]

    def get(self, key, default=None):
        return dict(self.values).get(key, default)

    def replace(self, **changes):
        """Copy with keys replaced; dots in keys are written as ``__``."""
        d = dict(self.values)
        for k, v in changes.items():
            d[k.replace("__", ".")] = v
        return ScenarioConfig(tuple((k, d[k]) for k, _ in self.values))

    @property
    def grid_spec(self):
        return GridSpec(self["grid.n"], self["grid.half_width"])

    @property
    def coefficient_field(self):
        kind = self["coeff.kind"]
        params = tuple((p, self[f"coeff.{p}"]) for p in _REQUIRED[kind])
        return CoefficientField(kind, params, allow_strong_anisotropy=self["coeff.allow_strong_anisotropy"])

    @property
    def radii(self):
        return self["radii"]

    @property
    def seed(self):
        return self["seed"]

    def to_text(self):
        return format_config(self)

    def report_text(self):
        """Canonical text without ``output.dir``, which does not affect results."""
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.values if k not in LOCATION_KEYS)

    @property
    def hash(self):
        return hashlib.sha256(self.report_text().encode()).hexdigest()[:16]


def format_config(cfg):
    """Canonical text: every set key in schema order, one per line."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.values)


def parse_config(text):
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        With the line number of the first problem found.
    """
    seen = {}
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line)
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (t.strip() for t in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (lines {seen[key]} and {lineno})", lineno)
        parser = SCHEMA[key][0]
        try:
            raw[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"malformed value for {key}: {exc}", lineno) from None
        seen[key] = lineno
    return _validate(raw, seen)


def _strip_comment(line):
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def _validate(raw, lines):
    def fail(msg, key=None):
        raise ConfigError(msg, lines.get(key))

    for key in ("grid.n", "coeff.kind", "radii"):
        if key not in raw:
            fail(f"missing {key}")
    kind = raw["coeff.kind"]
    if kind not in KINDS:
        fail(f"unknown coefficient kind {kind!r}", "coeff.kind")
    needed = {f"coeff.{p}" for p in _REQUIRED[kind]}
    for key in sorted(needed - set(raw), key=list(SCHEMA).index):
        fail(f"missing {key}", "coeff.kind")
    for key in (_COEFF_KEYS & set(raw)) - needed:
        fail(f"{key} does not apply to coeff.kind = {kind}", key)

    values = []
    for key, (_, default) in SCHEMA.items():
        if key in raw:
            values.append((key, raw[key]))
        elif default is not None:
            values.append((key, default))
    cfg = ScenarioConfig(tuple(values))

    try:
        cfg.grid_spec
    except GridError as exc:
        fail(str(exc), "grid.n")
    try:
        cfg.coefficient_field
    except CoefficientError as exc:
        fail(str(exc), "coeff.kind")
    radii = cfg.radii
    if not radii:
        fail("radii must not be empty", "radii")
    if any(r <= 0 for r in radii):
        fail("radii must be positive", "radii")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        fail("radii must be strictly increasing", "radii")
    for key in _TOLERANCES:
        if not cfg[key] > 0:
            fail(f"{key} must be positive", key)
    if not 1.0 <= cfg["solver.omega"] < 2.0:
        fail("solver.omega must lie in [1, 2)", "solver.omega")
    for key in ("density.h_fracs",):
        if any(not 0 < v < 0.5 for v in cfg[key]):
            fail(f"{key} entries must lie in (0, 1/2)", key)
    for key in ("density.samples", "expansion.probes", "bernoulli.samples", "bernoulli.trials"):
        if cfg[key] < 1:
            fail(f"{key} must be at least 1", key)
    try:
        GridSpec(cfg["bernoulli.n"])
    except GridError as exc:
        fail(str(exc), "bernoulli.n")
    return cfg
