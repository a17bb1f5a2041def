"""Scenario orchestration: run the configured checks and collect tables.

Randomness comes from one seed.  Each step draws from its own stream,
``SeedSequence(seed, spawn_key=(STREAMS[step],))``, so enabling or
disabling a step never changes the samples another step sees.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bernoulli import (growth_iteration_check, minimize_bernoulli,
                        nondegeneracy_check, single_node_moves, slab_setup,
                        verify_local_minimality)
from .diagnostics import (boundary_density, continuous_expansion, expansion_indicator,
                          minimizer_convergence)
from .errors import MVSetsError, PreconditionError
from .export import pgm_bytes, svg_text
from .linalg import greens_function, make_subharmonic
from .mvset import (MeanValueFamily, check_nesting, compute_family, lsw_average, lsw_level,
                    mv_average)
from .obstacle import kkt_residuals
from .operator import build_operator
from .report import ReportTable, format_csv

log = logging.getLogger(__name__)

STREAMS = {"density": 0, "bernoulli": 1, "minimality": 2, "free_boundary": 3}
AREA_TOL = 0.05
AREA_MIN_CELLS = 20
STEPS = ("family", "mean_value", "lsw", "density", "expansion", "convergence", "bernoulli")


def stream(seed, name):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[name],)))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class ScenarioResult:
    """Tables, checks and export payloads of one run, in execution order."""

    config: object
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary_table(self):
        return ReportTable("summary", ("check", "passed", "value", "detail"),
                           tuple((c.name, c.passed, float(c.value), c.detail) for c in self.checks),
                           self._meta())

    def _meta(self):
        return (("config_hash", self.config.hash), ("version", __version__),
                ("seed", self.config.seed))

    def add_table(self, name, columns, rows):
        self.tables[name] = ReportTable(name, columns, rows, self._meta())

    def check(self, name, passed, value, detail=""):
        self.checks.append(CheckResult(name, bool(passed), float(value), detail))


class StepError(MVSetsError):
    """A module error tagged with the scenario step that raised it."""

    def __init__(self, step, exc):
        super().__init__(f"step {step}: {exc}")
        self.step = step
        self.cause = exc


def _solve_kw(cfg, R, gmax):
    """Absolute solver thresholds from the relative ones in the config."""
    return dict(omega=cfg["solver.omega"], tol=cfg["solver.tol_psor"] * gmax,
                tol_kkt=cfg["solver.tol_kkt"] * max(R ** -2, 1.0),
                eps_c=cfg["solver.eps_c"] * gmax)


class _Context:
    def __init__(self, cfg):
        self.cfg = cfg
        self.op = build_operator(cfg.coefficient_field, cfg.grid_spec)
        self.x0 = self.op.grid.resolve_node(cfg["x0"])
        self.green = greens_function(self.op, self.x0)
        self.gmax = float(self.green.field.max())
        self.family = None

    def kw(self, R):
        return _solve_kw(self.cfg, R, self.gmax)

    def get_family(self):
        if self.family is None:
            sets, gaps = [], {}
            for R in self.cfg.radii:
                f = compute_family(self.op, self.x0, [R], green=self.green, **self.kw(R))
                sets.extend(f.sets)
                gaps.update(f.gaps)
            self.family = MeanValueFamily(tuple(sets), self.x0, self.op, gaps)
        return self.family


def _step_family(ctx, res):
    cfg = ctx.cfg
    fam = ctx.get_family()
    h = ctx.op.h
    rows = []
    for s in fam:
        sol = s.solution
        kkt = kkt_residuals(sol)
        w = sol.w
        unk = ctx.op.unknown
        lo = int(np.count_nonzero(unk & (w > sol.eps_c / 10)))
        hi = int(np.count_nonzero(unk & (w > sol.eps_c * 10)))
        rows.append((s.R, s.area, s.area / s.R ** 2, s.components, s.inradius, s.outradius,
                     s.inradius / s.R, s.outradius / s.R, int(s.boundary.sum()), len(s.violations),
                     sol.sweeps, kkt.max_feasibility_violation,
                     kkt.max_stationarity_residual_on_noncontact, kkt.max_complementarity_product,
                     kkt.passed, sol.eps_c, s.cell_count, lo, hi))
    res.add_table("family", ("R", "area", "area_ratio", "components", "inradius", "outradius",
                             "in_over_R", "out_over_R", "boundary_cells", "violations", "sweeps",
                             "kkt_feasibility", "kkt_stationarity", "kkt_complementarity",
                             "kkt_passed", "eps_c", "cells", "cells_eps_c_div10",
                             "cells_eps_c_mul10"), rows)
    res.check("kkt", all(r[14] for r in rows), len(rows))
    res.check("gaps", not fam.gaps, len(fam.gaps), "; ".join(f"R={k:g}" for k in fam.gaps))
    if cfg["checks.area"]:
        devs = [abs(s.area / s.R ** 2 - 1) for s in fam if s.R >= AREA_MIN_CELLS * h]
        dev = max(devs, default=0.0)
        res.check("area_law", dev <= AREA_TOL, dev, f"max |area/R^2 - 1| over {len(devs)} sets")
    res.check("connectivity", all(s.components == 1 and s.mask[s.x0] for s in fam),
              max((s.components for s in fam), default=0))
    if cfg["checks.nesting"] and len(fam) >= 2:
        rep = check_nesting(fam)
        res.check("nesting", rep.passed, rep.violations)
    if cfg["checks.sandwich"] and len(fam):
        ratios = [s.inradius / s.R for s in fam]
        spread = max(ratios) - min(ratios)
        bound = 4 * h / min(s.R for s in fam)
        res.check("sandwich", spread <= bound and fam.c_emp > 0, spread,
                  f"c_emp={fam.c_emp:.6g} C_emp={fam.C_emp:.6g}")
    res.artifacts["family.svg"] = svg_text(fam).encode()
    for s in fam:
        res.artifacts[f"mask_R{s.R:g}.pgm"] = pgm_bytes(s)


def _test_fields(op, tol):
    X = op.grid.X
    return {
        "constant": np.ones(op.shape),
        "harmonic": make_subharmonic(op, 0.0, X + 2.0, tol=tol, method="direct"),
        "subsolution": make_subharmonic(op, 1.0, 0.0, tol=tol, method="direct"),
    }


def _step_mean_value(ctx, res):
    fam = ctx.get_family()
    op = ctx.op
    rows = []
    ok = True
    worst = 0.0
    for name, v in _test_fields(op, ctx.cfg["solver.tol_lin"]).items():
        v0 = float(v[ctx.x0])
        scale = max(1.0, float(np.abs(v).max()))
        avgs = [mv_average(s, v) for s in fam]
        for s, a in zip(fam, avgs):
            rows.append((name, s.R, a, v0, a - v0))
        mono = all(b >= a - 1e-8 * scale for a, b in zip(avgs, avgs[1:]))
        below = all(a >= v0 - 1e-8 for a in avgs)
        ok &= mono and below
        if name == "harmonic":
            gx, gy = np.gradient(v, op.h)
            grad = float(np.hypot(gx, gy)[op.unknown].max())
            err = max((abs(a - v0) for a in avgs), default=0.0)
            worst = err / (op.h * grad)
            ok &= worst <= 3.0
    res.add_table("mean_value", ("field", "R", "average", "center_value", "difference"), rows)
    res.check("mean_value", ok, worst, "harmonic error in units of h*|grad v|")


def _step_lsw(ctx, res):
    op = ctx.op
    a = lsw_level(op, ctx.x0, ctx.green)
    rows = []
    for name, v in _test_fields(op, ctx.cfg["solver.tol_lin"]).items():
        rows.append((name, a, lsw_average(op, ctx.x0, v, a, ctx.green), float(v[ctx.x0])))
    res.add_table("lsw", ("field", "level", "average", "center_value"), rows)
    res.check("lsw_constant", abs(rows[0][2] - 1) <= 0.05, rows[0][2])


def _step_density(ctx, res):
    cfg = ctx.cfg
    fam = ctx.get_family()
    rng = stream(cfg.seed, "density")
    rows = []
    tau = np.inf
    for s in fam:
        for hf in cfg["density.h_fracs"]:
            try:
                rep = boundary_density(s, hf, cfg["density.samples"], rng, c_emp=fam.c_emp)
            except PreconditionError as exc:
                log.info("density skipped for R=%g, h_frac=%g: %s", s.R, hf, exc)
                continue
            for (y, _, ratio) in rep.samples:
                rows.append((s.R, hf, rep.ball_radius, y[0], y[1], ratio))
            tau = min(tau, rep.tau_min)
    res.add_table("density", ("R", "h_frac", "ball_radius", "y0_x", "y0_y", "ratio"), rows)
    res.check("density", bool(rows) and tau > 0, tau if rows else 0.0, "tau_min")


def expansion_probe(op, x0, distance):
    """Node at ``distance`` along +x from ``x0`` and an admissible range of probe radii."""
    grid = op.grid
    i, j = x0
    y0 = (i + int(round(distance / grid.h)), j)
    room = grid.boundary_distance(x0)
    r_max = (room - 4 * grid.h) / 2.0
    return y0, r_max


def _step_expansion(ctx, res):
    cfg = ctx.cfg
    op = ctx.op
    d = cfg["expansion.distance"]
    y0, r_max = expansion_probe(op, ctx.x0, d)
    radii = np.linspace(0.25 * d, min(r_max, 4.0 * d), cfg["expansion.probes"])
    flags, switches = expansion_indicator(op, ctx.x0, y0, radii, ctx.green, omega=cfg["solver.omega"])
    rows = [(float(r), f) for r, f in zip(radii, flags)]
    res.add_table("expansion_indicator", ("R", "y0_inside"), rows)
    single = switches == 1 and not flags[0] and flags[-1]
    res.check("expansion_single_switch", single, switches)
    if single:
        k = flags.index(True)
        er = None
        # t must leave y0 two cells inside D_t; later probes are further in
        for t in radii[k:]:
            try:
                er = continuous_expansion(op, ctx.x0, y0, float(radii[k - 1]), float(t), ctx.green,
                                          omega=cfg["solver.omega"])
                break
            except PreconditionError:
                continue
        if er is None:
            res.check("expansion_located", False, np.nan, "no admissible upper bracket")
            return
        res.add_table("expansion", ("s", "t", "r_star", "band", "steps", "near_boundary"),
                      [(er.bracket[0], er.bracket[1], er.r_star, er.band, er.steps, er.near_boundary)])
        res.check("expansion_located", er.near_boundary, er.r_star)


def _step_convergence(ctx, res):
    cfg = ctx.cfg
    rep = minimizer_convergence(ctx.op, ctx.x0, cfg["convergence.r"], cfg["convergence.deltas"],
                                ctx.green, omega=cfg["solver.omega"])
    rows = [(d, a, b) for d, a, b in zip(rep.deltas, rep.sup_norm_diffs, rep.w_sup_norm_diffs)]
    res.add_table("convergence", ("delta", "sup_u", "sup_w"), rows)
    du = np.array(rep.sup_norm_diffs)
    ok = (rep.strictly_decreasing and du[-1] <= 0.5 * du[0]
          and np.allclose(du, rep.w_sup_norm_diffs, rtol=1e-12, atol=1e-14))
    res.check("convergence", ok, du[-1] / du[0] if du[0] else 0.0,
              f"last/first; energy bound {rep.h1_energy_bound:.6g}")


def _step_bernoulli(ctx, res):
    cfg = ctx.cfg
    n, c = cfg["bernoulli.n"], cfg["bernoulli.c"]
    op, phi, s = slab_setup(n, c)
    h = op.h
    state = minimize_bernoulli(op, phi, rng=stream(cfg.seed, "bernoulli"),
                               eps_rel=cfg["solver.eps_p"])
    mid = n // 2
    pos = state.positivity_mask[:, mid]
    front = float(s[:, mid][pos].max()) + 0.5 * h if pos.any() else 0.0
    per_height = state.energy / ((n - 2) * h)
    r = cfg["bernoulli.radius"]
    fb = nondegeneracy_check(state, cfg["bernoulli.samples"], [r], stream(cfg.seed, "free_boundary"))
    moves, _ = single_node_moves(state)
    mini = verify_local_minimality(state, cfg["bernoulli.trials"], stream(cfg.seed, "minimality"))
    counts = [int(np.count_nonzero(state.u[op.unknown] > state.eps_p * f)) for f in (0.1, 1.0, 10.0)]
    res.add_table("bernoulli", ("energy", "energy_per_height", "front", "single_node_moves",
                                "competitor_violations", "harmonic_gap_min", "support_eps_div10",
                                "support", "support_eps_mul10", "lipschitz"),
                  [(state.energy, per_height, front, moves, mini.violations,
                    min(mini.harmonic_gaps, default=np.nan), *counts,
                    float(np.abs(np.diff(state.u[:, mid])).max() / h))])
    res.add_table("free_boundary", ("z0_i", "z0_j", "r", "sup_ratio", "pos_density", "zero_density"),
                  [(z[0], z[1], rr, a, b, cc) for z, rr, a, b, cc in fb.samples])
    res.check("bernoulli_energy", abs(per_height - 2 * c) <= 0.05 * 2 * c, per_height)
    res.check("bernoulli_front", abs(front - c) <= 2 * h, front)
    lo, hi = fb.sup_ratio_range
    res.check("nondegeneracy", 1 - 4 * h / r <= lo and hi <= 1 + 4 * h / r, hi)
    res.check("density_two_sided", fb.theta_pos > 0 and fb.theta_zero > 0,
              min(fb.theta_pos, fb.theta_zero))
    res.check("local_minimality", moves == 0 and mini.passed and
              all(g > 0 for g in mini.harmonic_gaps), mini.min_gap)
    rows = []
    spread_vals = []
    for sigma in cfg["bernoulli.sigmas"]:
        i = int(np.argmin(np.abs(state.u[:, mid] - sigma)))
        g = growth_iteration_check(state, (i, mid))
        rows.append((sigma, g.sigma, g.hypothesis_met, g.comparability[0], g.comparability[1],
                     g.rho, g.eta, g.gamma, g.beta, g.lipschitz, g.mv_identity_error))
        if g.hypothesis_met:
            spread_vals.append(g.rho / g.sigma)
    res.add_table("growth", ("sigma_target", "sigma", "hypothesis_met", "comparability_min",
                             "comparability_max", "rho", "eta", "gamma", "beta", "lipschitz",
                             "mv_identity_error"), rows)
    ok = all(r[2] and r[7] > 0 and np.isfinite(r[8]) for r in rows)
    spread = (max(spread_vals) - min(spread_vals)) / np.mean(spread_vals) if spread_vals else np.inf
    res.check("growth", ok and spread <= 0.2, spread, "relative spread of rho/sigma")
    res.artifacts["bernoulli.pgm"] = pgm_bytes(state)
    res.artifacts["bernoulli.svg"] = svg_text(state).encode()


_RUNNERS = {
    "family": (_step_family, None),
    "mean_value": (_step_mean_value, None),
    "lsw": (_step_lsw, "checks.lsw"),
    "density": (_step_density, "checks.density"),
    "expansion": (_step_expansion, "checks.expansion"),
    "convergence": (_step_convergence, "checks.convergence"),
    "bernoulli": (_step_bernoulli, "checks.bernoulli"),
}


def run_scenario(cfg, steps=STEPS):
    """Run ``steps`` in a fixed order; toggled-off checks are skipped.

    Module errors are re-raised as :class:`StepError` naming the step.
    """
    res = ScenarioResult(cfg)
    ctx = None
    for step in STEPS:
        if step not in steps:
            continue
        fn, toggle = _RUNNERS[step]
        if toggle is not None and not cfg[toggle]:
            continue
        try:
            if ctx is None and step != "bernoulli":
                ctx = _Context(cfg)
            fn(ctx, res)
        except MVSetsError as exc:
            raise StepError(step, exc) from exc
    return res


def write_outputs(res, out_dir):
    """Write every table as CSV plus the summary and export payloads; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    tables = dict(res.tables)
    tables["summary"] = res.summary_table()
    for name, table in tables.items():
        p = os.path.join(out_dir, f"{name}.csv")
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(table))
        paths.append(p)
    for name, data in res.artifacts.items():
        p = os.path.join(out_dir, name)
        with open(p, "wb") as fh:
            fh.write(data)
        paths.append(p)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(res.config.report_text())
    paths.append(os.path.join(out_dir, "config.txt"))
    return paths
