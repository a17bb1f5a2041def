import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvsets import GridSpec, build_operator, compute_family, greens_function
from mvsets.diagnostics import (ball_fraction, boundary_density, boundary_points,
                                continuous_expansion, domain_independence, expansion_indicator,
                                minimizer_convergence)
from mvsets.errors import DomainMarginError, PreconditionError

from conftest import OPERATORS
from oracles import disc_radius, lens_fraction


@pytest.fixture(scope="module")
def lap_sets(lap129):
    op, gf = lap129
    return compute_family(op, None, [0.2, 0.3], green=gf)


def test_lens_oracle_values():
    # a vanishing ball sees half of a smooth boundary; larger balls see less
    assert abs(lens_fraction(1.0, 1e-3) - 0.5) < 1e-3
    assert lens_fraction(0.1128, 0.02) < 0.5


def test_disc_density_matches_lens(lap_sets):
    s = lap_sets[1]
    rep = boundary_density(s, 0.25, 20, np.random.default_rng(0))
    expect = lens_fraction(disc_radius(s.R), rep.ball_radius)
    assert abs(expect - 0.5) < 0.05
    assert np.all(np.abs(rep.ratios - expect) <= 0.1)
    assert 0 < rep.tau_min <= rep.tau_max <= 1


def test_boundary_points_lie_on_edge(lap_sets):
    s = lap_sets[0]
    pts = boundary_points(s)
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert np.abs(r - disc_radius(s.R)).max() <= 1.5 * s.h


def test_density_preconditions(lap_sets):
    s = lap_sets[0]
    with pytest.raises(PreconditionError, match="h_frac"):
        boundary_density(s, 0.5, 5)
    with pytest.raises(PreconditionError, match="cells"):
        boundary_density(s, 0.01, 5)
    with pytest.raises(PreconditionError, match="boundary points"):
        boundary_density(s, 0.25, 10 ** 6)
    with pytest.raises(PreconditionError):
        ball_fraction(s.mask, s.grid, (0.5 * s.h, 0.5 * s.h), 0.1 * s.h)


@given(seed=st.integers(0, 2 ** 32 - 1), h_frac=st.floats(0.2, 0.45))
def test_density_ratios_in_unit_interval(lap_sets, seed, h_frac):
    rep = boundary_density(lap_sets[1], h_frac, 10, np.random.default_rng(seed))
    assert np.all(rep.ratios > 0) and np.all(rep.ratios <= 1)


def test_laplacian_expansion(lap129):
    op, gf = lap129
    c = op.grid.center_index
    k = int(round(0.1 / op.h))
    res = continuous_expansion(op, c, (c[0] + k, c[1]), 0.05, 0.4, gf)
    d = k * op.h
    assert abs(res.r_star - d * np.sqrt(np.pi)) <= 2 * op.h
    s, t = res.bracket
    assert s < res.r_star < t and res.band <= 0.25 * op.h
    assert res.near_boundary


def test_expansion_preconditions(lap129):
    op, gf = lap129
    c = op.grid.center_index
    with pytest.raises(PreconditionError, match="coincides"):
        continuous_expansion(op, c, c, 0.1, 0.2, gf)
    with pytest.raises(PreconditionError, match="already"):
        continuous_expansion(op, c, (c[0] + 3, c[1]), 0.2, 0.3, gf)
    with pytest.raises(PreconditionError, match="straddle"):
        continuous_expansion(op, c, (c[0] + 20, c[1]), 0.1, 0.2, gf)


def test_rotated_expansion_prefers_long_axis():
    op = build_operator(OPERATORS["rotated"], GridSpec(129))
    gf = greens_function(op)
    c = op.grid.center_index
    # conductivity 4 lies across the pi/4 direction, so sets stretch along (-1, 1)
    long_axis = continuous_expansion(op, c, (c[0] - 5, c[1] + 5), 0.05, 0.45, gf)
    short_axis = continuous_expansion(op, c, (c[0] + 5, c[1] + 5), 0.05, 0.45, gf)
    assert long_axis.r_star < short_axis.r_star


def test_indicator_single_switch(lap129):
    op, gf = lap129
    c = op.grid.center_index
    flags, switches = expansion_indicator(op, c, (c[0] + 6, c[1]), np.linspace(0.05, 0.4, 8), gf)
    assert switches == 1 and not flags[0] and flags[-1]


def test_minimizer_convergence(lap129):
    op, gf = lap129
    rep = minimizer_convergence(op, None, 0.2, [0.02, 0.01, 0.005, 0.0], gf)
    d = rep.sup_norm_diffs
    assert d[1] < d[0] and d[2] < d[1]
    assert d[1] / d[0] <= 0.75
    assert d[3] <= 10 * 1e-10 * gf.field.max()
    np.testing.assert_allclose(rep.w_sup_norm_diffs, d, rtol=1e-12, atol=1e-14)
    assert np.isfinite(rep.h1_energy_bound) and rep.h1_energy_bound > 0


@pytest.mark.parametrize("name, R", [("identity", 0.2), ("checkerboard", 0.15)])
def test_domain_independence(name, R):
    res = domain_independence(GridSpec(129), OPERATORS[name], None, R)
    assert res and res.mismatched_cells == 0
    assert res.w_max_diff <= 1e-8


def test_domain_independence_margin():
    with pytest.raises(DomainMarginError):
        domain_independence(GridSpec(65), OPERATORS["identity"], None, 1.7, margin_factor=0.5)
