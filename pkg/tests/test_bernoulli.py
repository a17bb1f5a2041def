import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp

from mvsets import CoefficientField, GridSpec, build_operator
from mvsets.bernoulli import (bernoulli_energy, density_check, growth_iteration_check,
                              harmonic_replacement, lipschitz_constant, minimize_bernoulli,
                              nondegeneracy_check, single_node_moves, slab_setup,
                              verify_local_minimality)
from mvsets.errors import PreconditionError

from oracles import brute_single_node, dense_stiffness, slab_energy_per_height, slab_profile

C = 0.5


@pytest.fixture(scope="module")
def slab():
    op, phi, s = slab_setup(129, C)
    state = minimize_bernoulli(op, phi, rng=np.random.default_rng(0), record_energy=True)
    return state, s


@pytest.fixture(scope="module")
def slab33():
    op, phi, s = slab_setup(33, C)
    return minimize_bernoulli(op, phi, rng=np.random.default_rng(0)), s


def test_slab_closed_form(slab):
    state, s = slab
    op = state.operator
    h = op.h
    unk = op.unknown
    assert np.abs(state.u - slab_profile(s, C))[unk].max() <= 2 * h
    mid = op.grid.n // 2
    front = s[:, mid][state.positivity_mask[:, mid]].max() + 0.5 * h
    assert abs(front - C) <= 2 * h
    height = (op.grid.n - 2) * h
    assert abs(state.energy / height / slab_energy_per_height(C) - 1) <= 0.05
    # every row of the slab is the same
    rows = state.u[:, 1:-1]
    assert np.abs(rows - rows[:, :1]).max() <= 1e-8


def test_state_invariants(slab):
    state, _ = slab
    op = state.operator
    fixed = op.grid.active & ~op.unknown
    assert state.u.min() >= 0
    assert np.array_equal(state.u[fixed], state.phi[fixed])
    assert state.interior_harmonicity() <= 1e-8
    assert state.energy == bernoulli_energy(op, state.u, state.eps_p)
    assert len(state.restart_energies) == 3 and state.energy == min(state.restart_energies)
    hist = np.array(state.energy_history)
    assert np.all(np.diff(hist) <= 1e-12 * hist.max())
    fb = state.free_boundary_cells
    assert fb.any() and np.all(state.positivity_mask[fb])


def test_zero_data():
    op, phi, _ = slab_setup(33, C)
    st = minimize_bernoulli(op, np.zeros(op.shape))
    assert st.energy == 0 and np.all(st.u == 0)


def test_negative_data_rejected():
    op, phi, _ = slab_setup(33, C)
    with pytest.raises(PreconditionError):
        minimize_bernoulli(op, -phi)


def test_large_data_fills_domain():
    op = build_operator(CoefficientField.identity(), GridSpec(33))
    st = minimize_bernoulli(op, 10.0)
    assert np.all(st.u[op.unknown] > 0)
    np.testing.assert_allclose(st.u[op.unknown], 10.0, atol=1e-9)
    assert st.energy == pytest.approx(op.h ** 2 * op.unknown.sum(), rel=1e-12)


def test_single_node_moves_exhaustive(slab33):
    state, _ = slab33
    op = state.operator
    c = op.coeffs
    K = sp.csr_matrix(dense_stiffness(c.a11, c.a12, c.a22, op.grid.active))
    u = state.u.ravel().copy()
    free = op.unknown.ravel()
    Kd = K.diagonal()

    def candidates(v, k):
        # zero, the exact positive minimizer, and nearby values
        off = float((K[k] @ v)[0]) - Kd[k] * v[k]
        tstar = max(-off / Kd[k], 0.0)
        return (0.0, tstar, 0.5 * v[k], v[k] + 1e-3, max(v[k] - 1e-3, 0.0))

    gain = brute_single_node(K, u, free, op.h ** 2, state.eps_p, candidates)
    assert gain >= -1e-9 * op.h ** 2
    assert single_node_moves(state)[0] == 0


def test_single_node_detects_bad_state(slab33):
    state, _ = slab33
    u = np.array(state.u)
    k = np.argwhere(state.free_boundary_cells)[0]
    u[tuple(k)] *= 3
    bad = dataclasses.replace(state, u=u)
    count, gain = single_node_moves(bad)
    assert count >= 1 and gain > 0


def test_local_minimality(slab):
    state, _ = slab
    rep = verify_local_minimality(state, trials=50, rng=np.random.default_rng(4))
    assert rep.passed and rep.violations == 0
    assert len(rep.harmonic_gaps) == 10 and min(rep.harmonic_gaps) > 0
    # reflexivity: u itself has zero gap
    assert bernoulli_energy(state.operator, state.u, state.eps_p) - state.energy == 0
    z = tuple(np.argwhere(state.free_boundary_cells)[3])
    v = harmonic_replacement(state, z, 4 * state.operator.h)
    assert bernoulli_energy(state.operator, v, state.eps_p) > state.energy


def test_nondegeneracy_and_density(slab):
    state, _ = slab
    h, r = state.operator.h, 0.1
    nd = nondegeneracy_check(state, 20, [r], np.random.default_rng(1))
    lo, hi = nd.sup_ratio_range
    assert 1 - 2 * h / r <= lo and hi <= 1 + 2 * h / r
    dens = density_check(state, 20, [r], np.random.default_rng(1))
    assert np.all(np.abs(dens.pos_densities - 0.5) <= 2 * h / r)
    assert np.all(np.abs(dens.zero_densities - 0.5) <= 2 * h / r)
    assert np.all(dens.pos_densities + dens.zero_densities == 1)


def test_free_boundary_preconditions(slab):
    state, _ = slab
    with pytest.raises(PreconditionError, match="5 cells"):
        nondegeneracy_check(state, 5, [2 * state.operator.h])
    zero_node = tuple(np.argwhere(state.zero_mask & state.operator.unknown)[-1])
    with pytest.raises(PreconditionError, match="free-boundary"):
        density_check(state, centers=[zero_node])


def test_checkerboard_slab_zero_density():
    field = CoefficientField.checkerboard(1.0, 2.0, 0.25)
    op, phi, _ = slab_setup(129, C, field=field)
    state = minimize_bernoulli(op, phi, rng=np.random.default_rng(0))
    rep = density_check(state, 20, [0.08, 0.1, 0.12], np.random.default_rng(2))
    assert rep.theta_zero > 0 and rep.theta_pos > 0
    lo, hi = nondegeneracy_check(state, 20, [0.08, 0.1, 0.12], np.random.default_rng(2)).sup_ratio_range
    assert 0.5 <= lo and hi <= 2


def test_growth_iteration(slab):
    state, _ = slab
    op = state.operator
    mid = op.grid.n // 2
    reps = []
    for sigma in (0.05, 0.1, 0.2):
        i = int(np.argmin(np.abs(state.u[:, mid] - sigma)))
        reps.append(growth_iteration_check(state, (i, mid)))
    assert all(r.hypothesis_met for r in reps)
    assert all(r.gamma > 0 and np.isfinite(r.beta) for r in reps)
    q = np.array([r.rho / r.sigma for r in reps])
    assert (q.max() - q.min()) / q.mean() <= 0.2
    assert all(r.mv_identity_error <= 2 * op.h * r.lipschitz for r in reps)
    assert lipschitz_constant(state) == pytest.approx(1.0, abs=0.1)


def test_growth_hypothesis_not_met(slab):
    state, _ = slab
    mid = state.operator.grid.n // 2
    i = int(np.argmin(np.abs(state.u[:, mid] - 0.1)))
    rep = growth_iteration_check(state, (i, mid), comparability_bounds=(2.0, 4.0))
    assert not rep.hypothesis_met and np.isnan(rep.rho) and np.isnan(rep.gamma)
    with pytest.raises(PreconditionError):
        growth_iteration_check(state, (state.operator.grid.n - 3, mid))
