import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvsets import CoefficientField, GridSpec, build_grid, build_operator
from mvsets.coefficients import sample_coefficients
from mvsets.errors import AssemblyError, CoefficientError, GridError
from mvsets.operator import apply_operator, assemble_operator

from oracles import dense_stiffness, operator_on_quadratic


def test_grid_spacing_and_center():
    g = build_grid(GridSpec(129))
    assert g.h == 2 / 129
    assert tuple(g.point(g.center_index)) == (0.0, 0.0)
    assert build_grid(GridSpec(257, 2.0)).h == 4 / 257


@pytest.mark.parametrize("n, msg", [(16, "odd"), (15, "at least"), (17.5, "integer")])
def test_grid_rejects_bad_n(n, msg):
    with pytest.raises(GridError, match=msg):
        GridSpec(n)


def test_from_spacing_lines_up_nodes():
    a = build_grid(GridSpec(33))
    b = build_grid(GridSpec.from_spacing(67, a.h))
    assert b.h == a.h
    np.testing.assert_allclose(b.coords[17:50], a.coords, atol=1e-15)


def test_lateral_neumann_classification():
    g = build_grid(GridSpec(17), lateral_neumann=True)
    assert not g.active[:, 0].any() and not g.active[:, -1].any()
    assert g.dirichlet[0, 1:-1].all() and g.dirichlet[-1, 1:-1].all()
    assert g.unknown.sum() == 15 * 15


def test_identity_samples():
    c = sample_coefficients(CoefficientField.identity(), build_grid(GridSpec(17)))
    assert np.all(c.face_x == 1) and np.all(c.face_y == 1) and np.all(c.corner == 0)


def test_checkerboard_face_is_harmonic_mean():
    grid = build_grid(GridSpec(129))
    c = sample_coefficients(CoefficientField.checkerboard(1.0, 4.0, 0.25), grid)
    jump = c.a11[:-1, :] != c.a11[1:, :]
    assert jump.any()
    np.testing.assert_allclose(c.face_x[jump], 1.6)


def test_rotated_eigenvalues():
    grid = build_grid(GridSpec(33))
    c = sample_coefficients(CoefficientField.rotated_anisotropic(np.pi / 4, 4.0), grid)
    A = np.stack([np.stack([c.a11, c.a12]), np.stack([c.a12, c.a22])]).transpose(2, 3, 0, 1)
    np.testing.assert_allclose(np.linalg.eigvalsh(A), np.broadcast_to([1.0, 4.0], (33, 33, 2)), atol=1e-12)


@pytest.mark.parametrize("make, msg", [
    (lambda: CoefficientField.rotated_anisotropic(0.3, 11.0), "exceeds"),
    (lambda: CoefficientField.checkerboard(0.0, 4.0, 0.25), "a_low"),
    (lambda: CoefficientField.diagonal(1.0, -1.0), "positive"),
    (lambda: CoefficientField("nope"), "unknown"),
    (lambda: CoefficientField("diagonal", (("a1", 1.0),)), "a2"),
])
def test_coefficient_errors(make, msg):
    with pytest.raises(CoefficientError, match=msg):
        make()


def test_strong_anisotropy_override():
    f = CoefficientField.rotated_anisotropic(0.3, 20.0, allow_strong_anisotropy=True)
    assert (f.lam, f.mu) == (1.0, 20.0)


@given(kind=st.sampled_from(["diagonal", "rotated", "checkerboard", "smooth"]),
       p=st.floats(0.1, 0.9), q=st.floats(1.0, 8.0), seed=st.integers(0, 2 ** 32 - 1))
def test_ellipticity_sandwich(kind, p, q, seed):
    field = {
        "diagonal": CoefficientField.diagonal(p, q),
        "rotated": CoefficientField.rotated_anisotropic(6 * p, q),
        "checkerboard": CoefficientField.checkerboard(p, q, p),
        "smooth": CoefficientField.smooth_variable(q, p, 0.2 * p * q * (1 - p), p),
    }[kind]
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-1, 1, (2, 1000))
    t = rng.uniform(0, 2 * np.pi, 1000)
    xi = np.stack([np.cos(t), np.sin(t)])
    a11, a12, a22 = field.tensor(x, y)
    quad = a11 * xi[0] ** 2 + 2 * a12 * xi[0] * xi[1] + a22 * xi[1] ** 2
    assert np.all(quad >= field.lam * (1 - 1e-12)) and np.all(quad <= field.mu * (1 + 1e-12))


def test_laplacian_stencil():
    op = build_operator(CoefficientField.identity(), GridSpec(17))
    h2 = op.h ** 2
    np.testing.assert_allclose(op.stencil((8, 8)) * h2, [[0, -1, 0], [-1, 4, -1], [0, -1, 0]])
    op2 = build_operator(CoefficientField.diagonal(2.0, 2.0), GridSpec(17))
    np.testing.assert_allclose(op2.stencil((8, 8)), 2 * op.stencil((8, 8)))


@pytest.mark.parametrize("name", ["identity", "diagonal", "rotated", "checkerboard"])
def test_stiffness_matches_dense_assembly(small_ops, name):
    op = small_ops[name]
    c = op.coeffs
    Kd = dense_stiffness(c.a11, c.a12, c.a22, op.grid.active)
    np.testing.assert_allclose(op.K.toarray(), Kd, atol=1e-13)


@pytest.mark.parametrize("name", ["identity", "diagonal", "rotated", "checkerboard"])
def test_symmetry_and_constants(small_ops, name):
    op = small_ops[name]
    K = op.K.toarray()
    assert np.array_equal(K, K.T)
    assert np.abs(apply_operator(op, np.full(op.shape, 3.7))).max() < 1e-10
    assert np.all(apply_operator(op, np.zeros(op.shape)) == 0)
    flat = np.flatnonzero(op.unknown.ravel())
    assert np.linalg.eigvalsh(K[np.ix_(flat, flat)]).min() > 0


@given(a=st.floats(0.2, 5.0), b=st.floats(0.2, 5.0), angle=st.floats(0, np.pi),
       m=st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3)))
def test_exact_on_quadratics(a, b, angle, m):
    ratio = max(a, b) / min(a, b)
    field = CoefficientField.rotated_anisotropic(angle, min(ratio, 9.0))
    op = build_operator(field, GridSpec(17))
    M = [[m[0], m[1]], [m[1], m[2]]]
    X, Y = op.grid.X, op.grid.Y
    u = 0.5 * (m[0] * X ** 2 + 2 * m[1] * X * Y + m[2] * Y ** 2)
    a11, a12, a22 = field.tensor(0.0, 0.0)
    expect = operator_on_quadratic(float(a11), float(a12), float(a22), M)
    Lu = apply_operator(op, u)[op.unknown]
    np.testing.assert_allclose(Lu, expect, atol=1e-9 * (1 + np.abs(m).max()))


def test_laplacian_of_r_squared():
    op = build_operator(CoefficientField.identity(), GridSpec(33))
    Lu = apply_operator(op, op.grid.X ** 2 + op.grid.Y ** 2)
    np.testing.assert_allclose(Lu[op.unknown], 4.0, rtol=1e-10)


def test_neumann_rejects_cross_terms():
    grid = build_grid(GridSpec(17), lateral_neumann=True)
    coeffs = sample_coefficients(CoefficientField.rotated_anisotropic(0.5, 3.0), grid)
    with pytest.raises(AssemblyError):
        assemble_operator(grid, coeffs)


def test_grid_mismatch():
    op = build_operator(CoefficientField.identity(), GridSpec(17))
    with pytest.raises(GridError):
        apply_operator(op, np.zeros((19, 19)))
