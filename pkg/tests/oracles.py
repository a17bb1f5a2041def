"""Reference computations that share no code with the package solvers.

Each oracle reaches its answer by a different route from the code under
test: a dense active-set QP instead of projected SOR, closed forms for the
radial and slab problems, a pointwise stencil for the operator, and brute
force for the Bernoulli single-node moves.
"""
import numpy as np


def dense_stiffness(a11, a12, a22, active):
    """Dense ``K`` assembled edge by edge from cell-centred tensor samples.

    Face weights are harmonic means of the diagonal entries, diagonal edges
    carry ``+-a12/2`` averaged over the four cells around the vertex.  The
    loops are deliberately naive.
    """
    n = a11.shape[0]
    K = np.zeros((n * n, n * n))

    def edge(p, q, w):
        if w == 0:
            return
        a, b = p[0] * n + p[1], q[0] * n + q[1]
        K[a, a] += w
        K[b, b] += w
        K[a, b] -= w
        K[b, a] -= w

    for i in range(n):
        for j in range(n):
            if not active[i, j]:
                continue
            if i + 1 < n and active[i + 1, j]:
                edge((i, j), (i + 1, j), 2 * a11[i, j] * a11[i + 1, j] / (a11[i, j] + a11[i + 1, j]))
            if j + 1 < n and active[i, j + 1]:
                edge((i, j), (i, j + 1), 2 * a22[i, j] * a22[i, j + 1] / (a22[i, j] + a22[i, j + 1]))
            if i + 1 < n and j + 1 < n:
                c = 0.25 * (a12[i, j] + a12[i + 1, j] + a12[i, j + 1] + a12[i + 1, j + 1])
                if active[i + 1, j + 1]:
                    edge((i, j), (i + 1, j + 1), 0.5 * c)
                if active[i + 1, j] and active[i, j + 1]:
                    edge((i + 1, j), (i, j + 1), -0.5 * c)
    return K


def active_set_qp(K, b, g, free, max_iter=200):
    """Minimize ``u.K.u/2 - b.u`` over ``u <= g`` on ``free`` nodes, ``u = g`` fixed elsewhere.

    Primal-dual active set iteration on dense matrices.  The multiplier is
    ``lam = b - K u >= 0`` and the active set is ``{lam + (u - g) > 0}``;
    the iteration stops when the active set repeats, which for an M-matrix
    or a small SPD system happens after a handful of steps.

    Returns
    -------
    u, lam, iterations
    """
    n = len(b)
    free = np.asarray(free, bool)
    fixed = ~free
    u = np.array(g, dtype=float)
    lam = np.zeros(n)
    active = np.zeros(n, bool)
    for it in range(1, max_iter + 1):
        new = free & (lam + (u - g) > 0)
        if it > 1 and np.array_equal(new, active):
            return u, lam, it
        active = new
        inact = free & ~active
        u = np.array(g, dtype=float)
        known = fixed | active
        if inact.any():
            A = K[np.ix_(inact, inact)]
            rhs = b[inact] - K[np.ix_(inact, known)] @ u[known]
            u[inact] = np.linalg.solve(A, rhs)
        lam = np.zeros(n)
        r = b - K @ u
        lam[active] = r[active]
    raise RuntimeError("active-set iteration did not settle")


def disc_radius(R):
    """Radius of the Laplacian mean-value set of radius ``R`` in the plane.

    The set is the disc with area ``R**2``.
    """
    return R / np.sqrt(np.pi)


def slab_profile(s, c):
    """One-dimensional Bernoulli minimizer ``max(c - s, 0)`` (unit gradient, front at ``c``)."""
    return np.maximum(c - np.asarray(s, float), 0.0)


def slab_energy_per_height(c):
    """``int |u'|^2 + |{u > 0}|`` per unit height for the slab profile."""
    return 2.0 * c


def operator_on_quadratic(a11, a12, a22, M):
    """``div(A grad u)`` for constant ``A`` and ``u = x.M.x / 2``: ``trace(A M)``."""
    return a11 * M[0][0] + 2 * a12 * M[0][1] + a22 * M[1][1]


def brute_single_node(K, u, free, h2, eps_p, candidates):
    """Lowest energy change from resetting one node to any candidate value.

    Energy is ``u.K.u + h2 * #{u > eps_p}`` on ``free`` nodes, evaluated
    from scratch for every trial.  ``candidates(u, k)`` lists the trial
    values for node ``k``.
    """
    def J(v):
        return float(v @ (K @ v)) + h2 * int(np.count_nonzero(v[free] > eps_p))

    base = J(u)
    best = 0.0
    for k in np.flatnonzero(free):
        for t in candidates(u, k):
            v = u.copy()
            v[k] = t
            best = min(best, J(v) - base)
    return best


def lens_fraction(rho, r):
    """Fraction of the disc ``B_r(y)`` covered by ``B_rho(0)`` when ``|y| = rho``.

    Standard two-circle intersection area with centre distance ``rho``.
    """
    d = rho
    a1 = r * r * np.arccos((d * d + r * r - rho * rho) / (2 * d * r))
    a2 = rho * rho * np.arccos((d * d + rho * rho - r * r) / (2 * d * rho))
    tri = 0.5 * np.sqrt((-d + r + rho) * (d + r - rho) * (d - r + rho) * (d + r + rho))
    return (a1 + a2 - tri) / (np.pi * r * r)


def _orient(a, b, c):
    return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _on_segment(a, b, c):
    return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))


def closed_polylines_intersect(p, q):
    """Whether any edge of closed polyline ``p`` meets any edge of ``q``, touching included.

    Brute force over all edge pairs with orientation tests.
    """
    ep = list(zip(p, np.roll(p, -1, axis=0)))
    eq = list(zip(q, np.roll(q, -1, axis=0)))
    for a, b in ep:
        for c, d in eq:
            o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
            if o1 != o2 and o3 != o4:
                return True
            if ((o1 == 0 and _on_segment(a, b, c)) or (o2 == 0 and _on_segment(a, b, d))
                    or (o3 == 0 and _on_segment(c, d, a)) or (o4 == 0 and _on_segment(c, d, b))):
                return True
    return False


def signed_area(poly):
    """Shoelace area, positive for counter-clockwise vertex order."""
    x, y = np.asarray(poly, float).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
