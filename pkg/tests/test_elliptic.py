import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from tatsolve.elliptic import EllipticError, cg_solve, harmonic_extension, poincare_constant
from tatsolve.grid import gradient_sq, laplacian, make_domain
from tatsolve.medium import MediumSpec, build_medium


def _box_dirichlet_energy(phi, dx):
    return float(np.sum(gradient_sq(phi, dx, "forward")))


def test_constant_data(disk32):
    phi, info = harmonic_extension(disk32, np.full(disk32.n_boundary, 0.75), return_info=True)
    assert np.max(np.abs(phi[disk32.omega_mask] - 0.75)) <= 1e-9
    assert info["residual"] <= 1e-10
    assert not phi[~disk32.omega_mask].any()


def test_linear_data_on_disk():
    errs = []
    for cells in (16, 32):
        g = make_domain("disk", 1.0, cells, 0.2)
        X, Y = g.grid.coords()
        phi = harmonic_extension(g, X[g.gamma[:, 0], g.gamma[:, 1]])
        errs.append(np.max(np.abs(phi - X)[g.interior_mask]))
    # linear functions are discrete harmonic, so only the solver tolerance remains
    assert errs[-1] <= (1.0 / 32) ** 2


def test_residual_in_stencil_units(square32, rng):
    b = rng.standard_normal(square32.n_boundary)
    phi, info = harmonic_extension(square32, b, tol=1e-10, return_info=True)
    dx = square32.grid.dx
    lap = laplacian(phi, dx)[square32.interior_mask] * dx * dx
    # right-hand side: boundary values entering the interior stencils
    bfield = np.zeros(square32.grid.shape)
    bfield[square32.gamma[:, 0], square32.gamma[:, 1]] = b
    rhs = laplacian(bfield, dx)[square32.interior_mask] * dx * dx
    assert info["residual"] <= 1e-10
    assert np.linalg.norm(lap) == pytest.approx(info["residual"] * np.linalg.norm(rhs), rel=1e-6, abs=1e-15)


def test_maximum_principle_seed3(disk32):
    b = np.random.default_rng(3).standard_normal(disk32.n_boundary)
    phi = harmonic_extension(disk32, b)
    vals = phi[disk32.omega_mask]
    assert b.min() - 1e-10 <= vals.min() and vals.max() <= b.max() + 1e-10


def test_maximum_principle_100_vectors(square32):
    rng = np.random.default_rng(11)
    for _ in range(100):
        b = rng.uniform(-1, 1, square32.n_boundary) * rng.uniform(0.1, 10)
        vals = harmonic_extension(square32, b)[square32.omega_mask]
        assert b.min() - 1e-10 <= vals.min() and vals.max() <= b.max() + 1e-10


def test_linearity(square32, rng):
    a, b = rng.standard_normal((2, square32.n_boundary))
    lhs = harmonic_extension(square32, 2 * a - 3 * b, tol=1e-13)
    rhs = 2 * harmonic_extension(square32, a, tol=1e-13) - 3 * harmonic_extension(square32, b, tol=1e-13)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


def test_energy_minimality(square32, rng):
    b = rng.standard_normal(square32.n_boundary)
    phi = harmonic_extension(square32, b)
    e_phi = _box_dirichlet_energy(phi, square32.grid.dx)
    for _ in range(10):
        psi = phi + np.where(square32.interior_mask, rng.standard_normal(phi.shape) * rng.uniform(1e-3, 1), 0.0)
        assert e_phi <= _box_dirichlet_energy(psi, square32.grid.dx) + 1e-10


def test_nonconvergence_reported(square32, rng):
    with pytest.raises(EllipticError) as err:
        harmonic_extension(square32, rng.standard_normal(square32.n_boundary), max_iters=3)
    assert err.value.residual > 1e-10 and err.value.iterations == 3


def test_bad_boundary_values(square32):
    with pytest.raises(ValueError):
        harmonic_extension(square32, np.zeros(3))
    b = np.zeros(square32.n_boundary)
    b[0] = np.nan
    with pytest.raises(ValueError):
        harmonic_extension(square32, b)


def test_cg_solves_interior_system(square32, rng):
    interior = square32.interior_mask
    rhs = np.where(interior, rng.standard_normal(interior.shape), 0.0)
    x, its, res = cg_solve(interior, rhs, tol=1e-12)
    assert res <= 1e-12 and its > 0
    assert not x[~interior].any()


def _sparse_operator(geom):
    idx = -np.ones(geom.grid.shape, int)
    pts = np.argwhere(geom.interior_mask)
    idx[tuple(pts.T)] = np.arange(len(pts))
    rows, cols, vals = [], [], []
    for k, (j, i) in enumerate(pts):
        rows.append(k), cols.append(k), vals.append(4.0)
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = idx[j + dj, i + di]
            if n >= 0:
                rows.append(k), cols.append(n), vals.append(-1.0)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), len(pts))) / geom.grid.dx ** 2
    return A, pts


def test_poincare_matches_eigsh_and_closed_form():
    g = make_domain("square", 1.0, 24, 0.3)
    A, _ = _sparse_operator(g)
    lam = eigsh(A, k=1, sigma=0, which="LM")[0][0]
    C = poincare_constant(g)
    assert C == pytest.approx(1.0 / lam, rel=1e-9)
    dx = g.grid.dx
    closed = 1.0 / (2 * 4 / dx ** 2 * np.sin(np.pi * dx / 2) ** 2)
    assert C == pytest.approx(closed, rel=1e-9)


def test_poincare_variable_speed():
    g = make_domain("disk", 1.0, 16, 0.3)
    m = build_medium(g, MediumSpec("bump", {"amplitude": 0.3, "width": 0.4}))
    A, pts = _sparse_operator(g)
    M = sp.diags(1.0 / m.c[tuple(pts.T)] ** 2)
    lam = eigsh(A, k=1, M=M, sigma=0, which="LM")[0][0]
    assert poincare_constant(g, m.c) == pytest.approx(1.0 / lam, rel=1e-8)
