"""Discrete harmonic extension by matrix-free conjugate gradients."""
from __future__ import annotations

import numpy as np


class EllipticError(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _dot(x, y):
    # numpy's pairwise summation is single threaded, so the order is fixed
    return float(np.add.reduce((x * y).ravel()))


def _neighbour_sum(x):
    s = np.zeros_like(x)
    s[1:, :] += x[:-1, :]
    s[:-1, :] += x[1:, :]
    s[:, 1:] += x[:, :-1]
    s[:, :-1] += x[:, 1:]
    return s


def dirichlet_laplacian_apply(x, interior):
    """Apply the SPD matrix 4 I - (neighbour sum) restricted to ``interior``."""
    return np.where(interior, 4.0 * x - _neighbour_sum(x), 0.0)


def cg_solve(interior, rhs, tol=1e-10, max_iters=None, x0=None, abs_floor=1e-14):
    """Solve (4 I - N) x = rhs on ``interior`` samples.

    Returns ``(x, iterations, relative_residual)``; raises EllipticError on
    non-convergence.
    """
    ny, nx = interior.shape
    if max_iters is None:
        max_iters = 10 * (nx + ny)
    rhs = np.where(interior, rhs, 0.0)
    bnorm = np.sqrt(_dot(rhs, rhs))
    x = np.zeros_like(rhs) if x0 is None else np.where(interior, x0, 0.0)
    if bnorm == 0.0 and x0 is None:
        return x, 0, 0.0
    target = max(tol * bnorm, abs_floor)
    r = rhs - dirichlet_laplacian_apply(x, interior)
    p = r.copy()
    rr = _dot(r, r)
    it = 0
    while np.sqrt(rr) > target:
        if it >= max_iters:
            rel = np.sqrt(rr) / bnorm if bnorm else np.sqrt(rr)
            raise EllipticError(f"CG did not converge in {max_iters} iterations "
                                f"(relative residual {rel:.3e})", rel, it)
        Ap = dirichlet_laplacian_apply(p, interior)
        step = rr / _dot(p, Ap)
        x += step * p
        r -= step * Ap
        rr_new = _dot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    # report the true residual, not the recursively updated one
    r_true = rhs - dirichlet_laplacian_apply(x, interior)
    res = np.sqrt(_dot(r_true, r_true))
    return x, it, (res / bnorm if bnorm else res)


def harmonic_extension(geometry, boundary_values, tol=1e-10, max_iters=None, return_info=False):
    """Discrete harmonic function on Omega with the given values on Gamma.

    The residual is measured in stencil units, ``dx^2 * lap_h phi``, relative
    to the right-hand side assembled from the boundary values. Samples
    outside Omega and Gamma are zero.
    """
    values = np.asarray(boundary_values, dtype=float)
    if values.shape != (geometry.n_boundary,):
        raise ValueError(f"expected {geometry.n_boundary} boundary values, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("boundary values must be finite")
    gj, gi = geometry.gamma[:, 0], geometry.gamma[:, 1]
    interior = geometry.interior_mask
    bfield = np.zeros(geometry.grid.shape)
    bfield[gj, gi] = values
    rhs = np.where(interior, _neighbour_sum(bfield), 0.0)
    x, iters, res = cg_solve(interior, rhs, tol, max_iters)
    phi = x
    phi[gj, gi] = values
    if return_info:
        return phi, {"iterations": iters, "residual": res}
    return phi


def poincare_constant(geometry, c=None, tol=1e-10, iters=200, seed=0):
    """Discrete Poincare constant sup ||f/c||^2 / ||grad f||^2 over H_D(Omega).

    Inverse power iteration on the Dirichlet Laplacian with the c^-2 mass,
    with CG inner solves; the Rayleigh quotient is returned.
    """
    interior = geometry.interior_mask
    dx = geometry.grid.dx
    w = np.ones(geometry.grid.shape) if c is None else 1.0 / np.asarray(c, float) ** 2
    rng = np.random.default_rng(seed)
    x = np.where(interior, rng.random(geometry.grid.shape) + 1.0, 0.0)
    lam = None
    for _ in range(iters):
        y, _, _ = cg_solve(interior, w * x, tol=tol)
        y /= np.sqrt(_dot(w * y, y))
        lam_new = _dot(y, dirichlet_laplacian_apply(y, interior)) / (dx * dx) / _dot(w * y, y)
        x = y
        if lam is not None and abs(lam_new - lam) <= 1e-12 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return 1.0 / lam
