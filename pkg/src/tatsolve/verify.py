"""Invariant suite run by the ``verify`` subcommand.

Each check returns a row ``(name, value, threshold, passed)``. Checks use
the configured geometry and medium; everything is seeded so the results are
bit-identical across runs.
"""
from __future__ import annotations

import logging

import numpy as np

from .backward import apply_error_operator, time_reversal
from .elliptic import harmonic_extension, poincare_constant
from .forward import apply_lambda, forward_solve
from .geodesics import trace_rays, visibility_symbol
from .grid import hd_norm, laplacian
from .medium import Cutoff, _profile, random_phantom
from .reconstruction import neumann_reconstruct

log = logging.getLogger(__name__)


def _row(name, value, threshold, passed):
    return (name, float(value), float(threshold), "pass" if passed else "fail")


def _damped(medium):
    """The configured medium if it attenuates, else one with a smooth test bump."""
    if medium.attenuation_sup() > 0:
        return medium
    g = medium.geometry
    X, Y = g.grid.coords()
    bump = _profile("bump", {"amplitude": 0.5, "width": 0.3 * g.half_width, "center": g.center}, X, Y, g)
    return medium.with_attenuation(np.where(g.interior_mask, bump, 0.0))


def check_stencil(geom):
    X, Y = geom.grid.coords()
    lap = laplacian(X * X + Y * Y, geom.grid.dx)[1:-1, 1:-1]
    err = float(np.max(np.abs(lap - 4.0)))
    return [_row("laplacian_quadratic", err, 1e-8, err <= 1e-8)]


def check_energy(medium, f, T, dt, cfl):
    undamped = medium.scaled_attenuation(0.0)
    _, _, lg = forward_solve(undamped, f, T, dt, cfl)
    drift = lg.drift("energy_box")
    damped = _damped(medium)
    _, _, lg2 = forward_solve(damped, f, T, dt, cfl)
    rise = float(np.max(np.diff(lg2.energy_box), initial=0.0))
    return [_row("energy_drift_undamped", drift, 5e-3, drift <= 5e-3),
            _row("energy_rise_damped", rise, 1e-12, rise <= 1e-12)]


def check_linearity(medium, f, T, dt, cfl, rng):
    g = rng.standard_normal() * np.roll(f, 3, axis=1)
    g = np.where(medium.geometry.interior_mask, g, 0.0)
    al, be = 0.7, -1.3
    lhs = apply_lambda(medium, al * f + be * g, T, dt, cfl).samples
    rhs = al * apply_lambda(medium, f, T, dt, cfl).samples + be * apply_lambda(medium, g, T, dt, cfl).samples
    err = float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))
    return [_row("lambda_linearity", err, 1e-10, err <= 1e-10)]


def check_error_operator(medium, T, dt, cfl, seed):
    """Two-route agreement and the backward energy and norm bounds for K."""
    geom = medium.geometry
    dx = geom.grid.dx
    C = poincare_constant(geom, medium.c)
    rows = []
    worst_route = worst_energy = worst_norm = 0.0
    damped = _damped(medium)
    for k, s in enumerate((0.0, 1.0, 2.0)):
        m = damped.scaled_attenuation(s)
        a = m.attenuation_sup()
        f = random_phantom(geom, seed + k).f
        kf, info = apply_error_operator(m, f, T, dt, cfl, return_info=True)
        worst_route = max(worst_route, info["discrepancy"])
        e = info["w_log"].energy_omega
        n = len(e)
        # e[k] sits at time (k + 1/2) dt; bound against the last (t near T) value
        t = (np.arange(n) + 0.5) * info["trace"].dt
        bound = np.exp(2 * (t[-1] - t) * a) * e[-1]
        worst_energy = max(worst_energy, float(np.max(e / np.maximum(bound, 1e-300))))
        ratio = hd_norm(kf, geom.omega_mask, dx) / hd_norm(f, geom.omega_mask, dx)
        worst_norm = max(worst_norm, ratio / (np.sqrt(1 + C * a * a) * np.exp(T * a)))
    rows.append(_row("error_operator_routes", worst_route, 1e-2, worst_route <= 1e-2))
    rows.append(_row("backward_energy_bound", worst_energy, 1.05, worst_energy <= 1.05))
    rows.append(_row("error_operator_norm_bound", worst_norm, 1.0, worst_norm <= 1.0))
    return rows


def check_harmonic(geom, rng, tol):
    n = geom.n_boundary
    phi, info = harmonic_extension(geom, np.full(n, 2.5), tol=tol, return_info=True)
    const = float(np.max(np.abs(phi[geom.omega_mask] - 2.5)))
    worst, res = 0.0, info["residual"]
    for _ in range(10):
        b = rng.standard_normal(n)
        phi, info = harmonic_extension(geom, b, tol=tol, return_info=True)
        vals = phi[geom.omega_mask]
        worst = max(worst, vals.max() - b.max(), b.min() - vals.min())
        res = max(res, info["residual"])
    return [_row("harmonic_constant", const, 1e-8, const <= 1e-8),
            _row("harmonic_max_principle", worst, 1e-8, worst <= 1e-8),
            _row("harmonic_residual", res, tol, res <= tol)]


def check_neumann(medium, f, T, dt, cfl, cutoff, solver):
    trace = apply_lambda(medium, f, T, dt, cfl)
    _, rep = neumann_reconstruct(medium, trace, cutoff, min(solver["max_iters"], 8), solver["tol"],
                                 tol_elliptic=solver["tol_elliptic"], patience=solver["patience"])
    r = rep.max_ratio
    return [_row("neumann_max_contraction", r, 1.0, r < 1.0)]


def check_time_reversal_zero(medium, T, dt, cfl):
    geom = medium.geometry
    tr = apply_lambda(medium, np.zeros(geom.grid.shape), T, dt, cfl)
    img, _, _ = time_reversal(medium, tr)
    v = float(np.max(np.abs(img)))
    return [_row("time_reversal_zero", v, 0.0, v == 0.0)]


def check_rays(medium, rng):
    geom = medium.geometry
    h = geom.half_width
    ang = rng.uniform(0, 2 * np.pi, 16)
    rad = rng.uniform(0, 0.6 * h, 16)
    x = geom.center[0] + rad * np.cos(ang)
    y = geom.center[1] + rad * np.sin(ang)
    th = rng.uniform(0, 2 * np.pi, 16)
    res = trace_rays(medium, x, y, np.cos(th), np.sin(th))
    drift = float(np.max(res["drift"]))
    # reversed rays from the exit points must pass back through the starts
    sx, sy = res["x"][:4], res["y"][:4]
    px, py = res["px"][:4], res["py"][:4]
    nx, ny = px / np.hypot(px, py), py / np.hypot(px, py)
    rev = trace_rays(medium, sx - 1e-9 * nx, sy - 1e-9 * ny, -nx, -ny, record=True)
    miss = max(float(np.min(np.hypot(p[:, 0] - x[k], p[:, 1] - y[k]))) for k, p in enumerate(rev["paths"]))
    tol = (2.0 if np.ptp(medium.c) == 0 else 5.0) * geom.grid.dx
    return [_row("hamiltonian_drift", drift, 1e-6, drift <= 1e-6),
            _row("ray_reversal_miss", miss, tol, miss <= tol)]


def check_symbol(medium, T, rng):
    chi = Cutoff(T, "partial")
    g = medium.geometry
    vals = []
    for _ in range(8):
        r = rng.uniform(0, 0.5 * g.half_width)
        a, th = rng.uniform(0, 2 * np.pi, 2)
        x = (g.center[0] + r * np.cos(a), g.center[1] + r * np.sin(a))
        vals.append(visibility_symbol(medium, chi, x, (np.cos(th), np.sin(th))))
    lo, hi = min(vals), max(vals)
    return [_row("symbol_min", lo, 0.0, 0.0 <= lo and hi <= 1.0)]


def run_suite(cfg, geometry=None, medium=None):
    """Run every check for the configuration and return the result rows."""
    geom = geometry or cfg.geometry()
    medium = medium or cfg.medium(geom)
    f = cfg.phantom(geom).f
    meas, solver = cfg["measurement"], cfg["solver"]
    T, dt, cfl = meas["T"], meas["dt"], meas["cfl_safety"]
    seed = cfg["output"]["seed"]
    rng = np.random.default_rng(seed)
    rows = []
    rows += check_stencil(geom)
    rows += check_energy(medium, f, T, dt, cfl)
    rows += check_linearity(medium, f, T, dt, cfl, rng)
    rows += check_time_reversal_zero(medium, T, dt, cfl)
    rows += check_error_operator(medium, T, dt, cfl, seed)
    rows += check_harmonic(geom, rng, solver["tol_elliptic"])
    rows += check_neumann(medium, f, T, dt, cfl, None, solver)
    rows += check_rays(medium, rng)
    rows += check_symbol(medium, T, rng)
    for r in rows:
        log.info("%-28s %-4s value=%.3e threshold=%.3e", r[0], r[3], r[1], r[2])
    return rows
