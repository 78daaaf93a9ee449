"""Modified time reversal and the error operator.

The backward problem is stepped with the same discrete equation as the
forward solver, solved for the earlier level. Terminal data (phi, 0) with
phi the harmonic extension of the last trace slice keeps the boundary data
compatible at t = T.
"""
from __future__ import annotations

import logging

import numpy as np

from .elliptic import harmonic_extension
from .forward import (BoundaryTrace, SolveLog, SolverError, WaveState, _source_field, _Stepper,
                      cfl_limit, forward_solve, half_step_energy)

log = logging.getLogger(__name__)


class ConsistencyError(SolverError):
    pass


def _check_trace(medium, trace, cfl_safety=1.0):
    geom = medium.geometry
    if trace.geometry_hash != geom.hash():
        raise SolverError("trace was recorded on a different geometry")
    if trace.nb != geom.n_boundary:
        raise SolverError("trace has the wrong number of boundary samples")
    if trace.dt > cfl_limit(geom.grid.dx, medium.c_max(), cfl_safety) * (1 + 1e-12):
        raise SolverError(f"trace time step {trace.dt:.6g} violates the CFL bound")
    if not np.all(np.isfinite(trace.samples)):
        raise SolverError("trace contains non-finite values")


def backward_run(medium, boundary, terminal_position, terminal_velocity, dt, record_energy=True):
    """Step the damped wave equation from t = T down to t = 0 on Omega.

    ``boundary`` is an ``(N + 1, nb)`` array of Dirichlet values on Gamma.
    Returns ``(state_at_zero, log)``; the state position is zero outside the
    interior of Omega.
    """
    geom = medium.geometry
    dx = geom.grid.dx
    n = boundary.shape[0] - 1
    st = _Stepper(medium.c, medium.a, dt, dx)
    interior = geom.interior_mask
    omega = geom.omega_mask
    gj, gi = geom.gamma[:, 0], geom.gamma[:, 1]

    def close(v, k):
        v = np.where(interior, v, 0.0)
        v[gj, gi] = boundary[k]
        return v

    v_next = close(np.asarray(terminal_position, dtype=float), n)
    v = close(st.first_backward(v_next, np.asarray(terminal_velocity, dtype=float)), n - 1)
    energies = [half_step_energy(v_next, v, medium.c, dt, dx, omega)] if record_energy else []
    for k in range(n - 1, 0, -1):
        v_prev = close(st.backward(v, v_next), k - 1)
        if record_energy:
            energies.append(half_step_energy(v, v_prev, medium.c, dt, dx, omega))
        v_next, v = v, v_prev
    # v is level 0, v_next level 1; one more step for the centred velocity
    v_m1 = st.backward(v, v_next)
    state = WaveState(np.where(interior, v, 0.0), np.where(interior, (v_next - v_m1) / (2 * dt), 0.0))
    slog = SolveLog(dt, medium.c_max() * dt * np.sqrt(2.0) / dx)
    # energies were recorded from t = T downwards; store them in time order
    slog.energy_omega = np.array(energies[::-1])
    return state, slog


def time_reversal(medium, trace, tol_elliptic=1e-10):
    """Modified time reversal of a boundary trace.

    Returns ``(image, state_at_zero, log)`` where ``image`` is v(0) on the
    interior of Omega.
    """
    _check_trace(medium, trace)
    h = trace.samples
    phi = harmonic_extension(medium.geometry, h[-1], tol=tol_elliptic)
    state, slog = backward_run(medium, h, phi, np.zeros_like(phi), trace.dt)
    return state.position, state, slog


def apply_time_reversal(medium, trace, tol_elliptic=1e-10):
    _check_trace(medium, trace)
    h = trace.samples
    phi = harmonic_extension(medium.geometry, h[-1], tol=tol_elliptic)
    state, _ = backward_run(medium, h, phi, np.zeros_like(phi), trace.dt, record_energy=False)
    return state.position


def apply_error_operator(medium, phantom, T, dt=None, cfl_safety=0.9, tol_elliptic=1e-10,
                         threshold=0.01, return_info=False):
    """K f = f - A Lambda f, computed directly and cross-checked.

    The second route solves the homogeneous-boundary problem for w = u - v
    with terminal data (u(T) - phi, u_t(T)). A relative disagreement above
    ``threshold`` raises ConsistencyError.
    """
    f = _source_field(medium, phantom)
    trace, state_T, flog = forward_solve(medium, f, T, dt, cfl_safety, record_energy=False)
    phi = harmonic_extension(medium.geometry, trace.samples[-1], tol=tol_elliptic)
    v0, _ = backward_run(medium, trace.samples, phi, np.zeros_like(phi), trace.dt, record_energy=False)
    direct = np.where(medium.geometry.interior_mask, f, 0.0) - v0.position

    interior = medium.geometry.interior_mask
    w_T = np.where(interior, state_T.position - phi, 0.0)
    g_T = np.where(interior, state_T.velocity, 0.0)
    zeros = np.zeros_like(trace.samples)
    w0, wlog = backward_run(medium, zeros, w_T, g_T, trace.dt)
    scale = max(float(np.max(np.abs(direct))), float(np.max(np.abs(f))), 1e-300)
    discrepancy = float(np.max(np.abs(direct - w0.position))) / scale
    log.debug("error operator routes differ by %.3e (relative)", discrepancy)
    if discrepancy > threshold:
        raise ConsistencyError(f"error operator routes disagree: {discrepancy:.3e} relative")
    if return_info:
        return direct, {"discrepancy": discrepancy, "w_log": wlog, "trace": trace,
                        "terminal": state_T, "phi": phi}
    return direct
