"""Explicit leapfrog solver for the damped wave equation u_tt + a u_t = c^2 lap u.

The damping term uses the centred average (u[n+1] - u[n-1]) / (2 dt), so

    u[n+1] = (2 u[n] - (1 - a dt/2) u[n-1] + dt^2 c^2 lap u[n]) / (1 + a dt/2).

The outer box edge is held at zero; the buffer around Omega must be wider than
T/2 so that edge reflections never reach Gamma before the end of the record.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import GridError, laplacian
from .medium import Phantom

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class WaveState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        if np.shape(self.position) != np.shape(self.velocity):
            raise GridError("wave state components live on different grids")


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Dirichlet data ``samples[k, j] = u(k dt, gamma_j)`` for k = 0..nt-1."""

    samples: np.ndarray
    dt: float
    geometry_hash: str

    @property
    def nt(self):
        return self.samples.shape[0]

    @property
    def nb(self):
        return self.samples.shape[1]

    @property
    def T(self):
        return (self.nt - 1) * self.dt

    @property
    def times(self):
        return self.dt * np.arange(self.nt)

    def scaled(self, weights):
        return BoundaryTrace(self.samples * weights, self.dt, self.geometry_hash)

    def __sub__(self, other):
        return BoundaryTrace(self.samples - other.samples, self.dt, self.geometry_hash)


@dataclass
class SolveLog:
    """Per-step energies of a run.

    ``energy_box`` and ``energy_omega`` hold the leapfrog-conserved energy at
    half steps, ``1/2 sum c^-2 ((u[n+1]-u[n])/dt)^2 + D u[n+1] . D u[n]``,
    which is exactly nonincreasing for a >= 0. ``energy_collocated`` holds the
    integer-step energy with centred velocities and carries the O(dt^2)
    oscillation of the scheme.
    """

    dt: float
    cfl: float
    energy_box: np.ndarray = field(default_factory=lambda: np.zeros(0))
    energy_omega: np.ndarray = field(default_factory=lambda: np.zeros(0))
    energy_collocated: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def drift(self, which="energy_box"):
        e = getattr(self, which)
        return float(np.max(np.abs(e - e[0])) / e[0]) if e[0] > 0 else 0.0


def cfl_limit(dx, c_max, cfl_safety=0.9):
    return cfl_safety * dx / (c_max * np.sqrt(2.0))


def choose_dt(T, dx, c_max, cfl_safety=0.9, dt=None):
    """Largest step not above the CFL bound (or ``dt``) that divides ``T`` exactly."""
    limit = cfl_limit(dx, c_max, cfl_safety)
    if dt is None:
        dt = limit
    elif dt > limit * (1 + 1e-12):
        raise SolverError(f"time step {dt:.6g} violates the CFL bound {limit:.6g}")
    n = int(np.ceil(T / dt - 1e-9))
    return T / n, n


def half_step_energy(u_new, u_old, c, dt, dx, mask=None):
    """Leapfrog energy between two consecutive levels."""
    vel = (u_new - u_old) / dt
    gx = (u_new[:, 1:] - u_new[:, :-1]) * (u_old[:, 1:] - u_old[:, :-1])
    gy = (u_new[1:, :] - u_new[:-1, :]) * (u_old[1:, :] - u_old[:-1, :])
    dens = vel * vel / (c * c) * dx * dx
    dens[:, :-1] += gx
    dens[:-1, :] += gy
    if mask is not None:
        dens = dens[mask]
    return 0.5 * float(np.add.reduce(dens.ravel()))


def collocated_energy(u, vel, c, dx, mask=None):
    gx = (u[:, 1:] - u[:, :-1]) ** 2
    gy = (u[1:, :] - u[:-1, :]) ** 2
    dens = vel * vel / (c * c) * dx * dx
    dens[:, :-1] += gx
    dens[:-1, :] += gy
    if mask is not None:
        dens = dens[mask]
    return 0.5 * float(np.add.reduce(dens.ravel()))


class _Stepper:
    """Coefficients of the leapfrog update, shared by forward and backward runs."""

    def __init__(self, c, a, dt, dx):
        self.dt = dt
        self.dx = dx
        self.c = c
        self.alpha = 0.5 * a * dt
        if np.any(self.alpha >= 1.0):
            raise SolverError("a * dt must stay below 2 for the backward recursion")
        self.c2dt2 = (c * dt) ** 2
        self.plus = 1.0 + self.alpha
        self.minus = 1.0 - self.alpha

    def forward(self, u, u_prev):
        return (2.0 * u - self.minus * u_prev + self.c2dt2 * laplacian(u, self.dx)) / self.plus

    def backward(self, u, u_next):
        return (2.0 * u - self.plus * u_next + self.c2dt2 * laplacian(u, self.dx)) / self.minus

    def first_forward(self, f, g, a):
        # Taylor start with u_tt(0) = c^2 lap f - a g
        return f + self.dt * g + 0.5 * self.dt ** 2 * (self.c ** 2 * laplacian(f, self.dx) - a * g)

    def first_backward(self, u_T, g_T):
        # ghost level u[N+1] = u[N-1] + 2 dt g eliminated from the update at n = N
        return u_T - self.dt * self.plus * g_T + 0.5 * self.c2dt2 * laplacian(u_T, self.dx)


def _source_field(medium, phantom):
    f = phantom.f if isinstance(phantom, Phantom) else np.asarray(phantom, dtype=float)
    if f.shape != medium.geometry.grid.shape:
        raise GridError(f"phantom shape {f.shape} does not match the medium grid "
                        f"{medium.geometry.grid.shape}")
    return f


def forward_solve(medium, phantom, T, dt=None, cfl_safety=0.9, record_energy=True):
    """Solve the Cauchy problem with u(0) = f, u_t(0) = -a f on the buffered box.

    Returns ``(trace, terminal_state, log)``; the trace holds the boundary
    values at every step 0..N with N dt = T.
    """
    geom = medium.geometry
    geom.check_buffer(T)
    f = _source_field(medium, phantom)
    grid = geom.grid
    dt, n = choose_dt(T, grid.dx, medium.c_max(), cfl_safety, dt)
    st = _Stepper(medium.c, medium.a, dt, grid.dx)
    gj, gi = geom.gamma[:, 0], geom.gamma[:, 1]
    omega = geom.omega_mask
    trace = np.empty((n + 1, len(gj)))
    slog = SolveLog(dt, medium.c_max() * dt * np.sqrt(2.0) / grid.dx)
    e_box, e_om, e_col = [], [], []

    u_prev = f.copy()
    g0 = -medium.a * f
    u = st.first_forward(f, g0, medium.a)
    _zero_edges(u)
    trace[0] = u_prev[gj, gi]
    if record_energy:
        e_col.append(collocated_energy(u_prev, g0, medium.c, grid.dx))
    for k in range(1, n + 1):
        trace[k] = u[gj, gi]
        u_next = st.forward(u, u_prev)
        _zero_edges(u_next)
        if record_energy:
            e_box.append(half_step_energy(u, u_prev, medium.c, dt, grid.dx))
            e_om.append(half_step_energy(u, u_prev, medium.c, dt, grid.dx, omega))
            e_col.append(collocated_energy(u, (u_next - u_prev) / (2 * dt), medium.c, grid.dx))
        u_prev, u = u, u_next
    if record_energy:
        e_box.append(half_step_energy(u, u_prev, medium.c, dt, grid.dx))
        e_om.append(half_step_energy(u, u_prev, medium.c, dt, grid.dx, omega))
    # after the loop u_prev = u[N], u = u[N+1]; recover u[N-1] from the scheme
    u_nm1 = st.backward(u_prev, u)
    state = WaveState(u_prev, (u - u_nm1) / (2 * dt))
    slog.energy_box = np.array(e_box)
    slog.energy_omega = np.array(e_om)
    slog.energy_collocated = np.array(e_col)
    if not (np.all(np.isfinite(trace)) and np.all(np.isfinite(state.position))):
        raise SolverError("forward solve produced non-finite values")
    return BoundaryTrace(trace, dt, geom.hash()), state, slog


def apply_lambda(medium, phantom, T, dt=None, cfl_safety=0.9):
    """Boundary measurement of the source: the trace of the forward solution on Gamma."""
    return forward_solve(medium, phantom, T, dt, cfl_safety, record_energy=False)[0]


def _zero_edges(u):
    u[0, :] = 0.0
    u[-1, :] = 0.0
    u[:, 0] = 0.0
    u[:, -1] = 0.0


def trace_h1_norm(trace, geometry):
    """Discrete H^1((0,T) x Gamma) norm of a trace; arc steps from sample spacing."""
    h = trace.samples
    X, Y = geometry.grid.coords()
    gj, gi = geometry.gamma[:, 0], geometry.gamma[:, 1]
    px, py = X[gj, gi], Y[gj, gi]
    ds = np.hypot(np.roll(px, -1) - px, np.roll(py, -1) - py)
    ht = np.diff(h, axis=0) / trace.dt
    hs = (np.roll(h, -1, axis=1) - h) / ds
    l2 = np.sum(h * h * ds) * trace.dt
    return float(np.sqrt(l2 + np.sum(ht * ht * ds) * trace.dt + np.sum(hs * hs * ds) * trace.dt))


# -- periodic harness ------------------------------------------------------------

def periodic_plane_wave(a0, k_dx=0.2, n_cells=None, cfl_safety=0.9, periods=4.0, dx=0.01):
    """Run the damped stepper on a torus with data u = cos(kx), u_t = -a0 cos(kx).

    Returns ``(times, amplitude, k)`` where ``amplitude`` is the projection of
    each time level on cos(kx).
    """
    if n_cells is None:
        n_cells = int(np.ceil(2 * np.pi / k_dx))
    k = 2 * np.pi / (n_cells * dx)
    dt = cfl_limit(dx, 1.0, cfl_safety)
    omega = np.sqrt(max(k * k - a0 * a0 / 4, 1e-30))
    nsteps = int(np.ceil(periods * 2 * np.pi / omega / dt))
    x = dx * np.arange(n_cells)
    mode = np.cos(k * x)
    ny = 4
    u_prev = np.tile(mode, (ny, 1))
    alpha = 0.5 * a0 * dt

    def lap(u):
        return (np.roll(u, 1, 1) + np.roll(u, -1, 1) + np.roll(u, 1, 0) + np.roll(u, -1, 0)
                - 4 * u) / (dx * dx)

    g = -a0 * u_prev
    u = u_prev + dt * g + 0.5 * dt * dt * (lap(u_prev) - a0 * g)
    amps = [u_prev[0] @ mode, u[0] @ mode]
    for _ in range(nsteps):
        u_next = (2 * u - (1 - alpha) * u_prev + dt * dt * lap(u)) / (1 + alpha)
        u_prev, u = u, u_next
        amps.append(u[0] @ mode)
    amps = np.array(amps) / (mode @ mode)
    return dt * np.arange(len(amps)), amps, k


def prony_rate(series, dt):
    """Fit s[n+1] = p s[n] + q s[n-1] by least squares and return (decay rate, frequency)."""
    s = np.asarray(series, dtype=float)
    A = np.stack([s[1:-1], s[:-2]], axis=1)
    (p, q), *_ = np.linalg.lstsq(A, s[2:], rcond=None)
    roots = np.roots([1.0, -p, -q])
    z = roots[np.argmax(np.abs(roots.imag))] if np.any(np.abs(roots.imag) > 0) else roots[0]
    return float(-np.log(np.abs(z)) / dt), float(abs(np.angle(z)) / dt)
