import numpy as np
import pytest

from tatsolve.forward import (SolverError, _Stepper, _zero_edges, apply_lambda, choose_dt, cfl_limit,
                              forward_solve, periodic_plane_wave, prony_rate, trace_h1_norm)
from tatsolve.grid import GridError, make_domain
from tatsolve.medium import MediumSpec, build_medium, build_phantom, constant_medium


@pytest.fixture(scope="module")
def damped32(square32):
    spec = MediumSpec("bump", {"amplitude": 0.2, "width": 0.25}, "bump", {"amplitude": 1.0, "width": 0.3})
    return build_medium(square32, spec)


def test_zero_phantom(medium32):
    tr, state, _ = forward_solve(medium32, np.zeros(medium32.geometry.grid.shape), 1.0)
    assert not tr.samples.any()
    assert not state.position.any() and not state.velocity.any()


def test_choose_dt_divides_T():
    dt, n = choose_dt(1.3, 0.01, 1.2)
    assert n * dt == pytest.approx(1.3, rel=1e-14)
    assert dt <= cfl_limit(0.01, 1.2)
    with pytest.raises(SolverError):
        choose_dt(1.0, 0.01, 1.0, dt=0.01)


def test_preconditions(medium32, gauss32, disk32):
    with pytest.raises(GridError):
        forward_solve(medium32, gauss32, 2.0)
    with pytest.raises(SolverError):
        forward_solve(medium32, gauss32, 1.0, dt=0.05)
    with pytest.raises(GridError):
        forward_solve(medium32, np.zeros(disk32.grid.shape), 1.0)


def test_trace_shape_and_time_alignment(medium32, gauss32):
    tr = apply_lambda(medium32, gauss32, 1.0)
    assert tr.samples.shape == (tr.nt, medium32.geometry.n_boundary)
    assert tr.T == pytest.approx(1.0, rel=1e-14)
    # t = 0 value is f on Gamma, which vanishes by the support margin
    assert not tr.samples[0].any()


def test_linearity(damped32, gauss32, rng):
    g = np.where(damped32.geometry.interior_mask, np.roll(gauss32.f, 4, axis=0), 0.0)
    a, b = 1.7, -0.4
    lhs = apply_lambda(damped32, a * gauss32.f + b * g, 1.0).samples
    rhs = a * apply_lambda(damped32, gauss32.f, 1.0).samples + b * apply_lambda(damped32, g, 1.0).samples
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_undamped_energy_conserved(square32, gauss32):
    m = build_medium(square32, MediumSpec("bump", {"amplitude": 0.3, "width": 0.2}))
    _, _, log = forward_solve(m, gauss32, 1.5)
    assert log.drift("energy_box") <= 5e-3
    assert log.drift("energy_box") <= 1e-12


def test_collocated_drift_second_order():
    drifts = []
    for cells in (64, 128):
        g = make_domain("square", 1.0, cells, 0.6)
        ph = build_phantom(g, {"kind": "gaussian", "center": (0.0, 0.0), "width": 0.08})
        _, _, log = forward_solve(constant_medium(g), ph, 1.0)
        drifts.append(log.drift("energy_collocated"))
    assert drifts[1] <= 5e-3
    assert drifts[0] / drifts[1] == pytest.approx(4.0, rel=0.1)


def test_damped_energy_nonincreasing(damped32, gauss32):
    _, _, log = forward_solve(damped32, gauss32, 1.5)
    assert np.all(np.diff(log.energy_box) <= 1e-12)
    assert np.all(np.isfinite(log.energy_omega)) and np.all(log.energy_omega >= 0)


def test_damped_omega_energy_below_undamped(damped32, gauss32):
    # the damped start u_t = -a f carries extra kinetic energy ~ a^2, so use a moderate a
    damped = damped32.scaled_attenuation(0.5)
    _, _, ld = forward_solve(damped, gauss32, 1.5)
    _, _, lu = forward_solve(damped32.scaled_attenuation(0.0), gauss32, 1.5)
    assert np.all(ld.energy_omega <= lu.energy_omega * (1 + 1e-3))


def test_damped_omega_energy_excess_is_initial_kinetic(damped32, gauss32):
    _, _, ld = forward_solve(damped32, gauss32, 1.5)
    _, _, lu = forward_solve(damped32.scaled_attenuation(0.0), gauss32, 1.5)
    excess = ld.energy_omega[0] - lu.energy_omega[0]
    assert excess > 0
    assert np.all(ld.energy_omega <= lu.energy_omega + excess + 1e-3 * lu.energy_omega.max())


def test_terminal_velocity_centred(medium32, gauss32):
    # u(T) and u_t(T) from a run to T agree with the levels of a longer run
    T = 1.0
    tr, state, log = forward_solve(medium32, gauss32, T)
    dt = tr.dt
    _, long_state, _ = forward_solve(medium32, gauss32, T + 2 * dt, dt=dt)
    st = _Stepper(medium32.c, medium32.a, dt, medium32.geometry.grid.dx)
    assert np.all(np.isfinite(state.velocity))
    up = st.first_forward(gauss32.f, -medium32.a * gauss32.f, medium32.a)
    _zero_edges(up)
    levels = [gauss32.f, up]
    for _ in range(tr.nt):
        nxt = st.forward(levels[-1], levels[-2])
        _zero_edges(nxt)
        levels.append(nxt)
    n = tr.nt - 1
    assert np.array_equal(state.position, levels[n])
    np.testing.assert_allclose(state.velocity, (levels[n + 1] - levels[n - 1]) / (2 * dt), atol=1e-12)


@pytest.mark.parametrize("cells", [64])
def test_finite_propagation(cells):
    g = make_domain("square", 1.0, cells, 1.0)
    m = constant_medium(g)
    ph = build_phantom(g, {"kind": "disk", "center": (0.0, 0.0), "radius": 0.15, "mollifier": 0.05})
    X, Y = g.grid.coords()
    dist = np.hypot(X, Y) - 0.175
    # discrete domain of dependence: one cell (in the 1-norm) per step
    jj, ii = np.indices(g.grid.shape)
    c0 = g.grid.nx // 2
    sj, si = np.nonzero(np.abs(ph.f) > 0)
    dx = g.grid.dx
    dt, n = choose_dt(0.6, dx, 1.0)
    st = _Stepper(m.c, m.a, dt, dx)
    up = ph.f.copy()
    u = st.first_forward(up, 0 * up, m.a)
    worst = 0.0
    reach = np.abs(jj - c0).astype(float) + np.abs(ii - c0)
    r_supp = (np.abs(sj - c0) + np.abs(si - c0)).max()
    for k in range(1, n):
        t = k * dt
        # level k is exactly zero beyond k cells of the support
        assert not u[reach > r_supp + k].any()
        far = dist > t + 16 * dx
        worst = max(worst, float(np.max(np.abs(u[far]), initial=0.0)))
        un = st.forward(u, up)
        _zero_edges(un)
        up, u = u, un
    assert worst <= 1e-10 * np.max(np.abs(ph.f))


def _trace_pair(cells):
    out = []
    dt = None
    for c in (cells, 2 * cells):
        g = make_domain("square", 1.0, c, 0.8)
        ph = build_phantom(g, {"kind": "gaussian", "center": (0.0, 0.0), "width": 0.1}, min_margin=0.05)
        tr, _, _ = forward_solve(constant_medium(g), ph, 1.2, dt=None if dt is None else dt / 2)
        dt = tr.dt
        X, Y = g.grid.coords()
        out.append((g, tr, X[g.gamma[:, 0], g.gamma[:, 1]], Y[g.gamma[:, 0], g.gamma[:, 1]]))
    return out


def test_fine_grid_self_convergence():
    (g1, t1, x1, y1), (g2, t2, x2, y2) = _trace_pair(64)
    idx = [int(np.argmin(np.hypot(x2 - a, y2 - b))) for a, b in zip(x1, y1)]
    assert np.max(np.hypot(x2[idx] - x1, y2[idx] - y1)) < 1e-12
    fine = t2.samples[::2][:, idx]
    assert np.linalg.norm(fine - t1.samples) / np.linalg.norm(fine) <= 0.02
    # discrete H1 trace norm is stable under refinement
    assert trace_h1_norm(t1, g1) == pytest.approx(trace_h1_norm(t2, g2), rel=0.02)


@pytest.mark.parametrize("a0", [0.0, 0.5, 1.0])
def test_plane_wave_dispersion(a0):
    times, amps, k = periodic_plane_wave(a0, k_dx=0.2)
    dt = times[1] - times[0]
    decay, freq = prony_rate(amps, dt)
    assert decay == pytest.approx(a0 / 2, abs=0.01 * max(a0 / 2, 1e-3))
    assert freq == pytest.approx(np.sqrt(k * k - a0 * a0 / 4), rel=0.01)
