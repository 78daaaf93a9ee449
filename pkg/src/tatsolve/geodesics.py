"""Rays of the metric c^-2 dx^2: tracing, travel-time distance, critical times, visibility.

Rays follow the Hamiltonian system for H = c^2 |xi|^2 / 2,

    x' = c^2 xi,    xi' = -c grad(c) |xi|^2,

with covector normalised to |xi| = 1/c so that the metric speed |x'|/c is one
and the parameter is travel time.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

TRAPPED = np.inf


class GeodesicError(ValueError):
    pass


class SpeedModel:
    """Smooth interpolant of the sound speed and its gradient."""

    def __init__(self, medium):
        c = medium.c
        grid = medium.geometry.grid
        self.constant = bool(np.all(c == c.flat[0]))
        self.c0 = float(c.flat[0])
        if not self.constant:
            x = grid.origin[0] + grid.dx * np.arange(grid.nx)
            y = grid.origin[1] + grid.dx * np.arange(grid.ny)
            self._spl = RectBivariateSpline(y, x, c, kx=3, ky=3)

    def __call__(self, x, y):
        if self.constant:
            z = np.zeros_like(x)
            return z + self.c0, z, z
        c = self._spl.ev(y, x)
        cx = self._spl.ev(y, x, dy=1)
        cy = self._spl.ev(y, x, dx=1)
        return c, cx, cy


def _rhs(model, state):
    x, y, px, py = state
    c, cx, cy = model(x, y)
    p2 = px * px + py * py
    c2 = c * c
    return np.array([c2 * px, c2 * py, -c * cx * p2, -c * cy * p2])


def _rk4(model, state, h):
    k1 = _rhs(model, state)
    k2 = _rhs(model, state + 0.5 * h * k1)
    k3 = _rhs(model, state + 0.5 * h * k2)
    k4 = _rhs(model, state + h * k3)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class GeodesicRecord:
    start: tuple
    direction: tuple
    path: np.ndarray
    exit_time: float
    exit_point: Optional[tuple]
    exit_arc: Optional[float]
    hamiltonian_drift: float

    @property
    def trapped(self):
        return not np.isfinite(self.exit_time)


def default_step(medium):
    return medium.geometry.grid.dx / 2


def default_cap(medium):
    return 10.0 * medium.geometry.diameter / float(np.min(medium.c))


def _initial_state(model, x, y, dirx, diry):
    n = np.hypot(dirx, diry)
    if np.any(n == 0):
        raise GeodesicError("direction must be nonzero")
    c, _, _ = model(x, y)
    return np.array([x, y, dirx / (n * c), diry / (n * c)], dtype=float)


def trace_rays(medium, x, y, dirx, diry, cap=None, step=None, record=False, refine=True):
    """Trace a batch of rays to their first crossing of Gamma.

    Returns a dict with arrays ``time`` (inf when the cap is hit), ``x``,
    ``y`` (exit point), ``px``, ``py`` (exit covector), ``drift`` (max
    |c^2 |xi|^2 - 1| along the ray) and, if ``record``, a list of paths.
    """
    geom = medium.geometry
    model = SpeedModel(medium)
    step = default_step(medium) if step is None else min(step, default_step(medium))
    cap = default_cap(medium) if cap is None else cap
    x, y, dirx, diry = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, float)) for v in (x, y, dirx, diry)))
    if np.any(geom.level_set(x, y) <= 0):
        raise GeodesicError("ray start points must lie inside Omega")
    state = _initial_state(model, x.ravel(), y.ravel(), dirx.ravel(), diry.ravel())
    n = state.shape[1]
    t = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    out_time = np.full(n, TRAPPED)
    out_state = state.copy()
    drift = np.zeros(n)
    paths = [[state[:2, i].copy()] for i in range(n)] if record else None
    active = np.arange(n)
    while active.size:
        s = state[:, active]
        s_new = _rk4(model, s, step)
        c, _, _ = model(s_new[0], s_new[1])
        drift[active] = np.maximum(drift[active], np.abs(c * c * (s_new[2] ** 2 + s_new[3] ** 2) - 1.0))
        psi_old = geom.level_set(s[0], s[1])
        psi_new = geom.level_set(s_new[0], s_new[1])
        crossed = psi_new <= 0
        if np.any(crossed):
            idx = active[crossed]
            h = _crossing_step(model, geom, s[:, crossed], psi_old[crossed], psi_new[crossed], step, refine)
            final = _rk4(model, s[:, crossed], h)
            out_time[idx] = t[idx] + h
            out_state[:, idx] = final
            done[idx] = True
            if record:
                for k, i in enumerate(idx):
                    paths[i].append(final[:2, k].copy())
        keep = ~crossed
        state[:, active[keep]] = s_new[:, keep]
        t[active[keep]] += step
        if record:
            for i in active[keep]:
                paths[i].append(state[:2, i].copy())
        over = t[active[keep]] >= cap
        if np.any(over):
            stuck = active[keep][over]
            out_state[:, stuck] = state[:, stuck]
            done[stuck] = True
        active = np.nonzero(~done)[0]
    res = {"time": out_time, "x": out_state[0], "y": out_state[1], "px": out_state[2],
           "py": out_state[3], "drift": drift}
    if record:
        res["paths"] = [np.array(p) for p in paths]
    return res


def _crossing_step(model, geom, s, psi0, psi1, step, refine):
    """Partial step length at which the ray meets Gamma (secant on the RK4 map)."""
    h = step * psi0 / (psi0 - psi1)
    if not refine:
        return h
    lo = np.zeros_like(h)
    hi = np.full_like(h, step)
    f_lo, f_hi = psi0.copy(), psi1.copy()
    for _ in range(30):
        h = np.clip(lo + (hi - lo) * f_lo / (f_lo - f_hi), lo, hi)
        p = _rk4(model, s, h)
        fh = geom.level_set(p[0], p[1])
        inside = fh > 0
        lo = np.where(inside, h, lo)
        f_lo = np.where(inside, fh, f_lo)
        hi = np.where(inside, hi, h)
        f_hi = np.where(inside, f_hi, fh)
        if np.max(np.abs(fh)) < 1e-13:
            break
    return h


def trace_geodesic(medium, x, xi, cap=None, step=None):
    """Trace the unit-speed ray from point ``x`` with initial direction ``xi``."""
    res = trace_rays(medium, x[0], x[1], xi[0], xi[1], cap, step, record=True)
    t = float(res["time"][0])
    if np.isfinite(t):
        ex, ey = float(res["x"][0]), float(res["y"][0])
        exit_point, arc = (ex, ey), float(medium.geometry.arc_position(ex, ey))
    else:
        exit_point, arc = None, None
    return GeodesicRecord(tuple(x), tuple(xi), res["paths"][0], t, exit_point, arc,
                          float(res["drift"][0]))


def _reflect(geom, x, y, px, py):
    eps = 1e-7
    gx = (geom.level_set(x + eps, y) - geom.level_set(x - eps, y)) / (2 * eps)
    gy = (geom.level_set(x, y + eps) - geom.level_set(x, y - eps)) / (2 * eps)
    nrm = np.hypot(gx, gy)
    nx, ny = -gx / nrm, -gy / nrm
    dot = px * nx + py * ny
    return px - 2 * dot * nx, py - 2 * dot * ny, nx, ny


def arc_in_range(arc, arc_range):
    if arc_range is None:
        return np.ones_like(np.asarray(arc, float), dtype=bool)
    lo, hi = arc_range
    length = (hi - lo) % (2 * np.pi) or 2 * np.pi
    return (np.asarray(arc) - lo) % (2 * np.pi) <= length + 1e-12


def first_arrival(medium, x, y, dirx, diry, arc_range=None, reflect=False, cap=None, step=None,
                  max_reflections=50):
    """Travel time until the ray first reaches the arc ``arc_range`` of Gamma.

    Without ``reflect`` only a direct first exit counts (inf otherwise). With
    ``reflect``, exits elsewhere on Gamma continue by specular reflection.
    """
    geom = medium.geometry
    cap = default_cap(medium) if cap is None else cap
    res = trace_rays(medium, x, y, dirx, diry, cap, step)
    total = res["time"].copy()
    arcs = geom.arc_position(res["x"], res["y"])
    hit = np.isfinite(total) & arc_in_range(arcs, arc_range)
    result = np.where(hit, total, np.inf)
    if not reflect:
        return result
    pending = np.nonzero(np.isfinite(total) & ~hit)[0]
    cur = {k: res[k][pending] for k in ("x", "y", "px", "py")}
    for _ in range(max_reflections):
        if pending.size == 0:
            break
        rpx, rpy, nx, ny = _reflect(geom, cur["x"], cur["y"], cur["px"], cur["py"])
        # nudge back inside so the next leg starts in Omega
        sx = cur["x"] - 1e-9 * nx
        sy = cur["y"] - 1e-9 * ny
        c = SpeedModel(medium)(sx, sy)[0]
        leg = trace_rays(medium, sx, sy, rpx * c, rpy * c, cap, step)
        total[pending] = total[pending] + leg["time"]
        arcs = geom.arc_position(leg["x"], leg["y"])
        ok = np.isfinite(total[pending]) & (total[pending] <= cap)
        hit_now = ok & arc_in_range(arcs, arc_range)
        result[pending[hit_now]] = total[pending[hit_now]]
        cont = ok & ~hit_now
        pending = pending[cont]
        cur = {k: leg[k][cont] for k in ("x", "y", "px", "py")}
    return result


# -- travel-time distance ---------------------------------------------------------

def eikonal_distance(medium):
    """First-order fast marching solution of |grad d| = 1/c in Omega with d = 0 on Gamma.

    Each trial value is the minimum over the eight triangles formed by an
    axial and a diagonal neighbour (linear interpolation along the triangle
    edge) and the usual axial quadrant update. Interior samples next to
    Gamma are seeded with their distance to the continuous boundary divided
    by the local speed. Samples outside Omega are zero.
    """
    geom = medium.geometry
    interior = geom.interior_mask
    dx = geom.grid.dx
    slow = 1.0 / medium.c
    X, Y = geom.grid.coords()
    d = np.full(interior.shape, np.inf)
    known = np.zeros(interior.shape, dtype=bool)
    seeds = interior & (~np.roll(interior, 1, 0) | ~np.roll(interior, -1, 0)
                        | ~np.roll(interior, 1, 1) | ~np.roll(interior, -1, 1))
    d[seeds] = geom.level_set(X[seeds], Y[seeds]) * slow[seeds]
    known[seeds] = True
    kd = np.where(known, d, np.inf)

    def triangle(a, b, h):
        # a: axial neighbour value, b: diagonal neighbour value
        best = min(a + h, b + h * _SQRT2)
        if np.isfinite(a) and np.isfinite(b):
            q = (a - b) / h
            if 0.0 < q < _SQRT_HALF:
                s = q / np.sqrt(1.0 - q * q)
                best = min(best, (1 - s) * a + s * b + h * np.sqrt(1 + s * s))
        return best

    def update(j, i):
        h = slow[j, i] * dx
        best = np.inf
        for (aj, ai), (bj, bi), (cj, ci) in _TRIANGLES:
            a1 = kd[j + aj, i + ai]
            a2 = kd[j + cj, i + ci]
            b = kd[j + bj, i + bi]
            best = min(best, triangle(a1, b, h), triangle(a2, b, h))
        a = min(kd[j, i - 1], kd[j, i + 1])
        b = min(kd[j - 1, i], kd[j + 1, i])
        if np.isfinite(a) and np.isfinite(b) and abs(a - b) < h:
            best = min(best, 0.5 * (a + b + np.sqrt(2 * h * h - (a - b) ** 2)))
        return best

    heap = []

    def push_neighbours(j, i):
        for dj, di in _NEIGHBOURS8:
            jj, ii = j + dj, i + di
            if interior[jj, ii] and not known[jj, ii]:
                val = update(jj, ii)
                if val < d[jj, ii]:
                    d[jj, ii] = val
                    heapq.heappush(heap, (val, jj, ii))

    for j, i in zip(*np.nonzero(seeds)):
        push_neighbours(j, i)
    while heap:
        val, j, i = heapq.heappop(heap)
        if known[j, i] or val > d[j, i]:
            continue
        known[j, i] = True
        kd[j, i] = val
        push_neighbours(j, i)
    return np.where(interior & np.isfinite(d), d, 0.0)


_SQRT2 = np.sqrt(2.0)
_SQRT_HALF = np.sqrt(0.5)
_NEIGHBOURS8 = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))
# each diagonal neighbour with its two adjacent axial neighbours
_TRIANGLES = tuple(((dj, 0), (dj, di), (0, di)) for dj in (1, -1) for di in (1, -1))


# -- critical times ---------------------------------------------------------------

def _directions(n):
    ang = 2 * np.pi * np.arange(n) / n
    return np.cos(ang), np.sin(ang)


def point_lattice(geometry, spacing=None, offsets=(0.02, 0.1, 0.25)):
    """Sample points: a coarse interior lattice plus rings just inside Gamma.

    ``offsets`` are distances from Gamma as fractions of the half width.
    """
    h = geometry.half_width
    spacing = spacing or h / 8
    k = np.arange(-h, h + 1e-12, spacing)
    X, Y = np.meshgrid(k, k)
    pts = [np.stack([X.ravel(), Y.ravel()], axis=1)]
    for off in offsets:
        m = max(16, int(8 * geometry.diameter / (off * h + spacing)))
        ang = 2 * np.pi * (np.arange(m) + 0.5) / m
        if geometry.shape_kind == "disk":
            r = h - off * h
            pts.append(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
        else:
            s = np.linspace(-h + off * h, h - off * h, m // 4)
            e = h - off * h
            pts.extend([np.stack([s, np.full_like(s, e)], 1), np.stack([s, np.full_like(s, -e)], 1),
                        np.stack([np.full_like(s, e), s], 1), np.stack([np.full_like(s, -e), s], 1)])
    pts = np.concatenate(pts) + np.asarray(geometry.center)
    inside = geometry.level_set(pts[:, 0], pts[:, 1]) > 1e-9
    return pts[inside]


def chord_lengths(medium, points, n_directions, cap=None, step=None):
    """Full geodesic length through each (point, direction): exit time forward plus backward.

    ``n_directions`` must be even; the backward ray of direction k is the
    forward ray of direction k + n/2.
    """
    if n_directions % 2:
        raise GeodesicError("chord sampling needs an even number of directions")
    dxs, dys = _directions(n_directions)
    P = np.repeat(points, n_directions, axis=0)
    DX = np.tile(dxs, len(points))
    DY = np.tile(dys, len(points))
    fwd = trace_rays(medium, P[:, 0], P[:, 1], DX, DY, cap, step)["time"].reshape(len(points), n_directions)
    return fwd + np.roll(fwd, -n_directions // 2, axis=1)


def visible_time(medium, points, n_directions, arc_range=None, reflect=False, cap=None, step=None):
    """max over (x, xi) of min(tau(x, xi), tau(x, -xi)) with arrivals counted on ``arc_range``."""
    dxs, dys = _directions(n_directions)
    P = np.repeat(points, n_directions, axis=0)
    DX = np.tile(dxs, len(points))
    DY = np.tile(dys, len(points))
    fwd = first_arrival(medium, P[:, 0], P[:, 1], DX, DY, arc_range, reflect, cap, step)
    bwd = first_arrival(medium, P[:, 0], P[:, 1], -DX, -DY, arc_range, reflect, cap, step)
    return float(np.max(np.minimum(fwd, bwd)))


@dataclass
class CriticalTimes:
    T0: float
    T1: float
    T2: Optional[float] = None
    T2_reflected: Optional[float] = None
    T0_refined: Optional[float] = None
    trapped: bool = False
    T2_trapped: bool = False

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def critical_times(medium, n_directions=64, points=None, K_points=None, arc_range=None,
                   cap=None, step=None):
    """Estimate T0 (longest geodesic), T1 (max distance to Gamma) and T2(K, Gamma').

    T0 is also recomputed with twice the directions and extrapolated
    (``T0_refined``). T2 is computed only when ``K_points`` is given.
    """
    if n_directions < 8:
        raise GeodesicError("need at least 8 directions")
    geom = medium.geometry
    pts = point_lattice(geom) if points is None else np.asarray(points, float)
    fine = chord_lengths(medium, pts, 2 * n_directions, cap, step)
    lengths = fine[:, ::2]
    trapped = bool(np.any(~np.isfinite(fine)))
    T0 = float(np.max(lengths)) if not trapped else np.inf
    T0_fine = float(np.max(fine))
    refined = T0_fine + (T0_fine - T0) / 3.0 if np.isfinite(T0_fine) else np.inf
    T1 = float(np.max(eikonal_distance(medium)))
    out = CriticalTimes(T0, T1, T0_refined=refined, trapped=trapped)
    if K_points is not None:
        out.T2 = visible_time(medium, K_points, n_directions, arc_range, False, cap, step)
        out.T2_reflected = visible_time(medium, K_points, n_directions, arc_range, True, cap, step)
        out.T2_trapped = not np.isfinite(out.T2)
    return out


# -- visibility -------------------------------------------------------------------

def _symbol_terms(medium, cutoff, x, y, dirx, diry, cap=None, step=None):
    terms = []
    for sgn in (1.0, -1.0):
        res = trace_rays(medium, x, y, sgn * dirx, sgn * diry, cap, step)
        t = res["time"]
        ok = np.isfinite(t) & (t <= cutoff.T)
        arcs = medium.geometry.arc_position(res["x"], res["y"])
        val = np.where(ok, cutoff(np.clip(t, 0, cutoff.T), arcs), 0.0)
        terms.append(0.5 * val)
    return terms


def visibility_symbol(medium, cutoff, x, xi, cap=None, step=None):
    """Half the sum of chi at the exits of the rays through x in directions +xi and -xi."""
    a, b = _symbol_terms(medium, cutoff, x[0], x[1], xi[0], xi[1], cap, step)
    return float(a[0] + b[0])


def visibility_map(medium, cutoff, K_mask, n_directions=16, cap=None, step=None):
    """Minimum of the symbol over sampled directions at each sample of ``K_mask``.

    Directions cover a half circle, since the symbol is even in xi.
    """
    if n_directions < 8:
        raise GeodesicError("sampling too coarse: need at least 8 directions")
    X, Y = medium.geometry.grid.coords()
    K_mask = np.asarray(K_mask, bool) & medium.geometry.interior_mask
    px, py = X[K_mask], Y[K_mask]
    ang = np.pi * np.arange(n_directions) / n_directions
    P = np.repeat(np.stack([px, py], 1), n_directions, axis=0)
    DX = np.tile(np.cos(ang), len(px))
    DY = np.tile(np.sin(ang), len(px))
    a, b = _symbol_terms(medium, cutoff, P[:, 0], P[:, 1], DX, DY, cap, step)
    sym = (a + b).reshape(len(px), n_directions)
    out = np.zeros(medium.geometry.grid.shape)
    out[K_mask] = sym.min(axis=1)
    return out
