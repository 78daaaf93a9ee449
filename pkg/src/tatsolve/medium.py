"""Sound speed, attenuation, source phantoms and measurement cutoffs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .grid import DomainGeometry, laplacian


class MediumError(ValueError):
    pass


def smoothstep(s):
    """Quintic smoothstep, C2 at both ends; 0 for s <= 0 and 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


# -- generators ---------------------------------------------------------------

def _profile(kind, params, X, Y, geometry=None):
    """Evaluate a named generator on coordinates; returns the perturbation only.

    A ``bump`` is multiplied by a smoothstep taper over ``taper`` (default a
    fifth of the half width) inside Gamma so that it meets the exterior
    value without a kink.
    """
    p = dict(params)
    cx, cy = p.get("center", (0.0, 0.0))
    r = np.hypot(X - cx, Y - cy)
    if kind == "constant":
        return np.full_like(X, float(p.get("value", 0.0)))
    if kind == "bump":
        bump = p["amplitude"] * np.exp(-(r / p["width"]) ** 2)
        if geometry is not None:
            taper = p.get("taper", 0.2 * geometry.half_width)
            if taper > 0:
                bump = bump * smoothstep(geometry.level_set(X, Y) / taper)
        return bump
    if kind == "inclusion":
        w = float(p.get("mollifier", 0.0))
        r0 = p["radius"]
        if w <= 0:
            return p["amplitude"] * (r <= r0).astype(float)
        return p["amplitude"] * smoothstep((r0 + w / 2 - r) / w)
    raise MediumError(f"unknown generator {kind!r}")


@dataclass(frozen=True)
class MediumSpec:
    c_kind: str = "constant"
    c_params: dict = field(default_factory=dict)
    a_kind: str = "constant"
    a_params: dict = field(default_factory=dict)
    smoothness_budget: float = 0.5
    attenuation_outside: bool = False


@dataclass(frozen=True, eq=False)
class Medium:
    c: np.ndarray
    a: np.ndarray
    geometry: DomainGeometry
    spec: Optional[MediumSpec] = None

    def attenuation_sup(self):
        return float(np.max(self.a))

    def c_max(self):
        return float(np.max(self.c))

    def scaled_attenuation(self, s):
        return Medium(self.c, s * self.a, self.geometry, self.spec)

    def with_attenuation(self, a):
        m = Medium(self.c, np.asarray(a, dtype=float), self.geometry, self.spec)
        validate_medium(m, check_smoothness=False)
        return m


def validate_medium(medium, smoothness_budget=0.5, check_smoothness=True, attenuation_outside=False):
    g = medium.geometry
    c = g.grid.check(medium.c, "sound speed")
    a = g.grid.check(medium.a, "attenuation")
    if np.any(c <= 0):
        raise MediumError("sound speed must be positive")
    if np.any(a < 0):
        raise MediumError("attenuation must be nonnegative")
    outside = ~g.interior_mask
    if np.any(c[outside] != 1.0):
        raise MediumError("sound speed must equal one outside Omega")
    if not attenuation_outside and np.any(a[outside] != 0.0):
        raise MediumError("attenuation must vanish outside Omega")
    if check_smoothness:
        dx2 = g.grid.dx ** 2
        for name, fld in (("sound speed", c), ("attenuation", a)):
            roughness = float(np.max(np.abs(laplacian(fld, g.grid.dx)[1:-1, 1:-1]))) * dx2
            if roughness > smoothness_budget:
                raise MediumError(f"{name} is too rough for the grid: "
                                  f"max|lap|*dx^2 = {roughness:.3g} > {smoothness_budget}")


def build_medium(geometry, spec=None):
    spec = spec or MediumSpec()
    X, Y = geometry.grid.coords()
    inside = geometry.interior_mask
    c = 1.0 + np.where(inside, _profile(spec.c_kind, spec.c_params, X, Y, geometry), 0.0)
    if spec.c_kind == "constant":
        c = np.where(inside, float(spec.c_params.get("value", 1.0)), 1.0)
    a_raw = _profile(spec.a_kind, spec.a_params, X, Y, geometry)
    a = a_raw if spec.attenuation_outside else np.where(inside, a_raw, 0.0)
    medium = Medium(c, a, geometry, spec)
    validate_medium(medium, spec.smoothness_budget, attenuation_outside=spec.attenuation_outside)
    return medium


def constant_medium(geometry, c=1.0, a=0.0):
    return build_medium(geometry, MediumSpec("constant", {"value": c}, "constant", {"value": a}))


# -- phantoms -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Phantom:
    f: np.ndarray
    support_margin: float
    spec: Optional[dict] = None


def _blob(item, X, Y, rng):
    kind = item["kind"]
    cx, cy = item.get("center", (0.0, 0.0))
    amp = float(item.get("amplitude", 1.0))
    r = np.hypot(X - cx, Y - cy)
    if kind == "zero":
        return np.zeros_like(X)
    if kind == "gaussian":
        s = item["width"]
        return amp * np.exp(-(r / s) ** 2) * (1.0 - smoothstep((r - 3 * s) / s))
    if kind == "disk":
        w = float(item.get("mollifier", 0.0))
        if w <= 0:
            return amp * (r <= item["radius"]).astype(float)
        return amp * smoothstep((item["radius"] + w / 2 - r) / w)
    if kind == "box":
        hx, hy = item["half_size"]
        w = float(item.get("mollifier", 0.0))
        if w <= 0:
            return amp * ((np.abs(X - cx) <= hx) & (np.abs(Y - cy) <= hy)).astype(float)
        sx = smoothstep((hx + w / 2 - np.abs(X - cx)) / w)
        sy = smoothstep((hy + w / 2 - np.abs(Y - cy)) / w)
        return amp * sx * sy
    if kind == "checkerboard":
        cell = item["cell"]
        ix = np.floor((X - cx) / cell).astype(int)
        iy = np.floor((Y - cy) / cell).astype(int)
        signs = rng.choice([-1.0, 1.0], size=(64, 64))
        pattern = signs[iy % 64, ix % 64]
        w = float(item.get("mollifier", cell))
        window = smoothstep((item["radius"] - r) / w)
        return amp * pattern * window
    raise MediumError(f"unknown phantom kind {kind!r}")


def build_phantom(geometry, spec, min_margin=None):
    """Build a source from a dict spec (``kind`` or ``blobs`` list).

    Recognised kinds: zero, gaussian, disk, box, checkerboard. A spec with a
    ``blobs`` list sums its members.
    """
    X, Y = geometry.grid.coords()
    rng = np.random.default_rng(spec.get("seed", 0))
    items = spec["blobs"] if "blobs" in spec else [spec]
    f = np.zeros(geometry.grid.shape)
    for item in items:
        f += _blob(item, X, Y, rng)
    f = np.where(geometry.interior_mask, f, 0.0)
    if min_margin is None:
        min_margin = spec.get("min_margin", 0.1 * geometry.diameter)
    support = f != 0
    if support.any():
        margin = float(np.min(geometry.level_set(X[support], Y[support])))
        if margin < min_margin:
            raise MediumError(f"phantom support comes within {margin:.4g} of the boundary "
                              f"(minimum margin {min_margin:.4g})")
    else:
        margin = float("inf")
    return Phantom(f, margin, dict(spec))


def random_phantom(geometry, seed, n_blobs=3, min_margin=None):
    """Sum of randomly placed Gaussians inside the inner half of Omega."""
    rng = np.random.default_rng(seed)
    h = geometry.half_width
    blobs = []
    for _ in range(n_blobs):
        s = rng.uniform(0.05, 0.1) * h
        rad = rng.uniform(0, 0.35) * h
        ang = rng.uniform(0, 2 * np.pi)
        blobs.append({"kind": "gaussian", "center": (rad * np.cos(ang), rad * np.sin(ang)),
                      "width": s, "amplitude": rng.uniform(-1.0, 1.0)})
    return build_phantom(geometry, {"blobs": blobs, "seed": seed}, min_margin)


# -- cutoffs ------------------------------------------------------------------

@dataclass(frozen=True)
class Cutoff:
    """Smooth cutoff chi(t, arc) on [0, T] x Gamma.

    In ``complete`` mode chi is one on ``[0, t_flat]`` and zero from
    ``t_flat + width`` on. In ``partial`` mode chi is one up to ``T - width``,
    reaches zero at ``T``, and the spatial factor is positive exactly on the
    arc interval ``arc_range`` (radians, may wrap through pi).
    """

    T: float
    mode: str = "complete"
    t_flat: Optional[float] = None
    width: Optional[float] = None
    arc_range: Optional[Tuple[float, float]] = None
    arc_width: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("complete", "partial"):
            raise MediumError(f"unknown cutoff mode {self.mode!r}")
        if self.mode == "complete" and self._t_off() >= self.T:
            raise MediumError("complete-data cutoff must vanish on a neighbourhood of t = T "
                              f"(t_flat + width = {self._t_off():.4g} >= T = {self.T:.4g})")

    @property
    def w(self):
        return 0.1 * self.T if self.width is None else self.width

    def _t_flat(self):
        if self.mode == "partial":
            return self.T - self.w if self.t_flat is None else self.t_flat
        return 0.0 if self.t_flat is None else self.t_flat

    def _t_off(self):
        return self._t_flat() + self.w

    def time_profile(self, t):
        return 1.0 - smoothstep((np.asarray(t, float) - self._t_flat()) / self.w)

    def space_profile(self, arc):
        arc = np.asarray(arc, dtype=float)
        if self.mode == "complete" or self.arc_range is None:
            return np.ones_like(arc)
        lo, hi = self.arc_range
        length = (hi - lo) % (2 * np.pi) or 2 * np.pi
        pos = (arc - lo) % (2 * np.pi)
        inside = pos < length
        depth = np.minimum(pos, length - pos)
        aw = 0.1 * length if self.arc_width is None else self.arc_width
        return np.where(inside & (depth > 0), smoothstep(depth / aw), 0.0)

    def __call__(self, t, arc):
        return self.time_profile(t) * self.space_profile(arc)

    def weights(self, times, arcs):
        """Matrix chi(t_k, arc_j) of shape ``(len(times), len(arcs))``."""
        return np.outer(self.time_profile(times), self.space_profile(arcs))


def complete_cutoff(T, T0, width=None, margin=0.05):
    """Complete-data stabiliser: one up to ``(1 + margin) * T0``, zero near ``T``."""
    return Cutoff(T, "complete", t_flat=(1.0 + margin) * T0, width=width)


def partial_cutoff(T, arc_range, width=None, arc_width=None):
    return Cutoff(T, "partial", width=width, arc_range=tuple(arc_range), arc_width=arc_width)


def eval_cutoff(chi, geometry, t, boundary_index):
    if not 0.0 <= t <= chi.T:
        raise MediumError(f"t = {t} outside [0, {chi.T}]")
    return float(chi(t, geometry.arc[boundary_index]))
