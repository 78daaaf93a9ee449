"""Uniform 2-D grids, domain geometry, finite-difference operators and energies.

Fields are plain ``float64`` arrays of shape ``(ny, nx)``; row ``j`` holds
``y = origin[1] + j * dx`` and column ``i`` holds ``x = origin[0] + i * dx``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    dx: float
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise GridError(f"grid too small: {self.nx}x{self.ny} (need at least 3x3)")
        if not self.dx > 0:
            raise GridError(f"grid spacing must be positive, got {self.dx}")

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def box_extent(self):
        return ((self.nx - 1) * self.dx, (self.ny - 1) * self.dx)

    def coords(self):
        """Return ``(X, Y)`` coordinate arrays of shape ``(ny, nx)``."""
        x = self.origin[0] + self.dx * np.arange(self.nx)
        y = self.origin[1] + self.dx * np.arange(self.ny)
        return np.meshgrid(x, y)

    def zeros(self):
        return np.zeros(self.shape)

    def check(self, values, name="field"):
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise GridError(f"{name} has shape {values.shape}, grid expects {self.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError(f"{name} contains non-finite values")
        return values


@dataclass(frozen=True, eq=False)
class DomainGeometry:
    """Region of interest Omega inside a buffered box.

    ``interior_mask`` marks the unknowns of Dirichlet problems on Omega,
    ``gamma`` lists the boundary layer samples as ``(j, i)`` index pairs sorted
    by polar angle about ``center``. ``omega_mask`` is the closure (interior
    plus boundary layer) and is the integration region for norms on Omega.
    """

    grid: Grid2D
    shape_kind: str
    size: float
    center: Tuple[float, float]
    interior_mask: np.ndarray
    gamma: np.ndarray
    normals: np.ndarray
    arc: np.ndarray
    buffer_width: float
    gamma_prime_mask: np.ndarray = field(default=None)

    @property
    def omega_mask(self):
        m = self.interior_mask.copy()
        m[self.gamma[:, 0], self.gamma[:, 1]] = True
        return m

    @property
    def n_boundary(self):
        return len(self.gamma)

    @property
    def diameter(self):
        return self.size * (np.sqrt(2.0) if self.shape_kind == "square" else 2.0)

    @property
    def half_width(self):
        return self.size / 2 if self.shape_kind == "square" else self.size

    def boundary_values(self, values):
        return values[self.gamma[:, 0], self.gamma[:, 1]]

    def level_set(self, x, y):
        """Continuous signed distance-like function, positive inside Omega."""
        cx, cy = self.center
        if self.shape_kind == "disk":
            return self.size - np.hypot(x - cx, y - cy)
        h = self.size / 2
        return np.minimum(h - np.abs(x - cx), h - np.abs(y - cy))

    def arc_position(self, x, y):
        return np.arctan2(y - self.center[1], x - self.center[0])

    def with_gamma_prime(self, mask):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n_boundary,):
            raise GridError("gamma_prime mask must have one entry per boundary sample")
        return DomainGeometry(self.grid, self.shape_kind, self.size, self.center,
                              self.interior_mask, self.gamma, self.normals, self.arc,
                              self.buffer_width, mask)

    def hash(self):
        h = hashlib.sha256()
        g = self.grid
        h.update(repr((g.nx, g.ny, float(g.dx), tuple(map(float, g.origin)),
                       self.shape_kind, float(self.size))).encode())
        h.update(np.ascontiguousarray(self.gamma, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.interior_mask).tobytes())
        return h.hexdigest()[:16]

    def check_buffer(self, T):
        if not self.buffer_width > T / 2:
            raise GridError(f"buffer width {self.buffer_width:.6g} must exceed T/2 = {T / 2:.6g}")


def _boundary_layer(interior):
    near = np.zeros_like(interior)
    near[1:, :] |= interior[:-1, :]
    near[:-1, :] |= interior[1:, :]
    near[:, 1:] |= interior[:, :-1]
    near[:, :-1] |= interior[:, 1:]
    return near & ~interior


def make_domain(shape="square", size=1.0, cells=64, buffer_width=0.8):
    """Build a centred square (side ``size``) or disk (radius ``size``) domain.

    ``cells`` is the number of grid spacings across the side (square) or the
    radius (disk). The buffer is rounded up to a whole number of cells.
    """
    if shape not in ("square", "disk"):
        raise GridError(f"unknown domain shape {shape!r}")
    if cells < 2 or size <= 0 or buffer_width <= 0:
        raise GridError("domain needs cells >= 2, size > 0 and buffer_width > 0")
    dx = size / cells
    half_cells = cells // 2 if shape == "square" else cells
    if shape == "square" and cells % 2:
        raise GridError("square domains need an even number of cells")
    nb = int(np.ceil(buffer_width / dx - 1e-9))
    n = 2 * (half_cells + nb) + 1
    origin = (-(half_cells + nb) * dx, -(half_cells + nb) * dx)
    grid = Grid2D(n, n, dx, origin)
    jj, ii = np.indices(grid.shape)
    kx = ii - (half_cells + nb)
    ky = jj - (half_cells + nb)
    if shape == "square":
        interior = (np.abs(kx) < half_cells) & (np.abs(ky) < half_cells)
    else:
        interior = kx * kx + ky * ky < half_cells * half_cells
    gamma_mask = _boundary_layer(interior)
    gj, gi = np.nonzero(gamma_mask)
    X, Y = grid.coords()
    gx, gy = X[gj, gi], Y[gj, gi]
    arc = np.arctan2(gy, gx)
    order = np.lexsort((np.hypot(gx, gy), arc))
    gj, gi, gx, gy, arc = gj[order], gi[order], gx[order], gy[order], arc[order]
    if shape == "disk":
        r = np.hypot(gx, gy)
        normals = np.stack([gx / r, gy / r], axis=1)
    else:
        h = size / 2
        normals = np.zeros((len(gx), 2))
        on_x = np.isclose(np.abs(gx), h)
        normals[on_x, 0] = np.sign(gx[on_x])
        normals[~on_x, 1] = np.sign(gy[~on_x])
    buffer_actual = nb * dx
    geom = DomainGeometry(grid, shape, float(size), (0.0, 0.0), interior,
                          np.stack([gj, gi], axis=1), normals, arc, buffer_actual,
                          np.ones(len(gj), dtype=bool))
    validate_geometry(geom)
    return geom


def validate_geometry(geom):
    interior = geom.interior_mask
    if interior[0, :].any() or interior[-1, :].any() or interior[:, 0].any() or interior[:, -1].any():
        raise GridError("Omega must lie strictly inside the box")
    closure = geom.omega_mask
    gj, gi = geom.gamma[:, 0], geom.gamma[:, 1]
    touches_inside = np.zeros(len(gj), dtype=bool)
    touches_outside = np.zeros(len(gj), dtype=bool)
    for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
        touches_inside |= interior[gj + dj, gi + di]
        touches_outside |= ~closure[gj + dj, gi + di]
    if not (touches_inside.all() and touches_outside.all()):
        raise GridError("every boundary sample must neighbour both Omega and its exterior")
    if np.max(np.abs(np.linalg.norm(geom.normals, axis=1) - 1.0)) > 1e-12:
        raise GridError("boundary normals must have unit length")


def laplacian(field, dx):
    """Five-point Laplacian; box edge samples are returned as zero."""
    f = np.asarray(field, dtype=float)
    if f.ndim != 2 or min(f.shape) < 3:
        raise GridError(f"grid too small for the Laplacian: {f.shape}")
    out = np.zeros_like(f)
    out[1:-1, 1:-1] = (f[1:-1, 2:] + f[1:-1, :-2] + f[2:, 1:-1] + f[:-2, 1:-1]
                       - 4.0 * f[1:-1, 1:-1]) / (dx * dx)
    return out


def gradient_sq(field, dx, stencil="central"):
    """Squared gradient magnitude per sample.

    ``stencil="central"`` uses centred differences at interior samples (edges
    zero). ``stencil="forward"`` assigns to each sample the two links to its
    ``+x`` and ``+y`` neighbours, so that summing over the box gives exactly
    ``<-laplacian(f), f>`` for fields vanishing on the box edge.
    """
    f = np.asarray(field, dtype=float)
    if f.ndim != 2 or min(f.shape) < 3:
        raise GridError(f"grid too small for the gradient: {f.shape}")
    out = np.zeros_like(f)
    if stencil == "central":
        gx = (f[1:-1, 2:] - f[1:-1, :-2]) / (2.0 * dx)
        gy = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2.0 * dx)
        out[1:-1, 1:-1] = gx * gx + gy * gy
    elif stencil == "forward":
        gx = (f[:, 1:] - f[:, :-1]) / dx
        gy = (f[1:, :] - f[:-1, :]) / dx
        out[:, :-1] += gx * gx
        out[:-1, :] += gy * gy
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    return out


def _masked_sum(values, mask):
    # fixed row-major order, independent of any threading in numpy reductions
    return float(np.add.reduce(values[mask].ravel(), dtype=np.float64))


def energy(position, velocity, c, mask, dx, stencil="forward"):
    """Local energy 1/2 * sum over ``mask`` of |grad u|^2 + c^-2 (du/dt)^2, times dx^2."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise GridError("sound speed must be positive")
    mask = np.asarray(mask, dtype=bool)
    grad = _masked_sum(gradient_sq(position, dx, stencil), mask)
    kin = _masked_sum(np.asarray(velocity, dtype=float) ** 2 / c ** 2, mask)
    return 0.5 * (grad + kin) * dx * dx


def _check_h10(f, geometry):
    scale = np.max(np.abs(f)) if f.size else 0.0
    if geometry is not None:
        edge = np.max(np.abs(geometry.boundary_values(f)), initial=0.0)
        outside = np.max(np.abs(f[~geometry.omega_mask]), initial=0.0)
        if max(edge, outside) > 1e-12 * max(scale, 1e-300) and max(edge, outside) > 0:
            raise GridError("field does not vanish on the boundary of Omega")


def hd_norm(f, omega_mask, dx, geometry=None, stencil="forward"):
    """Dirichlet norm sqrt(sum |grad f|^2 dx^2) over ``omega_mask``.

    When ``geometry`` is given, the field must vanish on Gamma and outside Omega.
    """
    f = np.asarray(f, dtype=float)
    _check_h10(f, geometry)
    return float(np.sqrt(_masked_sum(gradient_sq(f, dx, stencil), np.asarray(omega_mask, bool))) * dx)


def l2c_norm(g, c, omega_mask, dx):
    g = np.asarray(g, dtype=float)
    return float(np.sqrt(_masked_sum(g * g / np.asarray(c, float) ** 2, np.asarray(omega_mask, bool))) * dx)
