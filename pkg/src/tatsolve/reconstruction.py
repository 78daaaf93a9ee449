"""Neumann-series inversion and the experiments built on it."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.ndimage import binary_dilation

from .backward import apply_error_operator, apply_time_reversal
from .forward import BoundaryTrace, apply_lambda, trace_h1_norm
from .grid import hd_norm

log = logging.getLogger(__name__)


@dataclass
class IterationRecord:
    m: int
    residual_hd: float
    error_hd: Optional[float] = None
    contraction_ratio: Optional[float] = None


@dataclass
class SeriesReport:
    iterates: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    initial_norm: float = 0.0

    @property
    def ratios(self):
        return np.array([r.contraction_ratio for r in self.iterates if r.contraction_ratio is not None])

    @property
    def max_ratio(self):
        r = self.ratios
        return float(r.max()) if r.size else 0.0

    def rows(self):
        return [(r.m, r.residual_hd, r.error_hd, r.contraction_ratio) for r in self.iterates]


def _weights(trace, geometry, cutoff):
    if cutoff is None:
        return None
    return cutoff.weights(trace.times, geometry.arc)


def measure(medium, f, T, dt, weights=None):
    """Cut-off measurement chi * Lambda f."""
    tr = apply_lambda(medium, f, T, dt)
    return tr if weights is None else tr.scaled(weights)


def neumann_reconstruct(medium, trace, cutoff=None, max_iters=20, tol=1e-8, f_true=None,
                        tol_elliptic=1e-10, patience=3):
    """Partial sums of sum_m K^m A (chi h) with K = I - A chi Lambda.

    Iterates f0 = A(chi h), f_{m+1} = f_m + A(chi h - chi Lambda f_m) and stops
    when ||f_{m+1} - f_m||_HD <= tol * ||f0||_HD. If the residual grows
    ``patience`` times in a row the best iterate so far is returned with
    ``converged = False``.
    """
    if tol <= 0 or max_iters < 1:
        raise ValueError("need tol > 0 and max_iters >= 1")
    geom = medium.geometry
    dx = geom.grid.dx
    omega = geom.omega_mask
    w = _weights(trace, geom, cutoff)
    data = trace if w is None else trace.scaled(w)
    norm = lambda g: hd_norm(g, omega, dx)  # noqa: E731
    err = (lambda g: norm(g - f_true)) if f_true is not None else (lambda g: None)

    f = apply_time_reversal(medium, data, tol_elliptic)
    report = SeriesReport(initial_norm=norm(f))
    report.iterates.append(IterationRecord(0, float("nan"), err(f)))
    if report.initial_norm == 0.0:
        report.converged, report.stop_reason = True, "zero data"
        report.iterates[0].residual_hd = 0.0
        return f, report
    best, best_res, prev_res, growth = f, np.inf, None, 0
    for m in range(max_iters):
        resid = data - measure(medium, f, trace.T, trace.dt, w)
        step = apply_time_reversal(medium, resid, tol_elliptic)
        f = f + step
        r = norm(step)
        ratio = r / prev_res if prev_res else None
        report.iterates.append(IterationRecord(m + 1, r, err(f), ratio))
        log.info("iteration %d: residual %.3e ratio %s", m + 1, r, ratio)
        if r < best_res:
            best, best_res = f, r
        growth = growth + 1 if (prev_res is not None and r > prev_res) else 0
        prev_res = r
        if r <= tol * report.initial_norm:
            report.converged, report.stop_reason = True, "tolerance"
            return f, report
        if growth >= patience:
            report.stop_reason = "divergence"
            return best, report
    report.stop_reason = "max_iters"
    return f, report


def partial_sums_explicit(medium, trace, cutoff, m_max, tol_elliptic=1e-10):
    """sum_{j<=m} K^j A(chi h) for m = 0..m_max via explicit operator powers."""
    geom = medium.geometry
    w = _weights(trace, geom, cutoff)
    data = trace if w is None else trace.scaled(w)
    term = apply_time_reversal(medium, data, tol_elliptic)
    sums = [term.copy()]
    for _ in range(m_max):
        term = term - apply_time_reversal(medium, measure(medium, term, trace.T, trace.dt, w), tol_elliptic)
        sums.append(sums[-1] + term)
    return sums


def reconstruction_metrics(f_hat, f_true, geometry, dilation=2):
    """Relative H_D, L2 and support-restricted L2 errors."""
    f_true = np.asarray(f_true, float)
    if not np.any(f_true):
        raise ValueError("reference image is identically zero")
    dx = geometry.grid.dx
    omega = geometry.omega_mask
    diff = np.asarray(f_hat, float) - f_true
    support = binary_dilation(f_true != 0, iterations=dilation)
    return {
        "rel_hd": hd_norm(diff, omega, dx) / hd_norm(f_true, omega, dx),
        "rel_l2": float(np.linalg.norm(diff[omega]) / np.linalg.norm(f_true[omega])),
        "rel_l2_support": float(np.linalg.norm(diff[support]) / np.linalg.norm(f_true[support])),
    }


def continuity_experiment(medium, phantom, T, scales, dt=None):
    """Rows (||a||_inf, ||K_0 f - K_a f||_HD) for a = s * a_base.

    Returns ``(rows, slope)`` where ``slope`` is the difference per unit
    attenuation at the smallest nonzero level.
    """
    geom = medium.geometry
    f = getattr(phantom, "f", phantom)
    k0 = apply_error_operator(medium.scaled_attenuation(0.0), f, T, dt)
    rows = []
    for s in scales:
        ms = medium.scaled_attenuation(float(s))
        ka = apply_error_operator(ms, f, T, dt)
        rows.append((ms.attenuation_sup(), hd_norm(k0 - ka, geom.omega_mask, geom.grid.dx)))
    nonzero = [(a, d) for a, d in rows if a > 0]
    slope = min(nonzero)[1] / min(nonzero)[0] if nonzero else 0.0
    return rows, slope


def continuity_bound(a_sup, T, C, f_norm):
    return C * a_sup * np.sqrt(1 + a_sup ** 2) * np.exp(T * a_sup) * f_norm


def attenuation_sweep(medium, phantom, T, levels, dt=None, max_iters=20, tol=1e-8):
    """Neumann runs with ||a||_inf at each level; reports where contraction fails.

    ``medium.a`` is rescaled to each sup-norm level. Returns ``(rows,
    threshold)``; rows are ``(level, max_ratio, converged, rel_hd_error)``
    and ``threshold`` is the first level whose run loses contraction (None
    if all contract).
    """
    f = getattr(phantom, "f", phantom)
    base = medium.attenuation_sup()
    if base == 0:
        raise ValueError("attenuation sweep needs a nonzero base attenuation")
    geom = medium.geometry
    rows, threshold = [], None
    for level in levels:
        ms = medium.scaled_attenuation(level / base)
        h = apply_lambda(ms, f, T, dt)
        f_hat, rep = neumann_reconstruct(ms, h, None, max_iters, tol, f_true=f)
        ok = bool(rep.ratios.size == 0 or rep.max_ratio < 1.0)
        rel = hd_norm(f_hat - f, geom.omega_mask, geom.grid.dx) / hd_norm(f, geom.omega_mask, geom.grid.dx)
        rows.append((float(level), rep.max_ratio, rep.converged, rel))
        if not ok and threshold is None:
            threshold = float(level)
    return rows, threshold


def stability_probe(medium, phantoms, T, dt=None):
    """Rows (||f||_HD, ||Lambda f||_H1, ratio) and the largest ratio."""
    geom = medium.geometry
    rows = []
    for ph in phantoms:
        f = getattr(ph, "f", ph)
        fn = hd_norm(f, geom.omega_mask, geom.grid.dx)
        if fn == 0:
            raise ValueError("the zero phantom has no stability ratio")
        hn = trace_h1_norm(apply_lambda(medium, f, T, dt), geom)
        rows.append((fn, hn, fn / hn))
    return rows, max(r[2] for r in rows)


def injectivity_probe(medium, phantoms, T, dt=None):
    """min over phantoms of ||Lambda f||_L2(trace) / ||f||_HD."""
    geom = medium.geometry
    ratios = []
    for ph in phantoms:
        f = getattr(ph, "f", ph)
        tr = apply_lambda(medium, f, T, dt)
        ratios.append(np.sqrt(np.sum(tr.samples ** 2) * tr.dt * geom.grid.dx)
                      / hd_norm(f, geom.omega_mask, geom.grid.dx))
    return float(min(ratios))


def smoothing_ratio(residual, f, geometry, quantile=0.75):
    """High-frequency energy of ``residual`` relative to that of ``f``.

    Both fields are restricted to the bounding box of Omega; the band is the
    radial DFT wavenumbers at or above ``quantile`` times the largest radial
    wavenumber on that box. Returns ``(ratio, band_energy_of_f)``.
    """
    rows = np.any(geometry.omega_mask, axis=1)
    cols = np.any(geometry.omega_mask, axis=0)
    sub = np.ix_(rows, cols)
    F = np.abs(np.fft.fft2(f[sub])) ** 2
    R = np.abs(np.fft.fft2(residual[sub])) ** 2
    ky = np.fft.fftfreq(F.shape[0])
    kx = np.fft.fftfreq(F.shape[1])
    kr = np.hypot(*np.meshgrid(kx, ky))
    band = kr >= quantile * kr.max()
    fb = float(F[band].sum())
    if fb == 0:
        raise ValueError("the reference field has no energy in the high-frequency band")
    return float(R[band].sum()) / fb, fb


def edge_band_error(f_hat, f_true, band_mask):
    d = (np.asarray(f_hat) - np.asarray(f_true))[band_mask]
    return float(np.sqrt(np.sum(d * d)))


def as_trace(samples, dt, geometry):
    return BoundaryTrace(np.asarray(samples, float), dt, geometry.hash())
