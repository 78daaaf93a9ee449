"""scikit-learn style wrappers around the measurement and inversion operators.

Samples are whole fields: ``X`` for :class:`BoundaryMeasurement` has shape
``(n_samples, ny, nx)`` and its output, the input of the reconstructors, has
shape ``(n_samples, nt, nb)``. ``fit`` only validates and records the
discretization; the operators themselves have no learned state.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .backward import apply_time_reversal
from .forward import BoundaryTrace, apply_lambda, choose_dt
from .medium import Medium
from .reconstruction import neumann_reconstruct


def _check_medium(medium):
    if not isinstance(medium, Medium):
        raise TypeError(f"medium must be a Medium, got {type(medium).__name__}")
    return medium


def _check_stack(X, shape, what):
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
    if X.ndim == len(shape):
        X = X[None]
    if X.shape[1:] != tuple(shape):
        raise ValueError(f"{what} must have trailing shape {tuple(shape)}, got {X.shape[1:]}")
    return X


class BoundaryMeasurement(TransformerMixin, BaseEstimator):
    """Source fields to boundary traces (optionally cut off and noisy).

    Feed raw traces to :class:`NeumannReconstructor`; it applies its own cutoff.
    """

    def __init__(self, medium=None, T=1.0, dt=None, cfl_safety=0.9, cutoff=None, noise_std=0.0,
                 random_state=None):
        self.medium = medium
        self.T = T
        self.dt = dt
        self.cfl_safety = cfl_safety
        self.cutoff = cutoff
        self.noise_std = noise_std
        self.random_state = random_state

    def fit(self, X=None, y=None):
        m = _check_medium(self.medium)
        m.geometry.check_buffer(self.T)
        if X is not None:
            _check_stack(X, m.geometry.grid.shape, "source fields")
        self.dt_, self.n_steps_ = choose_dt(self.T, m.geometry.grid.dx, m.c_max(), self.cfl_safety, self.dt)
        self.n_boundary_ = m.geometry.n_boundary
        return self

    def transform(self, X):
        check_is_fitted(self, "dt_")
        m = self.medium
        X = _check_stack(X, m.geometry.grid.shape, "source fields")
        rng = np.random.default_rng(self.random_state)
        out = []
        for f in X:
            tr = apply_lambda(m, f, self.T, self.dt_)
            h = tr.samples
            if self.cutoff is not None:
                h = h * self.cutoff.weights(tr.times, m.geometry.arc)
            if self.noise_std > 0:
                h = h + self.noise_std * rng.standard_normal(h.shape)
            out.append(h)
        return np.stack(out)


class _TraceTransformer(TransformerMixin, BaseEstimator):
    def _validate_traces(self, X):
        check_is_fitted(self, "dt_")
        return _check_stack(X, (self.n_steps_ + 1, self.medium.geometry.n_boundary), "traces")

    def _fit_common(self, X):
        m = _check_medium(self.medium)
        self.dt_, self.n_steps_ = choose_dt(self.T, m.geometry.grid.dx, m.c_max(), self.cfl_safety, self.dt)
        if X is not None:
            self._validate_traces(X)
        return self

    def _trace(self, h):
        return BoundaryTrace(h, self.dt_, self.medium.geometry.hash())


class TimeReversal(_TraceTransformer):
    """Modified time reversal A h applied to each trace."""

    def __init__(self, medium=None, T=1.0, dt=None, cfl_safety=0.9, tol_elliptic=1e-10):
        self.medium = medium
        self.T = T
        self.dt = dt
        self.cfl_safety = cfl_safety
        self.tol_elliptic = tol_elliptic

    def fit(self, X=None, y=None):
        return self._fit_common(X)

    def transform(self, X):
        X = self._validate_traces(X)
        return np.stack([apply_time_reversal(self.medium, self._trace(h), self.tol_elliptic) for h in X])


class NeumannReconstructor(_TraceTransformer):
    """Neumann-series inversion of each trace; per-sample reports in ``reports_``."""

    def __init__(self, medium=None, T=1.0, dt=None, cfl_safety=0.9, cutoff=None, max_iters=20, tol=1e-8,
                 tol_elliptic=1e-10, patience=3):
        self.medium = medium
        self.T = T
        self.dt = dt
        self.cfl_safety = cfl_safety
        self.cutoff = cutoff
        self.max_iters = max_iters
        self.tol = tol
        self.tol_elliptic = tol_elliptic
        self.patience = patience

    def fit(self, X=None, y=None):
        return self._fit_common(X)

    def transform(self, X):
        X = self._validate_traces(X)
        images, self.reports_ = [], []
        for h in X:
            f, rep = neumann_reconstruct(self.medium, self._trace(h), self.cutoff, self.max_iters, self.tol,
                                         tol_elliptic=self.tol_elliptic, patience=self.patience)
            images.append(f)
            self.reports_.append(rep)
        return np.stack(images)
