"""scikit-learn style wrappers around the gauge map and the two solvers.

Inputs are arrays of spectral coefficients in centered order (or
:class:`SpectralField` objects); ``X`` for the transformer has shape
``(n_samples, n_modes)``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .solvers import SolverConfig, solve_normal_form, solve_reference
from .spectral import (FrequencyGrid, SpectralField, free_propagate, gauge_forward,
                       gauge_inverse)


def check_coeffs(X, n_modes: int, ensure_2d: bool = True) -> np.ndarray:
    """Complex array with trailing dimension ``n_modes`` and finite entries."""
    if isinstance(X, SpectralField):
        X = X.coeffs
    X = np.asarray(X)
    if X.dtype == object or not np.issubdtype(X.dtype, np.number):
        raise ValueError("coefficients must be numeric")
    X = X.astype(complex)
    if X.ndim == 1 and ensure_2d:
        X = X[None, :]
    if X.shape[-1] != n_modes:
        raise ValueError(f"expected {n_modes} modes, got trailing dimension {X.shape[-1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("coefficients contain NaN or inf")
    return X


def check_field(u, grid: FrequencyGrid) -> SpectralField:
    if isinstance(u, SpectralField):
        if u.grid != grid:
            raise ValueError(f"field grid {u.grid} does not match {grid}")
        return u
    return SpectralField(grid, check_coeffs(u, grid.n, ensure_2d=False))


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class GaugeTransformer(TransformerMixin, BaseEstimator):
    """u -> w = exp(-i int |u|^2) u, row by row."""

    def __init__(self, n_modes=64, domain_length=64 * np.pi):
        self.n_modes = n_modes
        self.domain_length = domain_length

    def fit(self, X=None, y=None):
        self.grid_ = FrequencyGrid(self.n_modes, self.domain_length)
        if X is not None:
            check_coeffs(X, self.n_modes)
        return self

    def transform(self, X):
        _check_fitted(self, "grid_")
        X = check_coeffs(X, self.n_modes)
        return np.stack([gauge_forward(SpectralField(self.grid_, x)).coeffs for x in X])

    def inverse_transform(self, X):
        _check_fitted(self, "grid_")
        X = check_coeffs(X, self.n_modes)
        return np.stack([gauge_inverse(SpectralField(self.grid_, x)).coeffs for x in X])


class _SolverBase(BaseEstimator):

    def _config(self, **extra):
        return SolverConfig(n=self.n_modes, L=self.domain_length, s=self.s, dt=self.dt,
                            T=self.t_final, guard=self.guard, **extra)

    def predict(self, times):
        """Interaction-picture coefficients at ``times``, linear between steps."""
        _check_fitted(self, "trajectory_")
        tr = self.trajectory_
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.min() < tr.times[0] - 1e-12 or times.max() > tr.times[-1] + 1e-12:
            raise ValueError(f"times must lie in [{tr.times[0]}, {tr.times[-1]}]")
        out = np.empty((len(times), tr.grid.n), dtype=complex)
        for j in range(tr.grid.n):
            out[:, j] = (np.interp(times, tr.times, tr.coeffs[:, j].real)
                         + 1j * np.interp(times, tr.times, tr.coeffs[:, j].imag))
        return out

    def predict_u(self, times):
        """Ungauged solution coefficients at ``times``."""
        v = self.predict(times)
        g = self.trajectory_.grid
        return np.stack([gauge_inverse(free_propagate(SpectralField(g, c), t)).coeffs
                         for c, t in zip(v, np.atleast_1d(times))])


class ReferenceSolver(_SolverBase):
    """RK4 reference solver; ``fit(u0)`` integrates from the ungauged data u0."""

    def __init__(self, n_modes=32, domain_length=8 * np.pi, s=0.6, dt=1e-3, t_final=0.1,
                 guard=10.0):
        self.n_modes = n_modes
        self.domain_length = domain_length
        self.s = s
        self.dt = dt
        self.t_final = t_final
        self.guard = guard

    def fit(self, u0, y=None):
        cfg = self._config()
        self.trajectory_ = solve_reference(check_field(u0, cfg.grid), cfg)
        return self


class NormalFormSolver(_SolverBase):
    """Fixed point of the truncated normal-form map of order J."""

    def __init__(self, n_modes=32, domain_length=8 * np.pi, s=0.6, dt=1e-3, t_final=0.1,
                 J=2, N=4.0, picard_tol=1e-12, picard_max_iter=60, c_hat=None,
                 override=False, guard=10.0):
        self.n_modes = n_modes
        self.domain_length = domain_length
        self.s = s
        self.dt = dt
        self.t_final = t_final
        self.J = J
        self.N = N
        self.picard_tol = picard_tol
        self.picard_max_iter = picard_max_iter
        self.c_hat = c_hat
        self.override = override
        self.guard = guard

    def fit(self, u0, y=None):
        cfg = self._config(J=self.J, N=self.N, picard_tol=self.picard_tol,
                           picard_max_iter=self.picard_max_iter, c_hat=self.c_hat,
                           override=self.override)
        v0 = gauge_forward(check_field(u0, cfg.grid))
        self.trajectory_ = solve_normal_form(v0, cfg)
        meta = self.trajectory_.metadata
        self.n_iter_ = meta["iterations"]
        self.residuals_ = meta["residuals"]
        self.compliance_ = meta["compliance"]
        return self
