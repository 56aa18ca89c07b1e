"""scikit-learn style wrappers.

Nothing is learned: ``fit`` validates the hyper-parameters and builds the
scattering law and quadrature, ``predict`` evaluates at the rows of ``X``.
The shape exists so the evaluators compose with ``clone``, ``get_params``
and pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .inversion import QuadratureSpec, energy_density, invert_bessel, invert_full
from .types import PhaseFunction, as_direction


def _quadrature(profile, overrides):
    if profile is None:
        return QuadratureSpec.from_env(**(overrides or {}))
    return QuadratureSpec.preset(profile, **(overrides or {}))


class EnergyDensity(BaseEstimator):
    """Energy density of an isotropic point source; ``X`` is a column of radii."""

    def __init__(self, c=0.5, beta=(1.0,), profile=None, quad_overrides=None, method="spectral"):
        self.c = c
        self.beta = beta
        self.profile = profile
        self.quad_overrides = quad_overrides
        self.method = method

    def fit(self, X=None, y=None):
        self.phase_ = PhaseFunction(self.c, tuple(self.beta))
        self.quad_ = _quadrature(self.profile, self.quad_overrides)
        return self

    def transform(self, X):
        """Columns u_uncollided, u_scattered, u_total, err."""
        check_is_fitted(self, "phase_")
        r = np.asarray(X, dtype=float).reshape(-1)
        res = energy_density(r, self.phase_, self.quad_, method=self.method)
        return np.column_stack([res.u_uncollided, res.u_scattered, res.u_total, res.error])

    def predict(self, X):
        return self.transform(X)[:, 2]


class AngularFlux(BaseEstimator):
    """Smooth (two or more collisions) angular flux of a beam source.

    Rows of ``X`` are ``(x, y, z, theta, phi)``: position then flux direction.
    """

    def __init__(self, c=0.5, beta=(1.0,), omega0=(0.0, 0.0), route="spectral", profile=None,
                 quad_overrides=None):
        self.c = c
        self.beta = beta
        self.omega0 = omega0
        self.route = route
        self.profile = profile
        self.quad_overrides = quad_overrides

    def fit(self, X=None, y=None):
        self.phase_ = PhaseFunction(self.c, tuple(self.beta))
        self.omega0_ = as_direction(self.omega0)
        self.quad_ = _quadrature(self.profile, self.quad_overrides)
        return self

    def predict(self, X):
        check_is_fitted(self, "phase_")
        rows = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(rows))
        for i, row in enumerate(rows):
            omega = (row[3], row[4])
            if self.route == "bessel":
                res = invert_bessel(row[:3], omega, self.omega0_, self.phase_, self.quad_)
            else:
                res = invert_full(row[:3], omega, self.omega0_, self.phase_, self.quad_, route=self.route)
            out[i] = res.smooth
        return out
