"""Fourier inversion to real space.

The Green's function splits into three pieces that are handled differently:

* uncollided: a product of delta functions, returned structurally;
* once collided: a delta in azimuth, returned structurally for the angular
  flux and integrated in closed form (up to a smooth 2-D quadrature) for the
  energy density;
* two or more collisions: smooth, obtained by numerical quadrature of its
  Fourier transform.

k-quadrature uses Gauss-Legendre panels, geometrically graded towards k = 0
(the transform has poles close to the real axis there when c is near 1) and
no wider than a fixed fraction of the oscillation period 2 pi / r. The part
beyond ``k_max`` is integrated analytically after fitting the transform to an
inverse-power series at k_max, 2 k_max, 4 k_max.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import integrate, special as sp

from .exceptions import (
    ConventionError,
    CoplanarDegenerateError,
    DomainError,
    InputError,
    NumericalConsistencyError,
    PreconditionError,
    SingularOriginError,
    TailDivergenceError,
)
from .fourier_kernel import _neumann_block, frame_coordinates, kernel_matrices
from .special import (
    assoc_legendre_p_real,
    harmonic_norm,
    phase_function_eval,
    spherical_harmonic_table,
    wigner_d_table,
)
from .spectral import default_lmax, order_solution
from .types import Direction, PhaseFunction, as_direction

__all__ = [
    "QuadratureSpec",
    "SingularTerm",
    "FluxResult",
    "DensityResult",
    "uncollided_term",
    "once_collided_term",
    "once_collided_density",
    "once_collided_shell_average",
    "density_transform",
    "wronskian_density_transform",
    "energy_density",
    "isotropic_reference_density",
    "isotropic_flux_transform",
    "invert_full",
    "invert_bessel",
    "k_grid",
]

K_MIN = 1e-6
GRADED_LEVELS = 8  # first panels end at 2^-8, 2^-7, ...
PROFILE_ENV = "BG_QUAD_PROFILE"
REALITY_TOLERANCE = 1e-12
CROSS_CHECK_TOLERANCE = 1e-9


# --------------------------------------------------------------------------
# quadrature specification


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature controls.

    ``n_k`` is the Gauss-Legendre order of every k panel. ``n_mu`` and
    ``n_phi`` are lower bounds for the direction grid of the 3-D inversion;
    both are raised automatically so that e^{i k.r} and the degree-``lmax``
    harmonics are resolved at k_max. ``lmax`` of None means the spectral
    default. ``tail_model`` applies to the energy density.
    """

    k_max: float = 200.0
    n_k: int = 16
    n_mu: int = 64
    n_phi: int = 64
    lmax: int | None = None
    tail_model: str = "inverse-square"
    points_per_period: float = 16.0
    max_panel: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.k_max) and self.k_max > 0):
            raise InputError(f"k_max must be positive, got {self.k_max}")
        for name in ("n_k", "n_mu", "n_phi"):
            if int(getattr(self, name)) < 2:
                raise InputError(f"{name} must be at least 2, got {getattr(self, name)}")
        if self.lmax is not None and int(self.lmax) < 0:
            raise InputError(f"lmax must be non-negative, got {self.lmax}")
        if self.tail_model not in ("none", "inverse-square"):
            raise InputError(f"tail_model must be 'none' or 'inverse-square', got {self.tail_model!r}")
        if self.points_per_period < 8:
            raise InputError("points_per_period must be at least 8")
        if not self.max_panel > 0:
            raise InputError("max_panel must be positive")

    @classmethod
    def preset(cls, name: str, **overrides) -> "QuadratureSpec":
        try:
            base = PROFILES[name]
        except KeyError:
            raise InputError(f"unknown quadrature profile {name!r}; choose from {sorted(PROFILES)}") from None
        return replace(base, **overrides) if overrides else base

    @classmethod
    def from_env(cls, **overrides) -> "QuadratureSpec":
        """Preset named by ``BG_QUAD_PROFILE`` (default ``accurate``)."""
        return cls.preset(os.environ.get(PROFILE_ENV, "accurate").strip() or "accurate", **overrides)

    def as_dict(self) -> dict:
        return {
            "k_max": self.k_max, "n_k": self.n_k, "n_mu": self.n_mu, "n_phi": self.n_phi,
            "lmax": self.lmax, "tail_model": self.tail_model,
            "points_per_period": self.points_per_period, "max_panel": self.max_panel,
        }


PROFILES = {
    "accurate": QuadratureSpec(),
    "fast": QuadratureSpec(k_max=100.0, n_k=12, n_mu=32, n_phi=32, points_per_period=10.0),
}


def k_grid(quad: QuadratureSpec, r_max: float):
    """Panel nodes and weights on [K_MIN, k_max], each of shape (panels, n_k)."""
    h = quad.max_panel
    if r_max > 0:
        h = min(h, 2 * math.pi * quad.n_k / (quad.points_per_period * r_max))
    edges = [K_MIN]
    e = 2.0 ** -GRADED_LEVELS
    while e < min(h, quad.k_max):
        edges.append(e)
        e *= 2
    while edges[-1] + h < quad.k_max * (1 - 1e-12):
        edges.append(edges[-1] + h)
    edges.append(quad.k_max)
    edges = np.array(edges)
    x, w = npleg.leggauss(quad.n_k)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return mid[:, None] + half[:, None] * x, half[:, None] * w


def _panel_sum(values, weights):
    """Integral over all panels and a conservative error estimate from the two
    highest discrete Legendre coefficients of each panel."""
    n = weights.shape[1]
    x, w = npleg.leggauss(n)
    tail_basis = np.array([npleg.Legendre.basis(j)(x) * (2 * j + 1) / 2 for j in (n - 2, n - 1)])
    coeffs = (values * w) @ tail_basis.T  # (panels, 2)
    half = weights.sum(axis=1) / 2
    err = float(np.sum(half * np.abs(coeffs).sum(axis=1)))
    total = math.fsum(np.ravel(values * weights).real)
    if np.iscomplexobj(values):
        total = complex(total, math.fsum(np.ravel(values * weights).imag))
    return total, err


def _sine_tail(r, K, coeffs):
    """int_K^inf sin(r k) sum_n coeffs[n-1] k^-n dk, with coeffs scaled so that
    coeffs[n-1] multiplies (K/k)^n."""
    x = r * K
    si, ci = sp.sici(x)
    s_n, c_n = math.pi / 2 - si, -ci  # K^(n-1) times the raw integrals
    total = coeffs[0] * K * s_n
    sx, cx = math.sin(x), math.cos(x)
    for n in range(2, len(coeffs) + 1):
        s_n, c_n = (sx + x * c_n) / (n - 1), (cx - x * s_n) / (n - 1)
        total += coeffs[n - 1] * K * s_n
    return total


def _fit_inverse_powers(K, values, powers):
    """Coefficients a_p with values[i] = sum_p a_p (K / k_i)^p at k_i = K 2^i."""
    rows = np.array([[2.0 ** (-i * p) for p in powers] for i in range(len(values))])
    return np.linalg.solve(rows, np.asarray(values, dtype=float))


# --------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class SingularTerm:
    """Delta-supported contribution: ``weight`` multiplies the distribution in ``support``."""

    kind: str
    weight: float
    support: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("uncollided", "once_collided"):
            raise InputError(f"unknown singular term kind {self.kind!r}")
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise InputError(f"singular weight must be finite and non-negative, got {self.weight}")


@dataclass(frozen=True)
class FluxResult:
    """Angular flux at one point: the smooth (two or more collisions) value plus singular terms."""

    smooth: float
    singular: tuple
    quadrature_error: float
    k_nodes: np.ndarray = field(default=None, repr=False, compare=False)
    k_integrand: np.ndarray = field(default=None, repr=False, compare=False)


class DensityResult(NamedTuple):
    u_total: np.ndarray
    u_uncollided: np.ndarray
    u_scattered: np.ndarray
    error: np.ndarray


# --------------------------------------------------------------------------
# singular terms


def _radius(r) -> float:
    r = float(r)
    if not math.isfinite(r):
        raise DomainError(f"radius must be finite, got {r}")
    if r <= 0:
        raise SingularOriginError(f"radius must be positive, got {r}")
    return r


def _position(r_vec):
    v = np.asarray(r_vec, dtype=float)
    if v.shape != (3,):
        raise InputError(f"position must be a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError("position must be finite")
    n = float(np.linalg.norm(v))
    if n == 0:
        raise SingularOriginError("the Green's function is singular at the source point r = 0")
    return v, n


def uncollided_term(r, omega, omega0) -> SingularTerm:
    """e^{-r}/r^2 delta(omega - r_hat) delta(omega - omega0)."""
    r = _radius(r)
    omega, omega0 = as_direction(omega), as_direction(omega0)
    return SingularTerm(
        "uncollided", math.exp(-r) / (r * r),
        {"omega": (omega.theta, omega.phi), "constraint": "omega = r_hat = omega0",
         "active": omega.dot(omega0) >= 1 - 1e-15},
    )


def once_collided_term(r_vec, omega, omega0, phase: PhaseFunction) -> SingularTerm:
    """Weight of the azimuthal delta for the once-collided flux at ``r_vec``.

    tau and tau0 are the angles of ``omega`` and ``omega0`` from r_hat; the
    support is |phi - phi0| = pi about the r_hat axis.
    """
    v, r = _position(r_vec)
    omega, omega0 = as_direction(omega), as_direction(omega0)
    rhat = v / r
    tau = math.acos(float(np.clip(rhat @ omega.xyz, -1, 1)))
    tau0 = math.acos(float(np.clip(rhat @ omega0.xyz, -1, 1)))
    st, st0 = math.sin(tau), math.sin(tau0)
    support = {"tau": tau, "tau0": tau0, "azimuth_difference": math.pi}
    if st * st0 < 1e-14:
        raise CoplanarDegenerateError(
            f"once-collided weight undefined with sin(tau) sin(tau0) = {st * st0:.3e}"
        )
    if tau + tau0 > math.pi + 1e-14:
        return SingularTerm("once_collided", 0.0, support)
    s = math.sin(tau + tau0)
    if s < 1e-14:
        raise CoplanarDegenerateError("tau + tau0 = pi: the once-collided weight is unbounded there")
    p = phase_function_eval(phase, omega, omega0)
    w = phase.c * p * math.exp(-r * (st + st0) / s) / (r * st * st0)
    return SingularTerm("once_collided", max(w, 0.0), support)


def once_collided_density(r, phase: PhaseFunction):
    """Once-collided energy density of an isotropic point source and its quadrature error.

    Bipolar coordinates s = r1 + r2 >= r, t = r1 - r2 in [-r, r] turn the
    volume integral into (c/r) int e^{-s} int p_sum(x)/(s^2 - t^2) dt ds with x
    the scattering cosine. Splitting p_sum = sum(beta) + sum beta_l (P_l - 1),
    the constant part of the inner integral is a logarithm; the remainder
    uses t = s tanh(v).
    """
    r = _radius(r)
    beta = np.asarray(phase.beta)

    def iso(sig):
        s = r + sig
        return math.exp(-s) / s * math.log1p(2 * r / sig)

    bsum = float(beta.sum())
    tot, err = 0.0, 0.0
    for lo, hi in ((0.0, 1.0), (1.0, np.inf)):
        val, e = integrate.quad(iso, lo, hi, epsabs=0, epsrel=1e-13, limit=400)
        tot, err = tot + bsum * val, err + abs(bsum) * e

    if phase.L > 0:
        xg, wg = npleg.leggauss(24)

        def aniso(sig):
            s = r + sig
            q = sig / (2 * r + sig)  # e^{-2V}
            V = 0.5 * math.log1p(2 * r / sig)
            acc = 0.0
            for lo, hi in ((0.0, min(V, 2.0)), (min(V, 2.0), min(V, 30.0))):
                if hi <= lo:
                    continue
                w = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
                ratio = (np.exp(-w) + q * np.exp(w)) / (1 + q)
                x = np.clip(1 - 2 * ratio * ratio, -1.0, 1.0)
                acc += 0.5 * (hi - lo) * float(wg @ (npleg.legval(x, beta) - bsum))
            return math.exp(-s) * 2 / s * acc

        for lo, hi in ((0.0, 1.0), (1.0, np.inf)):
            val, e = integrate.quad(aniso, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=400)
            tot, err = tot + val, err + e
    return phase.c / r * tot, phase.c / r * err


def once_collided_shell_average(r_in: float, r_out: float, phase: PhaseFunction, isotropic: bool = False):
    """Shell average of the once-collided scalar flux for a unit beam along z
    (times 4 pi for the isotropic source, where it equals the energy density average)."""
    if not (0 <= r_in < r_out):
        raise InputError(f"need 0 <= r_in < r_out, got {r_in}, {r_out}")
    volume = 4 * math.pi / 3 * (r_out**3 - r_in**3)
    if isotropic:
        val, _ = integrate.quad(
            lambda r: 4 * math.pi * r * r * once_collided_density(r, phase)[0],
            max(r_in, 1e-12), r_out, epsrel=1e-10,
        )
        return val / volume
    beta = np.asarray(phase.beta)

    def inner(tau0, r):
        def f(tau):
            g = tau + tau0
            return npleg.legval(math.cos(g), beta) / (4 * math.pi) * math.exp(
                -r * (math.sin(tau) + math.sin(tau0)) / max(math.sin(g), 1e-300))
        return integrate.quad(f, 0, math.pi - tau0, epsrel=1e-10, limit=200)[0]

    val, _ = integrate.dblquad(lambda tau0, r: r * inner(tau0, r), max(r_in, 1e-12), r_out,
                               0.0, math.pi, epsrel=1e-8)
    return 2 * math.pi * phase.c * val / volume


# --------------------------------------------------------------------------
# energy density


def density_transform(k, phase: PhaseFunction, orders: str = "multiple", method: str = "spectral"):
    """Angle-integrated transform of the scattered energy density of an isotropic point source.

    ``orders``: ``"all"`` (one or more collisions), ``"once"`` or
    ``"multiple"`` (two or more). ``method``: ``"spectral"`` (transfer matrix
    of the inversion-free ladder) or ``"matrix"`` (dense solve).
    """
    if orders not in ("all", "once", "multiple"):
        raise InputError(f"orders must be 'all', 'once' or 'multiple', got {orders!r}")
    if method not in ("spectral", "matrix"):
        raise InputError(f"method must be 'spectral' or 'matrix', got {method!r}")
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    if np.any(~np.isfinite(ks)) or np.any(ks <= 0):
        raise DomainError("wave numbers must be finite and positive")
    L, c = phase.L, phase.c
    W = np.asarray(phase.beta)
    out = np.empty(ks.shape, dtype=complex)
    for idx, kk in np.ndenumerate(ks):
        z = complex(0.0, 1.0 / kk)
        Lm = _neumann_block(z, 0, L)
        if method == "spectral":
            sol = order_solution(z, 0, phase, L)
            row = {"all": sol.transfer, "once": sol.once, "multiple": sol.collided}[orders][0]
            out[idx] = 4 * math.pi * (row @ Lm[0])
        else:
            col = Lm[:, 0]
            if orders == "once":
                out[idx] = 4 * math.pi * c * ((Lm[0] * W) @ col)
                continue
            A = np.eye(L + 1) - c * Lm * W[None, :]
            rhs = col if orders == "all" else c * Lm @ (W * col)
            out[idx] = 4 * math.pi * c * ((Lm[0] * W) @ np.linalg.solve(A, rhs))
    return out if np.ndim(k) else out[0]


def wronskian_density_transform(k, phase: PhaseFunction):
    """Scattered energy-density transform from the closed Wronskian expression
    2 pi c tan^-1(k) 2iQ_0 / ((L+1) k^2 [g_{L+1} Q_L - g_L Q_{L+1}]).

    Exact for isotropic scattering only; kept for comparison.
    """
    from .special import assoc_legendre_q, chandrasekhar_g

    ks = np.atleast_1d(np.asarray(k, dtype=float))
    L = phase.L
    out = np.empty(ks.shape, dtype=complex)
    for idx, kk in np.ndenumerate(ks):
        z = complex(0.0, 1.0 / kk)
        g = chandrasekhar_g(L + 1, 0, z, phase)
        Q = assoc_legendre_q(L + 1, 0, z)
        wr = g[L + 1] * Q[L] - g[L] * Q[L + 1]
        out[idx] = 2 * math.pi * phase.c * 2j * Q[0] * math.atan(kk) / ((L + 1) * kk * kk * wr)
    return out if np.ndim(k) else out[0]


def _check_real(values, what):
    scale = np.max(np.abs(values)) if values.size else 0.0
    bad = np.abs(values.imag) > REALITY_TOLERANCE * np.abs(values.real) + 1e-15 * scale
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ConventionError(
            f"{what} has an imaginary residue {values.flat[i].imag:.3e} against real part "
            f"{values.flat[i].real:.3e}"
        )


def _radii(r):
    arr = np.atleast_1d(np.asarray(r, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise InputError("radii must be a non-empty 1-D list")
    for v in arr:
        _radius(v)
    return arr


def _tail_exponent(K, values):
    a, b = abs(values[0]), abs(values[-1])
    if a == 0:
        return math.inf
    if b == 0:
        return math.inf
    return math.log(a / b) / math.log(2.0 ** (len(values) - 1))


def energy_density(r, phase: PhaseFunction, quad: QuadratureSpec | None = None,
                   method: str = "spectral", cross_check: bool = True) -> DensityResult:
    """Energy density of a unit isotropic point source at radii ``r``.

    u = e^{-r}/r^2 + u_once(r) + (1/(2 pi^2 r)) int k sin(kr) U_2(k) dk, where
    U_2 is the two-or-more-collision transform. With ``cross_check`` the
    transform is evaluated by both the spectral and the matrix method and a
    disagreement raises :class:`NumericalConsistencyError`.
    """
    radii = _radii(r)
    quad = QuadratureSpec.from_env() if quad is None else quad
    nodes, weights = k_grid(quad, float(radii.max()))
    ubar = density_transform(nodes.ravel(), phase, "multiple", method).reshape(nodes.shape)
    _check_real(ubar, "energy-density integrand")
    if cross_check:
        other = "matrix" if method == "spectral" else "spectral"
        alt = density_transform(nodes.ravel(), phase, "multiple", other).reshape(nodes.shape)
        gap = np.max(np.abs(alt - ubar))
        # the spectral value is a difference of all-orders and once-collided parts
        once = density_transform(nodes.ravel(), phase, "once", "matrix")
        scale = max(np.max(np.abs(ubar)), np.max(np.abs(once)))
        if gap > CROSS_CHECK_TOLERANCE * scale:
            raise NumericalConsistencyError(f"density transform routes disagree by {gap:.3e}")
    h = nodes * ubar.real

    K = quad.k_max
    tail_k = K * 2.0 ** np.arange(3)
    tail_h = tail_k * density_transform(tail_k, phase, "multiple", method).real
    p = _tail_exponent(K, tail_h)
    if p < 1.2:
        raise TailDivergenceError(
            f"two-collision density transform decays like k^-{p:.2f} beyond k_max = {K}; "
            "the k integral does not converge absolutely"
        )
    full = _fit_inverse_powers(K, tail_h, (2, 3, 4))
    short = _fit_inverse_powers(K, tail_h[:2], (2, 3))

    u0 = np.exp(-radii) / radii**2
    us, err = np.empty_like(radii), np.empty_like(radii)
    for i, ri in enumerate(radii):
        pre = 1.0 / (2 * math.pi**2 * ri)
        val, e = _panel_sum(h * np.sin(nodes * ri), weights)
        tail_full = _sine_tail(ri, K, [0.0, *full])
        tail_short = _sine_tail(ri, K, [0.0, *short])
        if quad.tail_model == "inverse-square":
            tail, e_tail = tail_full, abs(tail_full - tail_short)
        else:
            tail, e_tail = 0.0, abs(tail_full)
        u1, e1 = once_collided_density(ri, phase)
        us[i] = u1 + pre * (val + tail)
        err[i] = e1 + pre * (e + e_tail)
    return DensityResult(u0 + us, u0, us, err)


def isotropic_reference_density(r, c: float, quad: QuadratureSpec | None = None, return_error: bool = False):
    """Energy density for isotropic scattering from the one-dimensional textbook integral

    u = e^{-r}/r^2 + (2c/pi) int sin(kr)/r [tan^-1 k]^2/(k - c tan^-1 k) dk,

    evaluated with the same panels and an analytic tail on (K/k)^n, n = 1..4.
    """
    radii = _radii(r)
    c = float(c)
    if not (0 < c < 1):
        raise InputError(f"albedo must satisfy 0 < c < 1, got {c}")
    quad = QuadratureSpec.from_env() if quad is None else quad

    def h(k):
        a = np.arctan(k)
        return 2 * c / math.pi * a * a / (k - c * a)

    nodes, weights = k_grid(quad, float(radii.max()))
    hv = h(nodes)
    K = quad.k_max
    tail_h = h(K * 2.0 ** np.arange(4))
    full = _fit_inverse_powers(K, tail_h, (1, 2, 3, 4))
    short = _fit_inverse_powers(K, tail_h[:3], (1, 2, 3))
    u = np.empty_like(radii)
    err = np.empty_like(radii)
    for i, ri in enumerate(radii):
        val, e = _panel_sum(hv * np.sin(nodes * ri), weights)
        tf, ts = _sine_tail(ri, K, full), _sine_tail(ri, K, short)
        u[i] = math.exp(-ri) / ri**2 + (val + tf) / ri
        err[i] = (e + abs(tf - ts)) / ri
    out = u if np.ndim(r) else u[0]
    if return_error:
        return out, (err if np.ndim(r) else err[0])
    return out


# --------------------------------------------------------------------------
# angular flux: 3-D and Bessel-reduced inversion


def isotropic_flux_transform(kvec, omega, omega0, c: float, collided_only: bool = True):
    """Closed-form transform of the scattered angular flux for isotropic scattering.

    ``kvec`` has shape (..., 3). With ``collided_only`` the once-collided part
    is removed, leaving two or more collisions.
    """
    kvec = np.asarray(kvec, dtype=float)
    k = np.linalg.norm(kvec, axis=-1)
    a = np.arctan(k) / k
    lam = c * a / (1 - c * a) if collided_only else 1 / (1 - c * a)
    om, om0 = as_direction(omega).xyz, as_direction(omega0).xyz
    return c / (4 * math.pi) / ((1 + 1j * kvec @ om) * (1 + 1j * kvec @ om0)) * lam


class _DirectionGrid:
    """Gauss-Legendre in cos(theta_k), periodic trapezoid in phi_k."""

    def __init__(self, n_mu, n_phi):
        x, w = npleg.leggauss(n_mu)
        self.theta = np.arccos(x)
        self.phi = 2 * math.pi * np.arange(n_phi) / n_phi
        self.weights = np.outer(w, np.full(n_phi, 2 * math.pi / n_phi))
        st = np.sin(self.theta)
        self.xyz = np.stack(
            [np.outer(st, np.cos(self.phi)), np.outer(st, np.sin(self.phi)),
             np.outer(np.cos(self.theta), np.ones(n_phi))], axis=-1)


class _MatrixFlux:
    """psibar of two or more collisions on the direction grid by dense solves."""

    def __init__(self, grid, omega, omega0, phase):
        self.phase = phase
        th, ph = grid.theta[:, None], grid.phi[None, :]
        self.mu, phi_o = frame_coordinates(th, ph, omega.xyz)
        self.mu0, phi_s = frame_coordinates(th, ph, omega0.xyz)
        self.P, self.P0 = {}, {}
        for m in range(-phase.L, phase.L + 1):
            self.P[m] = assoc_legendre_p_real(phase.L, m, self.mu) * np.exp(1j * m * (omega0.phi - phi_o))
            self.P0[m] = assoc_legendre_p_real(phase.L, m, self.mu0) * np.exp(1j * m * (omega0.phi - phi_s))

    def __call__(self, k):
        z = complex(0.0, 1.0 / k)
        ph = self.phase
        km = kernel_matrices(z, ph)
        total = np.zeros(self.mu.shape, dtype=complex)
        for m in range(-ph.L, ph.L + 1):
            A = km.system(m)
            W = km.W[m]
            p0 = self.P0[m].reshape(len(W), -1)
            x = np.linalg.solve(A, ph.c * km.L[m] @ (W[:, None] * p0))
            total += np.einsum("jn,jn->n", np.conj(self.P[m]).reshape(len(W), -1) * W[:, None], x).reshape(total.shape)
        return ph.c / (4 * math.pi) * z * z / ((z - self.mu) * (z - self.mu0)) * total


class _SpectralFlux:
    """psibar of two or more collisions on the direction grid from the ladder and
    the rotated-harmonic expansion sum_lm kappa_lm Y_lm(omega) e^{-i m phi_k}."""

    def __init__(self, grid, omega, omega0, phase, lmax):
        self.phase, self.lmax = phase, lmax
        L = phase.L
        th, ph = grid.theta[:, None], grid.phi[None, :]
        self.mu0, phi_s = frame_coordinates(th, ph, omega0.xyz)
        self.P0 = {m: assoc_legendre_p_real(L, m, self.mu0) * np.exp(1j * m * (omega0.phi - phi_s))
                   for m in range(-L, L + 1)}
        Y = spherical_harmonic_table(lmax, omega.theta, omega.phi)  # [l, m + lmax]
        n_mu, n_phi = len(grid.theta), len(grid.phi)
        self.E = {}
        for l in range(lmax + 1):
            self.E[l] = np.zeros((2 * min(l, L) + 1, n_mu, n_phi), dtype=complex)
        ms_all = np.arange(-lmax, lmax + 1)
        rot = np.exp(-1j * np.outer(ms_all, grid.phi))  # [m + lmax, j]
        for i, theta in enumerate(grid.theta):
            d = wigner_d_table(lmax, theta)
            for l in range(lmax + 1):
                top = min(l, L)
                A = Y[l, lmax - l: lmax + l + 1, None] * rot[lmax - l: lmax + l + 1]  # [m, j]
                D = d[l][:, l - top: l + top + 1]  # [m + l, m' + l]
                self.E[l][:, i, :] = D.T @ A
        self.coef_phase = {m: np.exp(-1j * m * omega0.phi) for m in range(-L, L + 1)}

    def __call__(self, k):
        z = complex(0.0, 1.0 / k)
        L = self.phase.L
        src = z / (z - self.mu0)
        total = np.zeros(self.mu0.shape, dtype=complex)
        for m in range(-L, L + 1):
            n = abs(m)
            sol = order_solution(z, m, self.phase, self.lmax)
            b = (self.P0[m] * src).reshape(L - n + 1, -1)
            psil = (sol.collided @ b).reshape((self.lmax - n + 1,) + total.shape)
            for l in range(n, self.lmax + 1):
                total += harmonic_norm(l, m) * self.coef_phase[m] * psil[l - n] * self.E[l][m + min(l, L)]
        return total


class _IsotropicFlux:
    def __init__(self, grid, omega, omega0, c):
        self.xyz, self.omega, self.omega0, self.c = grid.xyz, omega, omega0, c

    def __call__(self, k):
        return isotropic_flux_transform(k * self.xyz, self.omega, self.omega0, self.c)


def _grid_sizes(quad, rr, lmax):
    """Direction-grid sizes that resolve e^{i k.r} and degree-lmax harmonics at k_max."""
    kr = quad.k_max * rr
    n_mu = max(quad.n_mu, int(math.ceil((kr + lmax) / 2)) + 16)
    n_phi = max(quad.n_phi, int(math.ceil(kr)) + lmax + 32)
    return n_mu, n_phi + (n_phi % 2)


def _radial_integral(F, nodes, weights, rr, what):
    """Integrate the radial integrand and check the tail for decay."""
    val, err = _panel_sum(F, weights)
    env = np.max(np.abs(F), axis=1)
    last = env[-1]
    mid = env[min(len(env) - 1, np.searchsorted(nodes[:, 0], nodes[-1, -1] / 2))]
    peak = env.max()
    if last > 2 * mid and last > 1e-3 * peak:
        raise TailDivergenceError(
            f"{what}: radial integrand grows towards k_max (envelope {mid:.3e} at k_max/2, "
            f"{last:.3e} at k_max); increase k_max or check the configuration"
        )
    # truncation indicator: the last octave of k, a rough size for the missing tail
    top = nodes > nodes[-1, -1] / 2
    octave = abs(complex(np.sum((F * weights)[top])))
    return val, err + max(last / rr, octave)


def _singular_terms(v, rr, omega, omega0, phase):
    terms = [uncollided_term(rr, omega, omega0)]
    try:
        terms.append(once_collided_term(v, omega, omega0, phase))
    except CoplanarDegenerateError:
        pass  # distribution without a finite weight at this geometry
    return tuple(terms)


def _finish(total, err, what):
    if abs(total.imag) > 1e-8 * abs(total.real) + 1e-14:
        raise ConventionError(f"{what}: inverse transform has imaginary part {total.imag:.3e} "
                              f"against {total.real:.3e}")
    return float(total.real), err


def invert_full(r_vec, omega, omega0, phase: PhaseFunction, quad: QuadratureSpec | None = None,
                route: str = "spectral") -> FluxResult:
    """Angular flux psi(r, omega) of a unit beam source along ``omega0``.

    The smooth part (two or more collisions) is (2 pi)^-3 int d^3k e^{i k.r}
    psibar(k, omega) on a spherical (k, mu_k, phi_k) grid; ``route`` selects the
    transform: ``"spectral"``, ``"matrix"`` or ``"isotropic"`` (closed form,
    requires L = 0).
    """
    v, rr = _position(r_vec)
    omega, omega0 = as_direction(omega), as_direction(omega0)
    quad = QuadratureSpec.from_env() if quad is None else quad
    lmax = default_lmax(phase) if quad.lmax is None else int(quad.lmax)
    n_mu, n_phi = _grid_sizes(quad, rr, lmax)
    grid = _DirectionGrid(n_mu, n_phi)
    if route == "spectral":
        flux = _SpectralFlux(grid, omega, omega0, phase, lmax)
    elif route == "matrix":
        flux = _MatrixFlux(grid, omega, omega0, phase)
    elif route == "isotropic":
        if phase.L != 0:
            raise PreconditionError("the isotropic closed form needs L = 0")
        flux = _IsotropicFlux(grid, omega, omega0, phase.c)
    else:
        raise InputError(f"route must be 'spectral', 'matrix' or 'isotropic', got {route!r}")
    nodes, weights = k_grid(quad, rr)
    proj = grid.xyz @ v  # k_hat . r
    F = np.empty(nodes.shape, dtype=complex)
    for idx, k in np.ndenumerate(nodes):
        psi = flux(k)
        F[idx] = k * k * np.sum(grid.weights * np.exp(1j * k * proj) * psi)
    F /= (2 * math.pi) ** 3
    val, err = _radial_integral(F, nodes, weights, rr, "invert_full")
    smooth, err = _finish(val, err, "invert_full")
    return FluxResult(smooth, _singular_terms(v, rr, omega, omega0, phase), err, nodes, F)


def invert_bessel(r_vec, omega, omega0, phase: PhaseFunction, quad: QuadratureSpec | None = None) -> FluxResult:
    """Angular flux for a source along +z or -z using the analytic phi_k integral

    int e^{i x cos(phi_k - phi_r)} e^{-i m phi_k} dphi_k = 2 pi i^|m| J_|m|(x) e^{-i m phi_r},

    which leaves a 2-D (k, mu_k) quadrature.
    """
    v, rr = _position(r_vec)
    omega, omega0 = as_direction(omega), as_direction(omega0)
    if abs(omega0.mu) < 1 - 1e-14:
        raise PreconditionError(
            "the Bessel reduction needs coefficients independent of phi_k, i.e. omega0 = +z or -z"
        )
    quad = QuadratureSpec.from_env() if quad is None else quad
    lmax = default_lmax(phase) if quad.lmax is None else int(quad.lmax)
    L = phase.L
    rdir = Direction.from_vector(v)
    n_mu, _ = _grid_sizes(quad, rr, lmax)
    x, w = npleg.leggauss(n_mu)
    theta = np.arccos(x)
    mu0, phi_s = frame_coordinates(theta, 0.0, omega0.xyz)
    P0 = {m: assoc_legendre_p_real(L, m, mu0) * np.exp(1j * m * (omega0.phi - phi_s)) for m in range(-L, L + 1)}
    Y = spherical_harmonic_table(lmax, omega.theta, omega.phi)
    ms = np.arange(-lmax, lmax + 1)
    ang = Y * np.exp(-1j * ms * rdir.phi)[None, :] * (1j ** np.abs(ms))[None, :]  # [l, m + lmax]
    D = {l: np.empty((n_mu, 2 * l + 1, 2 * min(l, L) + 1)) for l in range(lmax + 1)}
    for i, th in enumerate(theta):
        d = wigner_d_table(lmax, th)
        for l in range(lmax + 1):
            top = min(l, L)
            D[l][i] = d[l][:, l - top: l + top + 1]
    sin_r = math.sin(rdir.theta)
    nodes, weights = k_grid(quad, rr)
    F = np.empty(nodes.shape, dtype=complex)
    for idx, k in np.ndenumerate(nodes):
        z = complex(0.0, 1.0 / k)
        src = z / (z - mu0)
        J = sp.jv(np.arange(lmax + 1)[:, None], k * rr * sin_r * np.sin(theta)[None, :])  # [|m|, i]
        psil = {}
        for m in range(-L, L + 1):
            sol = order_solution(z, m, phase, lmax)
            psil[m] = sol.collided @ (P0[m] * src)  # [l - |m|, i]
        acc = np.zeros(n_mu, dtype=complex)
        for l in range(lmax + 1):
            top = min(l, L)
            G = ang[l, lmax - l: lmax + l + 1, None] * J[np.abs(np.arange(-l, l + 1))]  # [m, i]
            B = np.einsum("mi,imn->ni", G, D[l])  # [m' + top, i]
            for mp in range(-top, top + 1):
                acc += harmonic_norm(l, mp) * np.exp(-1j * mp * omega0.phi) * psil[mp][l - abs(mp)] * B[mp + top]
        F[idx] = k * k * 2 * math.pi * np.sum(w * np.exp(1j * k * rr * math.cos(rdir.theta) * x) * acc)
    F /= (2 * math.pi) ** 3
    val, err = _radial_integral(F, nodes, weights, rr, "invert_bessel")
    smooth, err = _finish(val, err, "invert_bessel")
    return FluxResult(smooth, _singular_terms(v, rr, omega, omega0, phase), err, nodes, F)
