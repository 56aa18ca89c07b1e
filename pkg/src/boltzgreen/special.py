"""Special functions: associated Legendre (real and complex argument), Legendre
functions of the second kind, Chandrasekhar polynomials, Wigner d-matrices,
Bessel J and spherical harmonics.

Complex-argument routines are written once against a small arithmetic backend
so the same code runs in double precision (``cmath``) or in arbitrary precision
(``mpmath``). Only the physical axis ``z = i/k`` is exercised by the rest of
the package, but any ``z`` off the cut ``(-inf, 1]`` is accepted.
"""

from __future__ import annotations

import cmath
import math
from functools import lru_cache

import mpmath
import numpy as np
from scipy import special as _sp

from .exceptions import BranchCutError, DomainError, InputError, NumericalConsistencyError
from .types import Direction, PhaseFunction, _factorial_ratio

__all__ = [
    "assoc_legendre_p_real",
    "assoc_legendre_p_complex",
    "assoc_legendre_q",
    "chandrasekhar_g",
    "chandrasekhar_rho",
    "negative_m_convert",
    "wigner_d",
    "wigner_d_table",
    "bessel_j",
    "spherical_harmonic",
    "spherical_harmonic_table",
    "legendre_table",
    "phase_function_eval",
    "growth_ratio",
    "double_factorial",
]


# --------------------------------------------------------------------------
# arithmetic backends


class _DoubleOps:
    eps = 2.0**-52
    cplx = complex
    log = staticmethod(cmath.log)
    exp = staticmethod(cmath.exp)
    sqrt = staticmethod(cmath.sqrt)
    atanh = staticmethod(cmath.atanh)

    @staticmethod
    def real(x):
        return float(x)


class _MpOps:
    cplx = mpmath.mpc
    log = staticmethod(mpmath.log)
    exp = staticmethod(mpmath.exp)
    sqrt = staticmethod(mpmath.sqrt)
    atanh = staticmethod(mpmath.atanh)

    @property
    def eps(self):
        return mpmath.mpf(2) ** (-mpmath.mp.prec)

    @staticmethod
    def real(x):
        return mpmath.mpf(x)


DOUBLE = _DoubleOps()
MP = _MpOps()


def double_factorial(n: int) -> int:
    """(n)!! with the convention (-1)!! = 0!! = 1."""
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def _check_off_cut(z) -> complex:
    z = complex(z)
    if not (cmath.isfinite(z)):
        raise DomainError(f"argument must be finite, got {z}")
    if z.imag == 0.0 and z.real <= 1.0:
        raise BranchCutError(f"z = {z} lies on the branch cut (-inf, 1]")
    return z


def growth_ratio(z) -> float:
    """|z + sqrt(z^2 - 1)| >= 1: per-degree growth of dominant Legendre solutions."""
    z = complex(z)
    w = z + cmath.sqrt(z - 1.0) * cmath.sqrt(z + 1.0)
    a = abs(w)
    return a if a >= 1.0 else 1.0 / a


# --------------------------------------------------------------------------
# real argument


def assoc_legendre_p_real(l_max: int, m: int, mu):
    """P_l^m(mu) for l = |m| .. l_max, Condon-Shortley phase included.

    Returns an array of shape ``(l_max - |m| + 1,) + shape(mu)``. Negative
    ``m`` goes through :func:`negative_m_convert`.
    """
    l_max, m = int(l_max), int(m)
    if abs(m) > l_max:
        raise InputError(f"|m| = {abs(m)} exceeds l_max = {l_max}")
    x = np.asarray(mu, dtype=float)
    if np.any(np.abs(x) > 1.0) or not np.all(np.isfinite(x)):
        raise DomainError("Legendre argument must satisfy |mu| <= 1")
    n = abs(m)
    out = np.empty((l_max - n + 1,) + x.shape)
    s = np.sqrt((1.0 - x) * (1.0 + x))
    out[0] = (-1.0) ** n * double_factorial(2 * n - 1) * s**n
    if l_max > n:
        out[1] = (2 * n + 1) * x * out[0]
    for i in range(2, l_max - n + 1):
        l = n + i - 1
        out[i] = ((2 * l + 1) * x * out[i - 1] - (l + n) * out[i - 2]) / (l - n + 1)
    if m < 0:
        for i in range(out.shape[0]):
            out[i] = negative_m_convert("P_real", n + i, n, out[i])
    return out


def legendre_table(l_max: int, mu):
    """All P_l^m(mu) with 0 <= m <= l <= l_max as an array indexed ``[l, m, ...]``.

    Entries with m > l are zero.
    """
    x = np.asarray(mu, dtype=float)
    out = np.zeros((l_max + 1, l_max + 1) + x.shape)
    for m in range(l_max + 1):
        out[m:, m] = assoc_legendre_p_real(l_max, m, x)
    return out


def negative_m_convert(kind: str, l: int, m: int, value):
    """Map a value at order ``m > 0`` to order ``-m`` with (-1)^m (l-m)!/(l+m)!."""
    if kind not in ("g", "rho", "P_real", "P"):
        raise InputError(f"unknown kind {kind!r}")
    if m < 0 or l < m:
        raise InputError(f"need 0 <= m <= l, got l={l}, m={m}")
    return (-1) ** m * _factorial_ratio(l - m, l + m) * value


# --------------------------------------------------------------------------
# complex argument: scalar cores shared by double and mpmath


def _pmm_complex(z, m, ops):
    """(2m-1)!! (z-1)^{m/2} (z+1)^{m/2}, principal branch for each half power."""
    if m == 0:
        return ops.cplx(1)
    half = ops.real(m) / 2
    return double_factorial(2 * m - 1) * ops.exp(half * (ops.log(z - 1) + ops.log(z + 1)))


def _p_ratio(z, m, l_max, ops):
    """P_l^m(z) / P_m^m(z) for l = m .. l_max (m >= 0); polynomials in z."""
    out = [ops.cplx(1)]
    if l_max > m:
        out.append((2 * m + 1) * z)
    for l in range(m + 1, l_max):
        out.append(((2 * l + 1) * z * out[-1] - (l + m) * out[-2]) / (l - m + 1))
    return out


def _binom_half(m, ops):
    """B(1/2, m + 1) = 2^(2m+1) (m!)^2 / (2m+1)!"""
    return ops.real(2 ** (2 * m + 1) * math.factorial(m) ** 2) / math.factorial(2 * m + 1)


def _power_integral(z, m, ops):
    """I_m(z) = int_{-1}^{1} (1 - mu^2)^m / (z - mu) dmu."""
    i0 = 2 * ops.atanh(1 / z)
    if m == 0:
        return i0
    if abs(z) >= 1.05:
        # 1/(z - mu) = sum mu^n / z^(n+1); odd powers integrate to zero
        w = 1 / (z * z)
        term = _binom_half(m, ops) / z
        total = term
        tol = ops.eps / 4
        for n in range(100000):
            term = term * w * (2 * n + 1) / (2 * n + 2 * m + 3)
            total = total + term
            if abs(term) <= tol * abs(total):
                break
        return total
    one_minus = 1 - z * z
    val = i0
    for j in range(1, m + 1):
        val = one_minus * val + z * _binom_half(j - 1, ops)
    return val


def _second_kind_product(z, m, l_max, ops, digits=None):
    """F_l = Q_l^m(z) P_m^m(z) = (1/2) int P_m^m P_l^m / (z - mu) for l = m .. l_max.

    F is the minimal solution of the Legendre recurrence; it is generated by
    backward continued-fraction ratios unless upward amplification is benign.
    """
    f0 = ops.real(double_factorial(2 * m - 1) ** 2) / 2 * _power_integral(z, m, ops)
    if l_max == m:
        return [f0]
    rho = growth_ratio(complex(z))
    if digits is None:
        digits = 16.0
    amplification = 2 * (l_max - m) * math.log10(rho)
    # the first upward step also cancels once |z| sqrt(m) = O(1)
    if amplification < 1.0 and rho < 1.05:
        out = [f0, (2 * m + 1) * z * f0 - math.factorial(2 * m)]
        for l in range(m + 1, l_max):
            out.append(((2 * l + 1) * z * out[-1] - (l + m) * out[-2]) / (l - m + 1))
        return out
    extra = int(math.ceil((digits + 2) * math.log(10) / (2 * math.log(rho)))) + 10
    top = l_max + extra
    ratio = ops.cplx(0)
    ratios = {}
    for l in range(top, m, -1):
        ratio = (l + m) / ((2 * l + 1) * z - (l - m + 1) * ratio)
        if l <= l_max:
            ratios[l] = ratio
    out = [f0]
    for l in range(m + 1, l_max + 1):
        out.append(out[-1] * ratios[l])
    return out


def _chandrasekhar(z, m, l_max, phase, first_kind, ops):
    """g_l^m (first_kind) or rho_l^m for l = m .. l_max, m >= 0."""
    c = ops.real(phase.c)
    if first_kind:
        seq = [ops.cplx(double_factorial(2 * m - 1)), None]
        seq[1] = z * _h(m, phase, c) * seq[0]
    else:
        seq = [ops.cplx(0), z / double_factorial(2 * m - 1)]
    if l_max == m:
        return seq[:1]
    for l in range(m + 1, l_max):
        seq.append((z * _h(l, phase, c) * seq[-1] - (l + m) * seq[-2]) / (l + 1 - m))
    return seq


def _h(l, phase, c):
    b = phase.beta_l(l)
    return 2 * l + 1 - (c * b if l <= phase.L else 0)


# --------------------------------------------------------------------------
# complex argument: public double-precision API


def assoc_legendre_p_complex(l_max: int, m: int, z):
    """P_l^m(z), l = m .. l_max, for z off the cut; continued convention without (-1)^m."""
    if m < 0 or l_max < m:
        raise InputError(f"need 0 <= m <= l_max, got m={m}, l_max={l_max}")
    z = _check_off_cut(z)
    pmm = _pmm_complex(z, m, DOUBLE)
    return np.array([pmm * r for r in _p_ratio(z, m, l_max, DOUBLE)], dtype=complex)


def assoc_legendre_q(l_max: int, m: int, z):
    """Q_l^m(z), l = m .. l_max, normalised so that Q_l^m P_m^m = (1/2) int P_m^m P_l^m/(z - mu)."""
    if m < 0 or l_max < m:
        raise InputError(f"need 0 <= m <= l_max, got m={m}, l_max={l_max}")
    z = _check_off_cut(z)
    pmm = _pmm_complex(z, m, DOUBLE)
    return np.array(_second_kind_product(z, m, l_max, DOUBLE), dtype=complex) / pmm


def chandrasekhar_g(l_max: int, m: int, z, phase: PhaseFunction):
    if m < 0 or l_max < m:
        raise InputError(f"need 0 <= m <= l_max, got m={m}, l_max={l_max}")
    z = _check_off_cut(z)
    return np.array(_chandrasekhar(z, m, l_max, phase, True, DOUBLE), dtype=complex)


def chandrasekhar_rho(l_max: int, m: int, z, phase: PhaseFunction):
    if m < 0 or l_max < m:
        raise InputError(f"need 0 <= m <= l_max, got m={m}, l_max={l_max}")
    z = _check_off_cut(z)
    return np.array(_chandrasekhar(z, m, l_max, phase, False, DOUBLE), dtype=complex)


# --------------------------------------------------------------------------
# rotations


def wigner_d_table(l_max: int, theta):
    """Wigner d^l(theta) for l = 0 .. l_max.

    Entry ``[l][..., m' + l, m + l]`` is d^l_{m'm}(theta). Built by coupling
    spin 1/2 onto spin j - 1/2 with Clebsch-Gordan coefficients, one half step
    at a time, using only cos(theta/2) and sin(theta/2).
    """
    th = np.asarray(theta, dtype=float)
    p = np.cos(th / 2)[..., None, None]
    q = np.sin(th / 2)[..., None, None]
    cur = np.ones(th.shape + (1, 1))
    tables = [cur]
    for two_j in range(1, 2 * l_max + 1):
        a = np.arange(two_j + 1, dtype=float)
        up = np.sqrt(a / two_j)
        down = np.sqrt((two_j - a) / two_j)
        pad = np.zeros(th.shape + (two_j + 2, two_j + 2))
        pad[..., 1:-1, 1:-1] = cur
        d_mm = pad[..., :-1, :-1]
        d_m0 = pad[..., :-1, 1:]
        d_0m = pad[..., 1:, :-1]
        d_00 = pad[..., 1:, 1:]
        cur = (
            up[:, None] * up[None, :] * p * d_mm
            - up[:, None] * down[None, :] * q * d_m0
            + down[:, None] * up[None, :] * q * d_0m
            + down[:, None] * down[None, :] * p * d_00
        )
        if two_j % 2 == 0:
            tables.append(cur)
    return tables


def wigner_d(l: int, theta):
    """(2l+1) x (2l+1) matrix with entry [m'+l, m+l] = d^l_{m'm}(theta)."""
    if l < 0:
        raise InputError(f"degree must be non-negative, got {l}")
    return wigner_d_table(int(l), theta)[int(l)]


def bessel_j(m: int, x):
    """Bessel function of the first kind of integer order."""
    return _sp.jv(m, x)


# --------------------------------------------------------------------------
# harmonics and phase function


@lru_cache(maxsize=None)
def harmonic_norm(l: int, m: int) -> float:
    return math.sqrt((2 * l + 1) / (4 * math.pi) * _factorial_ratio(l - m, l + m))


def spherical_harmonic(l: int, m: int, omega: Direction) -> complex:
    """Y_lm = N_lm P_l^m(cos theta) e^{i m phi} with the Condon-Shortley phase in P."""
    if abs(m) > l:
        raise InputError(f"|m| must not exceed l, got l={l}, m={m}")
    p = assoc_legendre_p_real(l, m, omega.mu)[-1]
    return complex(harmonic_norm(l, m) * p * cmath.exp(1j * m * omega.phi))


def spherical_harmonic_table(l_max: int, theta, phi):
    """Y_lm(theta, phi) for all |m| <= l <= l_max, indexed ``[l, m + l_max, ...]``."""
    th = np.asarray(theta, dtype=float)
    ph = np.asarray(phi, dtype=float)
    shape = np.broadcast_shapes(th.shape, ph.shape)
    P = legendre_table(l_max, np.cos(th))
    out = np.zeros((l_max + 1, 2 * l_max + 1) + shape, dtype=complex)
    for m in range(0, l_max + 1):
        e = np.exp(1j * m * ph)
        for l in range(m, l_max + 1):
            y = harmonic_norm(l, m) * P[l, m] * e
            out[l, l_max + m] = y
            if m:
                out[l, l_max - m] = (-1) ** m * np.conj(y)
    return out


def phase_function_eval(phase: PhaseFunction, omega: Direction, omega0: Direction) -> float:
    """p(omega . omega0) from the addition-theorem form, cross-checked against the
    Legendre-product form; the two must agree to 1e-12."""
    L = phase.L
    total_y = 0.0j
    total_p = 0.0
    for l in range(L + 1):
        b = phase.beta[l]
        for m in range(-l, l + 1):
            total_y += b / (2 * l + 1) * spherical_harmonic(l, m, omega) * np.conj(
                spherical_harmonic(l, m, omega0)
            )
        Pm = legendre_table(l, np.array([omega.mu, omega0.mu]))
        for m in range(0, l + 1):
            term = phase.omega(l, m) * Pm[l, m, 0] * Pm[l, m, 1] * math.cos(m * (omega.phi - omega0.phi))
            total_p += term if m == 0 else 2 * term
    total_p /= 4 * math.pi
    if abs(total_y - total_p) > 1e-12 * max(1.0, abs(total_p)):
        raise NumericalConsistencyError(
            f"phase-function forms disagree: {total_y} vs {total_p}"
        )
    return float(total_p)
