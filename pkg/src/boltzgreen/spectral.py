"""Inversion-free route: moments of the transformed flux from Chandrasekhar
polynomials, the dispersion function and closed-form particular solutions.

Per spectral argument ``z`` and azimuthal order ``m`` the whole ladder is a
linear function of the rotated-frame source vector

    b_j = z/(z - mu0') P_j^m(mu0') e^{i m (phi0 - phi0')},  |m| <= j <= L.

:func:`order_solution` builds that linear map once (the transfer matrix) from
the seed and ladder formulas and caches it; every public operation here is a
thin contraction against it. Rows above ``L`` follow the decaying solution of
the source-free recurrence, ``psibar_l = psibar_L Q_l / Q_L``.

Near ``k -> 0`` the ladder bracket ``rho_j g_l - g_j rho_l`` cancels by roughly
``rho(z)^(2(L-|m|))`` digits; when that estimate exceeds ``EXTENDED_THRESHOLD``
the transfer matrix is computed in mpmath and rounded back.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .exceptions import InputError, LadderRangeError, NumericalConsistencyError
from .fourier_kernel import frame_coordinates
from .special import (
    DOUBLE,
    MP,
    _chandrasekhar,
    _check_off_cut,
    _p_ratio,
    _second_kind_product,
    assoc_legendre_p_real,
    growth_ratio,
    harmonic_norm,
    wigner_d,
    wigner_d_table,
)
from .types import Direction, FourierPoint, PhaseFunction, _factorial_ratio

EXTENDED_THRESHOLD = 1e4
LAMBDA_TOLERANCE = 1e-10

__all__ = [
    "ModeTable",
    "OrderSolution",
    "order_solution",
    "default_lmax",
    "source_vector",
    "source_moment",
    "chi",
    "dispersion_lambda",
    "psi_bar_seed",
    "psi_bar_ladder",
    "kappa_lm",
    "mode_table",
    "ladder_residuals",
]


def default_lmax(phase: PhaseFunction) -> int:
    return max(2 * phase.L + 8, 24)


@dataclass(frozen=True)
class OrderSolution:
    """Everything the ladder needs at one (z, m), rounded to double.

    Index 0 of each array corresponds to degree ``|m|``.
    """

    z: complex
    m: int
    lmax: int
    g: np.ndarray  # degrees |m| .. L+1
    rho: np.ndarray  # degrees |m| .. L+1
    qp: np.ndarray  # Q_l^m P_|m|^m, degrees |m| .. max(lmax, L+1)
    lambda_sum: complex
    lambda_wronskian: complex
    chi_map: np.ndarray  # (L-|m|+1, L-|m|+1): chi_l = chi_map[l, j] S_j
    transfer: np.ndarray  # (lmax-|m|+1, L-|m|+1): psibar_l = transfer[l, j] b_j
    once: np.ndarray  # same shape: once-collided part of transfer
    extended: bool

    @property
    def collided(self) -> np.ndarray:
        """Transfer matrix restricted to two or more collisions."""
        return self.transfer - self.once


def _signed(m, n, l, ops, kind):
    """Conversion factor from order n = |m| to m for the sequence ``kind``."""
    if m >= 0:
        return 1
    if kind == "chandrasekhar":
        return (-1) ** n * ops.real(math.factorial(l - n)) / math.factorial(l + n)
    if kind == "qp":
        return ops.real(math.factorial(l - n)) / (math.factorial(2 * n) * math.factorial(l + n))
    if kind == "pratio":
        return ops.real(math.factorial(2 * n) * math.factorial(l - n)) / math.factorial(l + n)
    raise ValueError(kind)


def _solve_order(z, m, phase, lmax, ops):
    n, L = abs(m), phase.L
    c = ops.real(phase.c)
    top = max(lmax, L + 1)
    g = _chandrasekhar(z, n, L + 1, phase, True, ops)
    rho = _chandrasekhar(z, n, L + 1, phase, False, ops)
    qp = _second_kind_product(z, n, top, ops, digits=_digits(ops))
    pr = _p_ratio(z, n, L, ops)
    g = [v * _signed(m, n, n + i, ops, "chandrasekhar") for i, v in enumerate(g)]
    rho = [v * _signed(m, n, n + i, ops, "chandrasekhar") for i, v in enumerate(rho)]
    qp = [v * _signed(m, n, n + i, ops, "qp") for i, v in enumerate(qp)]
    pr = [v * _signed(m, n, n + i, ops, "pratio") for i, v in enumerate(pr)]
    omega = [ops.real(phase.beta[l]) * _fr(l - m, l + m, ops) for l in range(n, L + 1)]
    beta = [ops.real(phase.beta[l]) for l in range(n, L + 1)]
    size = L - n + 1

    lam_sum = 1 - c * z * sum(omega[i] * qp[i] * g[i] for i in range(size)) / g[0]
    lam_w = _fr(L + 1 - m, L + m, ops) * (g[size] * qp[size - 1] - g[size - 1] * qp[size]) / g[0]

    # chi_l = g_n { sum_{i=n+1}^{l} K_i [rho_i g_l - g_i rho_l] S_i - z rho_l / rho_{n+1} S_n }
    chi_map = [[ops.cplx(0)] * size for _ in range(size)]
    for a in range(1, size):
        l = n + a
        for i in range(1, a + 1):
            K = _fr(n + i - m, n + i + m, ops) * math.factorial(2 * n)
            chi_map[a][i] = g[0] * K * (rho[i] * g[a] - g[i] * rho[a])
        chi_map[a][0] = -g[0] * z * rho[a] / (rho[1] * (n + 1 - m))

    # seed: psibar_n = (c z / Lambda) sum_l omega_l QP_l [b_l + chi_l / g_n]
    seed = []
    for j in range(size):
        acc = omega[j] * qp[j]
        acc = acc + sum(omega[a] * qp[a] * chi_map[a][j] for a in range(size)) * c * beta[j] / g[0]
        seed.append(c * z / lam_w * acc)

    rows = []
    for a in range(size):
        rows.append([(g[a] * seed[j] + chi_map[a][j] * c * beta[j]) / g[0] for j in range(size)])
    last = rows[-1]
    for l in range(L + 1, lmax + 1):
        ratio = qp[l - n] / qp[L - n]
        rows.append([v * ratio for v in last])

    once = []
    for l in range(n, lmax + 1):
        row = []
        for j in range(n, L + 1):
            lo, hi = min(l, j), max(l, j)
            row.append(c * omega[j - n] * z * pr[lo - n] * qp[hi - n] if lo <= L else 0)
        once.append(row)
    return g, rho, qp, lam_sum, lam_w, chi_map, rows[: lmax - n + 1], once


def _fr(a, b, ops):
    return ops.real(math.factorial(a)) / math.factorial(b)


def _digits(ops):
    return 16.0 if ops is DOUBLE else float(mpmath.mp.dps)


def _to_array(seq, shape=None):
    arr = np.array([[complex(v) for v in row] for row in seq]) if shape == 2 else np.array([complex(v) for v in seq])
    return arr


@lru_cache(maxsize=4096)
def order_solution(z: complex, m: int, phase: PhaseFunction, lmax: int, precision: str = "auto") -> OrderSolution:
    """Transfer matrix and auxiliary tables at one (z, m).

    ``precision`` is ``"auto"`` (mpmath only when needed), ``"double"`` or
    ``"extended"``.
    """
    if precision not in ("auto", "double", "extended"):
        raise InputError(f"unknown precision {precision!r}")
    z = _check_off_cut(z)
    n, L = abs(m), phase.L
    if lmax < n:
        raise InputError(f"lmax = {lmax} is below |m| = {n}")
    if n > L:
        rows = lmax - n + 1
        zero = np.zeros((rows, 0), dtype=complex)
        return OrderSolution(z, m, lmax, np.zeros(0), np.zeros(0), np.zeros(0), 1.0 + 0j, 1.0 + 0j,
                             np.zeros((0, 0), dtype=complex), zero, zero, False)
    log_cond = 2 * (L - n) * math.log10(growth_ratio(z))
    extended = precision == "extended" or (precision == "auto" and log_cond > math.log10(EXTENDED_THRESHOLD))
    if extended:
        with mpmath.workdps(int(26 + log_cond)):
            parts = _solve_order(mpmath.mpc(z.real, z.imag), m, phase, lmax, MP)
            g, rho, qp, ls, lw, chi_map, rows, once = parts
            out = (_to_array(g), _to_array(rho), _to_array(qp), complex(ls), complex(lw),
                   _to_array(chi_map, 2), _to_array(rows, 2), _to_array(once, 2))
    else:
        g, rho, qp, ls, lw, chi_map, rows, once = _solve_order(z, m, phase, lmax, DOUBLE)
        out = (_to_array(g), _to_array(rho), _to_array(qp), complex(ls), complex(lw),
               _to_array(chi_map, 2), _to_array(rows, 2), _to_array(once, 2))
        for name, arr in (("g", out[0]), ("transfer", out[6])):
            bad = ~np.isfinite(arr)
            if np.any(bad):
                first = int(np.argwhere(bad)[0][0]) + n
                raise LadderRangeError(f"{name} left the double range at degree {first} (z = {z})", degree=first)
    g, rho, qp, ls, lw, chi_map, transfer, once = out
    return OrderSolution(z, m, lmax, g, rho, qp, ls, lw, chi_map, transfer, once, extended)


# --------------------------------------------------------------------------
# sources


def source_vector(m: int, kpoint: FourierPoint, omega0: Direction, l_hi: int):
    """b_j = z/(z - mu0') P_j^m(mu0') e^{i m (phi0 - phi0')}, j = |m| .. l_hi."""
    z = kpoint.z
    mu, phi = frame_coordinates(kpoint.khat.theta, kpoint.khat.phi, omega0.xyz)
    mu, phi = float(mu), float(phi)
    if abs(m) > l_hi:
        return np.zeros(0, dtype=complex)
    P = assoc_legendre_p_real(l_hi, m, mu)
    return z / (z - mu) * P * cmath.exp(1j * m * (omega0.phi - phi))


def source_moment(l: int, m: int, kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction) -> complex:
    """S_l^m from the Wigner expansion of the rotated Legendre function.

    P_l^m(mu0') e^{-i m phi0'} = sum_m' (N_lm'/N_lm) e^{i m' phi_k} d^l_{m'm}(theta_k) P_l^m'(mu0) e^{-i m' phi0}.
    """
    if abs(m) > l:
        raise InputError(f"|m| must not exceed l, got l={l}, m={m}")
    if l > phase.L:
        return 0j
    z = kpoint.z
    kt, kp = kpoint.khat.theta, kpoint.khat.phi
    mu0p = float(frame_coordinates(kt, kp, omega0.xyz)[0])
    d = wigner_d(l, kt)
    total = 0j
    for mp in range(-l, l + 1):
        ratio = math.sqrt(_factorial_ratio(l - mp, l + mp) / _factorial_ratio(l - m, l + m))
        p = assoc_legendre_p_real(l, mp, omega0.mu)[-1]
        total += ratio * cmath.exp(1j * mp * kp) * d[mp + l, m + l] * p * cmath.exp(1j * (m - mp) * omega0.phi)
    return complex(phase.c * phase.beta[l] * z / (z - mu0p) * total)


def _sources(m, kpoint, omega0, phase):
    return np.array([source_moment(l, m, kpoint, omega0, phase) for l in range(abs(m), phase.L + 1)])


# --------------------------------------------------------------------------
# public scalar operations


@lru_cache(maxsize=4096)
def _chi_coefficients(z: complex, m: int, phase: PhaseFunction, l: int) -> np.ndarray:
    """Row c_j with chi_l^m = sum_j c_j S_j^m, from the closed form at any l >= |m|."""
    n, L = abs(m), phase.L
    log_cond = 2 * (l - n) * math.log10(growth_ratio(z))

    def build(zz, ops):
        g = _chandrasekhar(zz, n, max(l, n + 1), phase, True, ops)
        rho = _chandrasekhar(zz, n, max(l, n + 1), phase, False, ops)
        g = [v * _signed(m, n, n + i, ops, "chandrasekhar") for i, v in enumerate(g)]
        rho = [v * _signed(m, n, n + i, ops, "chandrasekhar") for i, v in enumerate(rho)]
        row = [ops.cplx(0)] * (L - n + 1)
        if l == n:
            return row
        a = l - n
        for i in range(1, min(a, L - n) + 1):
            K = _fr(n + i - m, n + i + m, ops) * math.factorial(2 * n)
            row[i] = g[0] * K * (rho[i] * g[a] - g[i] * rho[a])
        row[0] = -g[0] * zz * rho[a] / (rho[1] * (n + 1 - m))
        return row

    if log_cond > math.log10(EXTENDED_THRESHOLD):
        with mpmath.workdps(int(26 + log_cond)):
            return _to_array(build(mpmath.mpc(z.real, z.imag), MP))
    return _to_array(build(z, DOUBLE))


def chi(l: int, m: int, kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction) -> complex:
    """Particular-solution combination chi_l^m (zero for l = |m| and for |m| > L)."""
    n = abs(m)
    if l < n:
        raise InputError(f"need l >= |m|, got l={l}, m={m}")
    if n > phase.L:
        return 0j
    return complex(_chi_coefficients(kpoint.z, m, phase, l) @ _sources(m, kpoint, omega0, phase))


def dispersion_lambda(m: int, z, phase: PhaseFunction, precision: str = "auto") -> complex:
    """Lambda^m(z) in Wronskian form, cross-checked against the sum form."""
    if m < 0:
        raise InputError("dispersion_lambda takes m >= 0; Lambda^{-m} = Lambda^m")
    if m > phase.L:
        return 1.0 + 0j
    sol = order_solution(complex(z), m, phase, phase.L + 1, precision)
    if abs(sol.lambda_sum - sol.lambda_wronskian) > LAMBDA_TOLERANCE * abs(sol.lambda_wronskian):
        raise NumericalConsistencyError(
            f"Lambda^{m} forms disagree: sum {sol.lambda_sum} vs Wronskian {sol.lambda_wronskian}"
        )
    return sol.lambda_wronskian


def psi_bar_seed(m: int, kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction) -> complex:
    n = abs(m)
    if n > phase.L:
        return 0j
    sol = order_solution(kpoint.z, m, phase, phase.L)
    return complex(sol.transfer[0] @ source_vector(m, kpoint, omega0, phase.L))


def psi_bar_ladder(lmax: int, m: int, kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction,
                   precision: str = "auto"):
    """psibar_l^m for l = |m| .. lmax."""
    n = abs(m)
    if lmax < n:
        raise InputError(f"lmax = {lmax} is below |m| = {n}")
    if n > phase.L:
        return np.zeros(lmax - n + 1, dtype=complex)
    sol = order_solution(kpoint.z, m, phase, lmax, precision)
    return sol.transfer @ source_vector(m, kpoint, omega0, phase.L)


def kappa_lm(l: int, m: int, kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction) -> complex:
    """kappa_lm = sum_m' N_lm' e^{-i m' phi0} d^l_{m m'}(theta_k) psibar_l^{m'}, |m'| <= min(l, L)."""
    if abs(m) > l:
        raise InputError(f"|m| must not exceed l, got l={l}, m={m}")
    d = wigner_d(l, kpoint.khat.theta)
    top = min(l, phase.L)
    total = 0j
    for mp in range(-top, top + 1):
        psi = psi_bar_ladder(l, mp, kpoint, omega0, phase)[l - abs(mp)]
        total += harmonic_norm(l, mp) * cmath.exp(-1j * mp * omega0.phi) * d[m + l, mp + l] * psi
    return complex(total)


# --------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class ModeTable:
    """Complex arrays indexed ``[l, m + lmax]``; entries outside |m| <= l are zero."""

    kpoint: FourierPoint
    omega0: Direction
    phase: PhaseFunction
    lmax: int
    S: np.ndarray
    chi: np.ndarray
    psibar: np.ndarray
    kappa: np.ndarray
    Lambda: np.ndarray  # indexed [m + lmax]

    def get(self, name, l, m):
        return getattr(self, name)[l, m + self.lmax]

    def rows(self):
        """(l, m, psibar, kappa) for every |m| <= l <= lmax."""
        for l in range(self.lmax + 1):
            for m in range(-l, l + 1):
                yield l, m, self.get("psibar", l, m), self.get("kappa", l, m)


def mode_table(kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction, lmax: int | None = None) -> ModeTable:
    lmax = default_lmax(phase) if lmax is None else int(lmax)
    if lmax < phase.L:
        raise InputError(f"lmax = {lmax} must be at least L = {phase.L}")
    L = phase.L
    width = 2 * lmax + 1
    S = np.zeros((lmax + 1, width), dtype=complex)
    X = np.zeros_like(S)
    psi = np.zeros_like(S)
    lam = np.ones(width, dtype=complex)
    for m in range(-L, L + 1):
        n = abs(m)
        sol = order_solution(kpoint.z, m, phase, lmax)
        b = source_vector(m, kpoint, omega0, L)
        psi[n:, m + lmax] = sol.transfer @ b
        src = _sources(m, kpoint, omega0, phase)
        S[n : L + 1, m + lmax] = src
        for l in range(n, lmax + 1):
            X[l, m + lmax] = _chi_coefficients(kpoint.z, m, phase, l) @ src
        lam[m + lmax] = sol.lambda_wronskian
    kappa = np.zeros_like(S)
    ds = wigner_d_table(lmax, kpoint.khat.theta)
    for l in range(lmax + 1):
        top = min(l, L)
        mps = np.arange(-top, top + 1)
        coef = np.array([harmonic_norm(l, mp) for mp in mps]) * np.exp(-1j * mps * omega0.phi) * psi[l, mps + lmax]
        kappa[l, lmax - l : lmax + l + 1] = ds[l][:, mps + l] @ coef
    return ModeTable(kpoint, omega0, phase, lmax, S, X, psi, kappa, lam)


def ladder_residuals(m: int, kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction, lmax: int):
    """Relative residuals of z h_l psibar_l - (l+1-m) psibar_{l+1} - (l+m) psibar_{l-1} - z S_l
    for |m| < l < lmax, each scaled by the largest term."""
    n = abs(m)
    psi = psi_bar_ladder(lmax, m, kpoint, omega0, phase)
    z = kpoint.z
    S = np.zeros(lmax + 2, dtype=complex)
    for l in range(n, phase.L + 1):
        S[l] = source_moment(l, m, kpoint, omega0, phase)
    out = []
    for l in range(n + 1, lmax):
        a = z * phase.h(l) * psi[l - n]
        b = (l + 1 - m) * psi[l + 1 - n]
        cc = (l + m) * psi[l - 1 - n]
        d = z * S[l]
        scale = max(abs(a), abs(b), abs(cc), abs(d))
        out.append(abs(a - b - cc - d) / scale if scale > 0 else 0.0)
    return np.array(out)
