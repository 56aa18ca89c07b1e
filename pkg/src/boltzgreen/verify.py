"""Invariant suite behind the ``verify`` command.

Every check returns a :class:`CheckResult` holding the worst observed
deviation and the tolerance it was held to. Inputs are drawn from a fixed
generator so the report is reproducible bit for bit.

The polynomial identities are evaluated in mpmath: in double precision the
dominant solutions g and rho grow like |z + sqrt(z^2 - 1)|^l, and the
cancellation in their Casoratian alone exceeds the tolerances below.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special as sp

from .fourier_kernel import build_L_matrix, compute_M, psi_bar_matrix_route
from .inversion import (
    QuadratureSpec,
    density_transform,
    energy_density,
    isotropic_reference_density,
    k_grid,
)
from .special import MP, _chandrasekhar, _second_kind_product, wigner_d_table
from .spectral import ladder_residuals, order_solution, psi_bar_ladder
from .types import Direction, FourierPoint, PhaseFunction

SEED = 20240611
MP_DIGITS = 50


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    cases: int
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.0e} "
                f"cases={self.cases}")


def _result(name, errors, tol, t0):
    worst = float(max(errors)) if errors else 0.0
    ok = bool(errors) and all(math.isfinite(e) and e <= tol for e in errors)
    return CheckResult(name, ok, worst, tol, len(errors), time.perf_counter() - t0)


def _random_phase(rng, L, c=None):
    c = rng.uniform(0.05, 0.99) if c is None else c
    # keeps |beta_l| well inside 2l+1
    beta = [1.0] + [float(rng.uniform(-0.6, 0.6) * (2 * l + 1)) for l in range(1, L + 1)]
    return PhaseFunction(float(c), tuple(beta))


def _mp_sequences(z, m, l_max, phase):
    zz = mpmath.mpc(z.real, z.imag)
    g = _chandrasekhar(zz, m, l_max, phase, True, MP)
    rho = _chandrasekhar(zz, m, l_max, phase, False, MP)
    return zz, g, rho


def _telescoped_gap(q, r, a, b, z, mu, m, l0):
    """Both sides of the summed Christoffel-Darboux identity for sequences q
    (coefficients a_l, argument z) and r (coefficients b_l, argument mu),
    indexed from degree |m|. Returns |lhs - rhs| / max(|lhs|, |rhs|)."""
    n = abs(m)
    q_at = lambda l: q[l - n]
    r_at = lambda l: r[l - n]
    fr = lambda hi, lo: mpmath.factorial(hi) / mpmath.factorial(lo)
    lhs = fr(l0 + 1 - m, l0 + m) * (q_at(l0) * r_at(l0 + 1) - q_at(l0 + 1) * r_at(l0))
    rhs = fr(n + 1 - m, n + m) * (q_at(n) * r_at(n + 1) - q_at(n + 1) * r_at(n))
    for l in range(n + 1, l0 + 1):
        rhs += (mu * b(l) - z * a(l)) * fr(l - m, l + m) * q_at(l) * r_at(l)
    scale = max(abs(lhs), abs(rhs))
    return float(abs(lhs - rhs) / scale) if scale else 0.0


# --------------------------------------------------------------------------
# polynomial identities


def check_wronskian(rng=None):
    """(l+m)[g_{l-1} rho_l - g_l rho_{l-1}] = (l+m)!/(l-m)! z/(2m)!."""
    rng = np.random.default_rng(SEED) if rng is None else rng
    t0 = time.perf_counter()
    errors = []
    with mpmath.workdps(MP_DIGITS):
        for k in (0.5, 1.0, 5.0):
            phase = _random_phase(rng, int(rng.integers(0, 6)))
            for m in range(0, 7):
                zz, g, rho = _mp_sequences(complex(0, 1 / k), m, 20, phase)
                for l in range(m + 1, 21):
                    i = l - m
                    lhs = (l + m) * (g[i - 1] * rho[i] - g[i] * rho[i - 1])
                    rhs = mpmath.factorial(l + m) / mpmath.factorial(l - m) * zz / mpmath.factorial(2 * m)
                    errors.append(float(abs(lhs - rhs) / abs(rhs)))
    return _result("wronskian", errors, 1e-12, t0)


def check_christoffel_darboux(rng=None):
    """Summed Christoffel-Darboux identity under its two specializations:
    (g, rho) with equal coefficients, and (g / g_|m|, Q P_|m|) truncated at L."""
    rng = np.random.default_rng(SEED + 1) if rng is None else rng
    t0 = time.perf_counter()
    errors = []
    with mpmath.workdps(MP_DIGITS):
        for L in range(0, 10):
            phase = _random_phase(rng, L)
            c = mpmath.mpf(phase.c)
            h = lambda l: 2 * l + 1 - (c * phase.beta_l(l) if l <= L else 0)
            for k in (0.5, 2.0):
                z = complex(0, 1 / k)
                for m in range(0, L + 1):
                    zz, g, rho = _mp_sequences(z, m, L + 2, phase)
                    for l in range(m + 2, L + 3):
                        errors.append(_telescoped_gap(g, rho, h, h, zz, zz, m, l - 1))
                    qp = _second_kind_product(zz, m, L + 2, MP, digits=MP_DIGITS)
                    q = [x / g[0] for x in g]
                    errors.append(_telescoped_gap(q, qp, h, lambda l: 2 * l + 1, zz, zz, m, L))
    return _result("christoffel_darboux", errors, 1e-11, t0)


def check_lambda_forms(rng=None):
    """Dispersion function: sum form against Wronskian form, all m <= L <= 9."""
    rng = np.random.default_rng(SEED + 2) if rng is None else rng
    t0 = time.perf_counter()
    errors = []
    for L in range(0, 10):
        phase = _random_phase(rng, L)
        for k in (0.3, 1.0, 5.0):
            for m in range(0, L + 1):
                sol = order_solution(complex(0, 1 / k), m, phase, L + 1)
                errors.append(abs(sol.lambda_sum - sol.lambda_wronskian) / abs(sol.lambda_wronskian))
    return _result("lambda_dual_form", errors, 1e-10, t0)


def check_ladder_residuals(rng=None):
    """Three-term relation satisfied by the assembled ladder."""
    rng = np.random.default_rng(SEED + 3) if rng is None else rng
    t0 = time.perf_counter()
    errors = []
    for _ in range(12):
        L = int(rng.integers(0, 6))
        phase = _random_phase(rng, L)
        kp = FourierPoint(float(np.exp(rng.uniform(math.log(0.05), math.log(50)))),
                          Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)))
        om0 = Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        for m in range(-L, L + 1):
            res = ladder_residuals(m, kp, om0, phase, 2 * L + 12)
            errors.extend(res.tolist())
    return _result("ladder_residual", errors, 1e-10, t0)


# --------------------------------------------------------------------------
# rotations and Bessel functions


def check_wigner_orthonormality(rng=None):
    t0 = time.perf_counter()
    errors = []
    for theta in (0.1, 1.0, 2.5):
        for l, d in enumerate(wigner_d_table(12, theta)):
            errors.append(float(np.max(np.abs(d.T @ d - np.eye(2 * l + 1)))))
    return _result("wigner_orthonormality", errors, 1e-12, t0)


def check_hansen_bessel(rng=None):
    """J_m(x) against the trapezoid rule for (1/2 pi i^m) int e^{i x cos phi} e^{-i m phi} dphi."""
    t0 = time.perf_counter()
    n = 96
    phi = 2 * math.pi * np.arange(n) / n
    errors = []
    for m in range(0, 9):
        for x in np.linspace(0.0, 20.0, 41):
            integral = np.mean(np.exp(1j * x * np.cos(phi) - 1j * m * phi)) / 1j**m
            errors.append(abs(integral - sp.jv(m, x)))
    return _result("hansen_bessel", errors, 1e-10, t0)


# --------------------------------------------------------------------------
# routes


def check_route_equivalence(rng=None, trials=100):
    """Matrix solve against the ladder for every |m| <= L, relative per entry."""
    rng = np.random.default_rng(SEED + 4) if rng is None else rng
    t0 = time.perf_counter()
    errors = []
    for _ in range(trials):
        L = int(rng.integers(0, 6))
        phase = _random_phase(rng, L)
        kp = FourierPoint(float(np.exp(rng.uniform(math.log(0.05), math.log(50)))),
                          Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)))
        om0 = Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        for m in range(-L, L + 1):
            a = psi_bar_matrix_route(m, kp, om0, phase)
            b = psi_bar_ladder(L, m, kp, om0, phase)
            scale = np.maximum(np.abs(a), 1e-300)
            errors.append(float(np.max(np.abs(a - b) / scale)))
    return _result("route_equivalence", errors, 1e-9, t0)


def check_kernel_symmetry(rng=None):
    rng = np.random.default_rng(SEED + 5) if rng is None else rng
    t0 = time.perf_counter()
    errors = []
    for _ in range(10):
        L = int(rng.integers(1, 7))
        phase = _random_phase(rng, L)
        z = complex(0, 1 / float(np.exp(rng.uniform(-2, 3))))
        for m in range(-L, L + 1):
            A = build_L_matrix(m, z, phase)
            errors.append(float(np.max(np.abs(A - A.T)) / np.max(np.abs(A))))
    return _result("kernel_symmetry", errors, 1e-12, t0)


def check_isotropic_kernel(rng=None):
    """M at L = 0 against 1/(1 - (c/k) atan k)."""
    t0 = time.perf_counter()
    errors = []
    for c in (0.3, 0.9):
        for k in (0.1, 1.0, 10.0):
            kp = FourierPoint(k, Direction(0.7, 0.2))
            M = compute_M(kp, Direction(1.1, 2.0), Direction(0.4, 5.0), PhaseFunction(c))
            ref = 1 / (1 - c / k * math.atan(k))
            errors.append(abs(M - ref) / ref)
    return _result("isotropic_kernel", errors, 1e-12, t0)


# --------------------------------------------------------------------------
# real space


def check_density_reality(rng=None, quad=None):
    """Energy-density integrand is real on the k-grid, relative to its magnitude."""
    rng = np.random.default_rng(SEED + 6) if rng is None else rng
    quad = QuadratureSpec.from_env() if quad is None else quad
    t0 = time.perf_counter()
    errors = []
    nodes, _ = k_grid(quad, 5.0)
    k = nodes.ravel()
    for L in (0, 1, 3):
        phase = _random_phase(rng, L)
        for method in ("spectral", "matrix"):
            vals = density_transform(k, phase, "multiple", method)
            errors.append(float(np.max(np.abs(vals.imag) / np.maximum(np.abs(vals.real), 1e-300))))
    return _result("density_reality", errors, 1e-12, t0)


def check_isotropic_limit(rng=None, quad=None):
    """General pipeline at L = 0 against the one-dimensional textbook integral."""
    t0 = time.perf_counter()
    r = np.array([0.5, 1.0, 2.0, 5.0])
    errors = []
    for c in (0.3, 0.9):
        u = energy_density(r, PhaseFunction(c), quad).u_total
        ref = isotropic_reference_density(r, c, quad)
        errors.extend((np.abs(u - ref) / ref).tolist())
    return _result("isotropic_limit", errors, 1e-8, t0)


IDENTITY_CHECKS = (
    check_wronskian,
    check_christoffel_darboux,
    check_lambda_forms,
    check_ladder_residuals,
    check_wigner_orthonormality,
    check_hansen_bessel,
)

ALL_CHECKS = IDENTITY_CHECKS + (
    check_kernel_symmetry,
    check_isotropic_kernel,
    check_route_equivalence,
    check_density_reality,
    check_isotropic_limit,
)


def run_suite(checks=ALL_CHECKS):
    return [check() for check in checks]
