"""Matrix route in Fourier space.

For each azimuthal order m the angular moments of the transformed flux solve a
small dense system ``(I - c L^m W^m) x = rhs`` where ``L^m`` holds the
Cauchy-type integrals of Legendre products and ``W^m`` the scattering weights.
Everything here works in the rotated frame whose polar axis is ``k_hat``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .exceptions import DispersionSingularityError, InputError, NumericalConsistencyError
from .special import (
    DOUBLE,
    _check_off_cut,
    _p_ratio,
    _second_kind_product,
    assoc_legendre_p_real,
)
from .types import Direction, FourierPoint, PhaseFunction, _factorial_ratio

CONDITION_LIMIT = 1e12

__all__ = [
    "KernelMatrices",
    "build_L_matrix",
    "build_P_vector",
    "compute_M",
    "psi_bar_matrix_route",
    "kernel_matrices",
    "frame_coordinates",
    "transformed_flux",
]


def frame_coordinates(theta_k, phi_k, v):
    """Polar cosine and azimuth of ``v`` in the frame R = Rz(phi_k) Ry(theta_k).

    ``theta_k``, ``phi_k`` and the leading axes of ``v`` (last axis = xyz)
    broadcast against each other.
    """
    v = np.asarray(v, dtype=float)
    ct, st = np.cos(theta_k), np.sin(theta_k)
    cp, sp = np.cos(phi_k), np.sin(phi_k)
    x, y, zc = v[..., 0], v[..., 1], v[..., 2]
    # R^T v = Ry(-theta) Rz(-phi) v
    x1 = cp * x + sp * y
    y1 = -sp * x + cp * y
    x2 = ct * x1 - st * zc
    z2 = st * x1 + ct * zc
    mu = np.clip(z2, -1.0, 1.0)
    phi = np.arctan2(y1, x2)
    return mu, phi


def _neumann_block(z, m, l_hi, ops=DOUBLE):
    """L^m_{jl}(z) for |m| <= j, l <= l_hi from z P_min(z) Q_max(z).

    Only the ratios P_j/P_|m| and the products Q_l P_|m| enter, so the branch
    of the continued P_|m|^|m| cancels.
    """
    n = abs(m)
    p = _p_ratio(z, n, l_hi, ops)
    f = _second_kind_product(z, n, l_hi, ops)
    size = l_hi - n + 1
    out = np.empty((size, size), dtype=complex)
    for a in range(size):
        for b in range(size):
            lo, hi = min(a, b), max(a, b)
            val = z * p[lo] * f[hi]
            if m < 0:
                j, l = n + a, n + b
                val = val * _factorial_ratio(j - n, j + n) * _factorial_ratio(l - n, l + n)
            out[a, b] = complex(val)
    return out


def _quadrature_L(m, z, j, l):
    """(z/2) int P_j^m P_l^m/(z - mu), with the integrand value at mu = 0 integrated analytically."""

    def poly(x):
        return assoc_legendre_p_real(j, m, x)[-1] * assoc_legendre_p_real(l, m, x)[-1]

    f0 = float(poly(0.0))
    rest, _ = integrate.quad(
        lambda x: (poly(x) - f0) / (z - x), -1, 1, points=[0.0], complex_func=True,
        epsabs=0, epsrel=1e-13, limit=400,
    )
    return z / 2 * (rest + f0 * cmath.log((z + 1) / (z - 1)))


def build_L_matrix(m: int, z, phase: PhaseFunction, check: bool = False):
    """Symmetric matrix L^m_{jl}(z), rows/columns j, l = |m| .. L.

    With ``check=True`` every entry is recomputed by adaptive quadrature and a
    relative disagreement above 1e-8 raises :class:`NumericalConsistencyError`.
    """
    if abs(m) > phase.L:
        raise InputError(f"|m| = {abs(m)} exceeds the scattering degree {phase.L}")
    z = _check_off_cut(z)
    mat = _neumann_block(z, m, phase.L)
    if check:
        n = abs(m)
        grid = np.linspace(-1.0, 1.0, 201)
        dist = abs(z.imag) if abs(z.real) <= 1 else min(abs(z - 1), abs(z + 1))
        for a in range(mat.shape[0]):
            for b in range(a, mat.shape[0]):
                ref = _quadrature_L(m, z, n + a, n + b)
                # quadrature cancels when the entry is small next to its integrand
                peak = np.abs(assoc_legendre_p_real(n + a, m, grid)[-1] * assoc_legendre_p_real(n + b, m, grid)[-1]).max()
                floor = 1e-13 * abs(z) * peak / dist
                if abs(ref - mat[a, b]) > 1e-8 * abs(ref) + floor:
                    raise NumericalConsistencyError(
                        f"L^{m}_({n + a},{n + b}) closed form {mat[a, b]} != quadrature {ref}"
                    )
    return mat


def _weights(m, phase, l_hi=None):
    l_hi = phase.L if l_hi is None else l_hi
    return np.array([phase.omega(l, m) for l in range(abs(m), l_hi + 1)])


def build_P_vector(m: int, kpoint: FourierPoint, omega: Direction, omega0_phi: float, l_max: int):
    """Entries P_j^m(mu') e^{i m phi0} e^{-i m phi'}, j = |m| .. l_max, with (mu', phi')
    the coordinates of ``omega`` in the frame aligned with ``k_hat``."""
    if abs(m) > l_max:
        raise InputError(f"|m| = {abs(m)} exceeds l_max = {l_max}")
    mu, phi = frame_coordinates(kpoint.khat.theta, kpoint.khat.phi, omega.xyz)
    P = assoc_legendre_p_real(l_max, m, float(mu))
    return P * cmath.exp(1j * m * (omega0_phi - float(phi)))


@dataclass(frozen=True)
class KernelMatrices:
    """Per-order blocks ``L[m]`` and diagonal weights ``W[m]`` at one spectral argument."""

    z: complex
    phase: PhaseFunction
    L: dict
    W: dict

    def p_vector(self, m, kpoint, omega, omega0_phi):
        return build_P_vector(m, kpoint, omega, omega0_phi, self.phase.L)

    def system(self, m):
        """I - c L^m W^m, with a condition check."""
        Lm, Wm = self.L[m], self.W[m]
        A = np.eye(Lm.shape[0]) - self.phase.c * Lm * Wm[None, :]
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise DispersionSingularityError(f"order {m}: condition number {cond:.3e} at z = {self.z}")
        return A


def kernel_matrices(z, phase: PhaseFunction) -> KernelMatrices:
    z = _check_off_cut(z)
    Ls, Ws = {}, {}
    for m in range(-phase.L, phase.L + 1):
        Ls[m] = build_L_matrix(m, z, phase)
        Ws[m] = _weights(m, phase)
    return KernelMatrices(z, phase, Ls, Ws)


def compute_M(kpoint: FourierPoint, omega: Direction, omega0: Direction, phase: PhaseFunction, kernel=None):
    """sum_m P^m(omega)^H W^m (I - c L^m W^m)^{-1} P^m(omega0)."""
    km = kernel if kernel is not None else kernel_matrices(kpoint.z, phase)
    total = 0.0j
    for m in range(-phase.L, phase.L + 1):
        A = km.system(m)
        p = km.p_vector(m, kpoint, omega, omega0.phi)
        p0 = km.p_vector(m, kpoint, omega0, omega0.phi)
        x = np.linalg.solve(A, p0)
        total += np.conj(p) @ (km.W[m] * x)
    return complex(total)


def _source_vector(m, kpoint, omega0, phase):
    z = kpoint.z
    mu0 = float(frame_coordinates(kpoint.khat.theta, kpoint.khat.phi, omega0.xyz)[0])
    return z / (z - mu0) * build_P_vector(m, kpoint, omega0, omega0.phi, phase.L)


def psi_bar_matrix_route(m: int, kpoint: FourierPoint, omega0: Direction, phase: PhaseFunction, kernel=None):
    """Moments psibar_l^m, l = |m| .. L, of the scattered transform.

    Solves (I - c L W) x = c L W b with b_j = z/(z - mu0') P_j^m(omega0) in the
    rotated frame.
    """
    if abs(m) > phase.L:
        raise InputError(f"|m| = {abs(m)} exceeds the scattering degree {phase.L}")
    km = kernel if kernel is not None else kernel_matrices(kpoint.z, phase)
    A = km.system(m)
    b = _source_vector(m, kpoint, omega0, phase)
    rhs = phase.c * km.L[m] @ (km.W[m] * b)
    return np.linalg.solve(A, rhs)


def transformed_flux(kpoint: FourierPoint, omega: Direction, omega0: Direction, phase: PhaseFunction,
                     collided_only: bool = False):
    """Fourier transform of the scattered angular flux at one (k, omega).

    ``collided_only`` drops the once-collided part, leaving two or more collisions.
    """
    km = kernel_matrices(kpoint.z, phase)
    z = kpoint.z
    kt, kp = kpoint.khat.theta, kpoint.khat.phi
    mu = float(frame_coordinates(kt, kp, omega.xyz)[0])
    mu0 = float(frame_coordinates(kt, kp, omega0.xyz)[0])
    total = 0.0j
    for m in range(-phase.L, phase.L + 1):
        A = km.system(m)
        p = km.p_vector(m, kpoint, omega, omega0.phi)
        p0 = km.p_vector(m, kpoint, omega0, omega0.phi)
        wp0 = km.W[m] * p0
        if collided_only:
            x = np.linalg.solve(A, phase.c * km.L[m] @ wp0)
            total += np.conj(p) @ (km.W[m] * x)
        else:
            total += np.conj(p) @ (km.W[m] * np.linalg.solve(A, p0))
    return complex(phase.c / (4 * math.pi) * z * z / ((z - mu) * (z - mu0)) * total)
