import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special as sp

from boltzgreen.exceptions import InputError, NumericalConsistencyError
from boltzgreen.fourier_kernel import (
    _quadrature_L,
    build_L_matrix,
    build_P_vector,
    compute_M,
    kernel_matrices,
    psi_bar_matrix_route,
    transformed_flux,
)
from boltzgreen.special import assoc_legendre_p_real, spherical_harmonic, wigner_d
from boltzgreen.types import Direction, FourierPoint, PhaseFunction, Z_HAT

from conftest import polar, rotation, unit

PH2 = PhaseFunction(0.8, (1.0, 1.5, 0.5))


def _m_closed(c, k):
    return 1 / (1 - c / k * math.atan(k))


# --------------------------------------------------------------------------
# L matrix


def test_L_scalar_entry():
    ph = PhaseFunction(0.5, (1.0, 1.0))
    assert build_L_matrix(0, 1j, ph)[0, 0] == pytest.approx(math.pi / 4, rel=1e-15)


def test_L_off_diagonal_entry():
    ph = PhaseFunction(0.5, (1.0, 1.0))
    assert build_L_matrix(0, 1j, ph)[0, 1] == pytest.approx(1j * (math.pi / 4 - 1), rel=1e-14)


def test_L_order_one_against_quadrature():
    ph = PhaseFunction(0.5, (1.0, 1.0))
    z = 2j
    opts = dict(epsabs=0, epsrel=1e-13, limit=200)
    f = lambda x: sp.lpmv(1, 1, x) ** 2 / (z - x)
    ref = z / 2 * complex(integrate.quad(lambda x: f(x).real, -1, 1, **opts)[0],
                          integrate.quad(lambda x: f(x).imag, -1, 1, **opts)[0])
    assert abs(build_L_matrix(1, z, ph)[0, 0] - ref) < 1e-10 * abs(ref)


@given(st.integers(0, 5), st.floats(0.05, 200.0), st.integers(-5, 5))
def test_L_symmetric(L, k, m):
    ph = PhaseFunction(0.5, (1.0,) + (0.5,) * L)
    if abs(m) > L:
        with pytest.raises(InputError):
            build_L_matrix(m, 1j / k, ph)
        return
    A = build_L_matrix(m, 1j / k, ph)
    assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))


@pytest.mark.parametrize("k", [0.2, 1.0, 30.0])
def test_L_closed_form_matches_adaptive_quadrature(k):
    ph = PhaseFunction(0.5, (1.0, 1.2, 0.8, 0.3))
    for m in range(-3, 4):
        build_L_matrix(m, 1j / k, ph, check=True)


def test_L_check_detects_corruption(monkeypatch):
    import boltzgreen.fourier_kernel as fk

    monkeypatch.setattr(fk, "_quadrature_L", lambda m, z, j, l: 1.01 * _quadrature_L(m, z, j, l))
    with pytest.raises(NumericalConsistencyError):
        fk.build_L_matrix(0, 1j, PhaseFunction(0.5, (1.0, 1.0)), check=True)


# --------------------------------------------------------------------------
# P vector


def test_P_order_zero_has_no_phase():
    kp = FourierPoint(1.0, Direction(1.0, 0.4))
    om = Direction(0.7, 2.0)
    v = build_P_vector(0, kp, om, 1.3, 4)
    mu = float(np.dot(kp.khat.xyz, om.xyz))
    assert np.allclose(v, assoc_legendre_p_real(4, 0, mu), rtol=0, atol=1e-14)


def test_P_null_rotation():
    kp = FourierPoint(1.0, Z_HAT)
    om = Direction(0.7, 2.0)
    v = build_P_vector(2, kp, om, 0.5, 4)
    ref = assoc_legendre_p_real(4, 2, om.mu) * cmath.exp(2j * (0.5 - om.phi))
    assert np.allclose(v, ref, rtol=0, atol=1e-14)


def test_P_matches_wigner_expansion():
    """P_l^m(mu') e^{-i m phi'} for the rotated coordinates equals a Wigner sum of unrotated harmonics."""
    tk, pk, phi0, m = 1.0, 0.4, 0.9, 1
    kp = FourierPoint(2.0, Direction(tk, pk))
    om = Direction(1.3, 2.6)
    v = build_P_vector(m, kp, om, phi0, 6)
    for l in range(1, 7):
        d = wigner_d(l, tk)
        y = sum(cmath.exp(1j * mp * pk) * d[mp + l, m + l] * np.conj(spherical_harmonic(l, mp, om))
                for mp in range(-l, l + 1))
        norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))
        ref = y / norm * cmath.exp(1j * m * phi0)
        assert abs(v[l - 1] - ref) < 1e-12 * max(1.0, abs(ref))


# --------------------------------------------------------------------------
# M


def test_M_isotropic_unit_wavenumber():
    ph = PhaseFunction(0.9)
    M = compute_M(FourierPoint(1.0, Direction(0.3, 0.2)), Direction(1.0, 2.0), Direction(2.0, 1.0), ph)
    assert M == pytest.approx(_m_closed(0.9, 1.0), rel=1e-12)
    assert M.real == pytest.approx(3.4113, abs=1e-4)


def test_M_isotropic_large_k():
    M = compute_M(FourierPoint(1e6, Z_HAT), Direction(1.0, 2.0), Z_HAT, PhaseFunction(0.9))
    assert abs(M - 1) < 2e-6


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("c", [0.3, 0.9])
def test_M_isotropic_closed_form(k, c):
    M = compute_M(FourierPoint(k, Direction(2.1, 0.7)), Direction(0.4, 5.0), Direction(1.9, 3.3), PhaseFunction(c))
    assert abs(M - _m_closed(c, k)) < 1e-12 * _m_closed(c, k)


def test_M_rotation_invariant(rng):
    for _ in range(5):
        vk, vo, v0 = (unit(math.acos(rng.uniform(-1, 1)), rng.uniform(0, 2 * math.pi)) for _ in range(3))
        R = rotation(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)) @ rotation(rng.uniform(0, 3), 0)
        k = rng.uniform(0.2, 5)
        a = compute_M(FourierPoint(k, Direction(*polar(vk))), Direction(*polar(vo)), Direction(*polar(v0)), PH2)
        b = compute_M(FourierPoint(k, Direction(*polar(R @ vk))), Direction(*polar(R @ vo)),
                      Direction(*polar(R @ v0)), PH2)
        assert abs(a - b) < 1e-10 * abs(a)


# --------------------------------------------------------------------------
# matrix route moments


def test_matrix_route_vanishes_with_albedo():
    ph = PhaseFunction(1e-300, (1.0, 1.2))
    kp = FourierPoint(1.5, Direction(0.4, 0.3))
    for m in (-1, 0, 1):
        assert np.max(np.abs(psi_bar_matrix_route(m, kp, Direction(1.0, 1.0), ph))) < 1e-290


def test_matrix_route_isotropic_scalar():
    c = 0.7
    kp = FourierPoint(2.5, Direction(0.6, 1.4))
    om0 = Direction(2.0, 0.3)
    z = kp.z
    mu0 = float(np.dot(kp.khat.xyz, om0.xyz))
    zq = z * 0.5 * cmath.log((z + 1) / (z - 1))
    ref = c * zq * (z / (z - mu0)) / (1 - c * zq)
    got = psi_bar_matrix_route(0, kp, om0, PhaseFunction(c))
    assert got.shape == (1,)
    assert abs(got[0] - ref) < 1e-13 * abs(ref)


def test_matrix_route_resubstitution():
    kp = FourierPoint(1.7, Direction(0.8, 2.0))
    om0 = Direction(0.5, 4.0)
    km = kernel_matrices(kp.z, PH2)
    z = kp.z
    mu0 = float(np.dot(kp.khat.xyz, om0.xyz))
    for m in range(-2, 3):
        x = psi_bar_matrix_route(m, kp, om0, PH2, kernel=km)
        b = z / (z - mu0) * build_P_vector(m, kp, om0, om0.phi, 2)
        Lw = PH2.c * km.L[m] * km.W[m][None, :]
        res = x - Lw @ x - Lw @ b
        assert np.max(np.abs(res)) < 1e-12 * np.max(np.abs(x))


# --------------------------------------------------------------------------
# transformed flux


def test_transformed_flux_frozen_value():
    # independent Nystrom solution of the angular transport equation in Fourier space
    kp = FourierPoint(1.3, Direction(0.9, 1.7))
    ph = PhaseFunction(0.8, (1.0, 1.5, 0.5))
    got = transformed_flux(kp, Direction(1.1, 0.3), Direction(0.7, 2.2), ph)
    ref = -0.016050621192358616 - 0.0735660775723073j
    assert abs(got - ref) < 1e-8 * abs(ref)


def test_transformed_flux_isotropic_closed_form():
    c, k = 0.6, 2.0
    kp = FourierPoint(k, Direction(0.5, 0.5))
    om, om0 = Direction(1.2, 2.0), Direction(2.2, 4.0)
    z = kp.z
    mu, mu0 = (float(np.dot(kp.khat.xyz, v.xyz)) for v in (om, om0))
    ref = c / (4 * math.pi) * z * z / ((z - mu) * (z - mu0)) * _m_closed(c, k)
    assert abs(transformed_flux(kp, om, om0, PhaseFunction(c)) - ref) < 1e-13 * abs(ref)


def test_collided_part_removes_single_scatter():
    c, k = 0.6, 2.0
    kp = FourierPoint(k, Direction(0.5, 0.5))
    om, om0 = Direction(1.2, 2.0), Direction(2.2, 4.0)
    ph = PhaseFunction(c)
    z = kp.z
    mu, mu0 = (float(np.dot(kp.khat.xyz, v.xyz)) for v in (om, om0))
    once = c / (4 * math.pi) * z * z / ((z - mu) * (z - mu0))
    diff = transformed_flux(kp, om, om0, ph) - transformed_flux(kp, om, om0, ph, collided_only=True)
    assert abs(diff - once) < 1e-13 * abs(once)
