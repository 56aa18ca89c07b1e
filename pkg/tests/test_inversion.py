import math

import numpy as np
import pytest
from scipy import integrate

from boltzgreen.exceptions import (
    CoplanarDegenerateError,
    ConventionError,
    InputError,
    PreconditionError,
    SingularOriginError,
)
from boltzgreen.inversion import (
    PROFILE_ENV,
    PROFILES,
    QuadratureSpec,
    density_transform,
    energy_density,
    invert_bessel,
    invert_full,
    isotropic_reference_density,
    k_grid,
    once_collided_density,
    once_collided_term,
    uncollided_term,
)
from boltzgreen.types import Direction, PhaseFunction, Z_HAT

SMALL = QuadratureSpec(k_max=3.0, n_k=8, n_mu=24, n_phi=24, lmax=40)
PH2 = PhaseFunction(0.8, (1.0, 1.5, 0.5))


def qawf_density(r, c):
    """Independent oracle: QUADPACK's Fourier-integral routine on the textbook integrand."""
    f = lambda k: 0.0 if k == 0 else 2 * c / math.pi * math.atan(k) ** 2 / (k - c * math.atan(k)) / r
    val, err = integrate.quad(f, 0, np.inf, weight="sin", wvar=r)
    return math.exp(-r) / r**2 + val, err


# --------------------------------------------------------------------------
# singular terms


def test_uncollided_weights():
    assert uncollided_term(1.0, Z_HAT, Z_HAT).weight == pytest.approx(math.exp(-1), rel=1e-15)
    assert uncollided_term(2.0, Z_HAT, Z_HAT).weight == pytest.approx(math.exp(-2) / 4, rel=1e-15)


def test_uncollided_origin_rejected():
    with pytest.raises(SingularOriginError):
        uncollided_term(0.0, Z_HAT, Z_HAT)


@pytest.mark.parametrize("q", [0.3, 2.0, 15.0])
def test_uncollided_fourier_transform(q):
    re = integrate.quad(lambda s: math.exp(-s), 0, np.inf, weight="cos", wvar=q)[0]
    im = -integrate.quad(lambda s: math.exp(-s), 0, np.inf, weight="sin", wvar=q)[0]
    assert complex(re, im) == pytest.approx(1 / (1 + 1j * q), abs=1e-10)


def test_once_collided_quarter_angles():
    c = 0.6
    w = once_collided_term((0, 0, 1.0), Direction(math.pi / 4, 0.0), Direction(math.pi / 4, math.pi),
                           PhaseFunction(c))
    assert w.weight == pytest.approx(c / (4 * math.pi) * math.exp(-math.sqrt(2)) / 0.5, rel=1e-13)


def test_once_collided_outside_support():
    w = once_collided_term((0, 0, 1.0), Direction(2.0, 0.0), Direction(2.0, math.pi), PhaseFunction(0.6))
    assert w.weight == 0.0


def test_once_collided_degenerate():
    with pytest.raises(CoplanarDegenerateError):
        once_collided_term((0, 0, 1.0), Direction(math.pi / 2, 0.0), Direction(math.pi / 2, math.pi),
                           PhaseFunction(0.6))
    with pytest.raises(CoplanarDegenerateError):
        once_collided_term((0, 0, 1.0), Z_HAT, Direction(1.0, 0.0), PhaseFunction(0.6))


@pytest.mark.parametrize("r", [0.5, 2.0])
@pytest.mark.parametrize("beta", [(1.0,), (1.0, 1.5, 0.5)])
def test_once_collided_density_against_fourier_oracle(r, beta):
    ph = PhaseFunction(0.5, beta)
    f = lambda k: 0.0 if k == 0 else k * density_transform(k, ph, "once").real
    val, _ = integrate.quad(f, 0, np.inf, weight="sin", wvar=r)
    ref = val / (2 * math.pi**2 * r)
    got, err = once_collided_density(r, ph)
    assert got == pytest.approx(ref, rel=1e-8)
    assert err < 1e-8 * got


# --------------------------------------------------------------------------
# energy density


def test_energy_density_tends_to_uncollided():
    res = energy_density([1.0], PhaseFunction(1e-12, (1.0, 1.0)))
    assert res.u_total[0] == pytest.approx(math.exp(-1), rel=1e-10)


@pytest.mark.parametrize("c", [0.3, 0.9])
def test_energy_density_isotropic_reference(c):
    r = [0.5, 1.0, 2.0, 5.0]
    got = energy_density(r, PhaseFunction(c)).u_total
    ref = isotropic_reference_density(r, c)
    assert np.max(np.abs(got / ref - 1)) < 1e-8


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 5.0])
def test_isotropic_reference_against_qawf(r):
    ref, e = qawf_density(r, 0.9)
    got, err = isotropic_reference_density(r, 0.9, return_error=True)
    assert abs(got - ref) <= err + e
    assert got == pytest.approx(ref, rel=2e-9)


def test_isotropic_reference_golden():
    # QAWF oracle value at c = 0.9, r = 1
    assert isotropic_reference_density(1.0, 0.9) == pytest.approx(1.8005581069597403, rel=1e-10)


def test_energy_density_positive():
    for beta in [(1.0,), (1.0, 1.0), (1.0, 1.5, 0.5), (1.0, -0.9)]:
        res = energy_density([0.1, 1.0, 4.0, 10.0], PhaseFunction(0.7, beta))
        assert np.all(res.u_total > 0)
        assert np.all(res.u_scattered > 0)
        assert np.all(res.error >= 0)


def test_energy_density_linear_in_small_albedo():
    r = [0.5, 2.0]
    a = energy_density(r, PhaseFunction(1e-3, (1.0, 1.2))).u_scattered
    b = energy_density(r, PhaseFunction(2e-3, (1.0, 1.2))).u_scattered
    assert np.allclose(b / a, 2.0, rtol=2e-3)


def test_energy_density_methods_agree():
    ph = PhaseFunction(0.5, (1.0, 1.5, 0.5))
    a = energy_density([0.5, 1.0, 2.0], ph, method="spectral").u_total
    b = energy_density([0.5, 1.0, 2.0], ph, method="matrix").u_total
    assert np.allclose(a, b, rtol=1e-10, atol=0)


def test_energy_density_integrand_real():
    ph = PhaseFunction(0.5, (1.0, 1.5, 0.5))
    nodes, _ = k_grid(QuadratureSpec(), 2.0)
    for method in ("spectral", "matrix"):
        vals = density_transform(nodes.ravel(), ph, "multiple", method)
        assert np.all(np.abs(vals.imag) <= 1e-12 * np.abs(vals.real))


@pytest.mark.parametrize("beta", [(1.0,), (1.0, 1.0), (1.0, 1.5, 0.5)])
def test_integrand_tail_is_inverse_square(beta):
    ks = np.array([50.0, 100.0, 200.0, 400.0])
    h = ks * density_transform(ks, PhaseFunction(0.5, beta), "multiple").real
    slope = np.diff(np.log(h)) / np.diff(np.log(ks))
    assert np.all((slope > -2.2) & (slope < -1.8))


def test_energy_density_reality_violation_is_reported(monkeypatch):
    import boltzgreen.inversion as inv

    real = inv.density_transform
    monkeypatch.setattr(inv, "density_transform", lambda *a, **k: real(*a, **k) * (1 + 1e-6j))
    with pytest.raises(ConventionError):
        inv.energy_density([1.0], PhaseFunction(0.5))


def test_energy_density_rejects_origin():
    with pytest.raises(SingularOriginError):
        energy_density([0.0, 1.0], PhaseFunction(0.5))


def test_fast_profile_close_to_accurate():
    ph = PhaseFunction(0.5, (1.0, 1.0))
    a = energy_density([0.5, 1.0, 2.0], ph, QuadratureSpec.preset("fast")).u_total
    b = energy_density([0.5, 1.0, 2.0], ph, QuadratureSpec.preset("accurate")).u_total
    assert np.allclose(a, b, rtol=1e-6)


# --------------------------------------------------------------------------
# angular flux


def test_flux_vanishes_with_albedo():
    res = invert_full((0.3, 0.2, 0.9), Direction(0.7, 2.0), Z_HAT, PhaseFunction(1e-12, (1.0, 1.0)), SMALL,
                      route="matrix")
    assert abs(res.smooth) < 1e-20


def test_flux_isotropic_routes_share_quadrature():
    ph = PhaseFunction(0.9)
    args = ((0.3, -0.4, 0.8), Direction(0.7, 2.0), Direction(1.2, 0.5), ph, SMALL)
    ref = invert_full(*args, route="isotropic").smooth
    for route in ("matrix", "spectral"):
        assert invert_full(*args, route=route).smooth == pytest.approx(ref, rel=1e-10)


def test_flux_matrix_and_spectral_routes_agree():
    args = ((0.0, 0.0, 1.0), Direction(1.1, 0.4), Z_HAT, PH2, SMALL)
    a = invert_full(*args, route="matrix")
    b = invert_full(*args, route="spectral")
    assert b.smooth == pytest.approx(a.smooth, rel=1e-8)
    assert a.quadrature_error >= 0
    # beam along r_hat: the once-collided distribution has no finite weight here
    assert [t.kind for t in a.singular] == ["uncollided"]


def test_flux_carries_singular_terms():
    res = invert_full((0.3, -0.4, 0.8), Direction(0.7, 2.0), Direction(1.2, 0.5), PH2, SMALL, route="matrix")
    assert [t.kind for t in res.singular] == ["uncollided", "once_collided"]
    assert math.isfinite(res.smooth)


def test_flux_reciprocity():
    r = np.array((0.3, -0.4, 0.8))
    om, om0 = Direction(0.7, 2.0), Direction(1.2, 0.5)
    a = invert_full(r, om, om0, PH2, SMALL, route="matrix")
    b = invert_full(-r, -om0, -om, PH2, SMALL, route="matrix")
    assert abs(a.smooth - b.smooth) <= 1e-10 * abs(a.smooth)


def test_bessel_matches_full():
    ph = PhaseFunction(0.9, (1.0, 1.0))
    for v, om in [((0.0, 0.0, 1.5), Direction(1.1, 0.4)), ((0.6, -0.2, 0.9), Direction(2.0, 5.0))]:
        a = invert_full(v, om, Z_HAT, ph, SMALL, route="matrix").smooth
        b = invert_bessel(v, om, Z_HAT, ph, SMALL).smooth
        assert b == pytest.approx(a, rel=1e-8)


def test_bessel_needs_polar_beam():
    with pytest.raises(PreconditionError):
        invert_bessel((0, 0, 1.0), Z_HAT, Direction(0.3, 0.0), PH2, SMALL)


def test_unknown_route():
    with pytest.raises(InputError):
        invert_full((0, 0, 1.0), Z_HAT, Z_HAT, PH2, SMALL, route="nope")


def test_isotropic_route_needs_isotropic_phase():
    with pytest.raises(PreconditionError):
        invert_full((0, 0, 1.0), Z_HAT, Z_HAT, PH2, SMALL, route="isotropic")


# --------------------------------------------------------------------------
# quadrature specification


@pytest.mark.parametrize("kw", [dict(k_max=0.0), dict(n_k=1), dict(n_mu=1), dict(n_phi=0), dict(lmax=-1),
                                dict(tail_model="cubic"), dict(points_per_period=4), dict(max_panel=0.0)])
def test_quadrature_validation(kw):
    with pytest.raises(InputError):
        QuadratureSpec(**kw)


def test_profiles(monkeypatch):
    monkeypatch.setenv(PROFILE_ENV, "fast")
    assert QuadratureSpec.from_env() == PROFILES["fast"]
    monkeypatch.setenv(PROFILE_ENV, "accurate")
    assert QuadratureSpec.from_env(k_max=50.0).k_max == 50.0
    monkeypatch.setenv(PROFILE_ENV, "bogus")
    with pytest.raises(InputError):
        QuadratureSpec.from_env()


def test_k_grid_resolves_oscillation():
    nodes, weights = k_grid(QuadratureSpec(), 5.0)
    assert nodes.min() > 0 and nodes.max() < 200.0
    assert weights.sum() == pytest.approx(200.0 - 1e-6, rel=1e-12)
    width = np.diff(nodes[:, 0]).max()
    assert width <= 2 * math.pi / 5.0 * 16 / 16 + 1e-12
