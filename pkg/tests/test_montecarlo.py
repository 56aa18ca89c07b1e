import math

import numpy as np
import pytest
from numpy.polynomial import legendre as npleg

from boltzgreen.exceptions import InputError, InvalidPhaseError
from boltzgreen.montecarlo import (
    McConfig,
    check_phase_nonnegative,
    decompose_collision_orders,
    sample_scattering_cosines,
    simulate,
)
from boltzgreen.types import Direction, PhaseFunction

SHELLS = (0.45, 0.55, 0.95, 1.05, 1.95, 2.05)


def _uncollided_shell(a, b, volume, isotropic=True):
    return (4 * math.pi if isotropic else 1.0) * (math.exp(-a) - math.exp(-b)) / volume


def test_first_collision_absorbs_matches_uncollided():
    cfg = McConfig(200_000, seed=7, shells=SHELLS, max_scatter_order=0)
    est = simulate(PhaseFunction(0.9), cfg)
    r = np.asarray(SHELLS)
    ref = np.array([_uncollided_shell(a, b, v) for a, b, v in zip(r[:-1], r[1:], cfg.volumes)])
    assert np.all(np.abs(est.mean - ref) <= 3 * est.std_error)
    assert np.all(est.by_order[1:] == 0)


def test_orders_sum_to_total():
    est = simulate(PhaseFunction(0.7, (1.0, 1.0)), McConfig(50_000, seed=3, shells=SHELLS))
    parts = decompose_collision_orders(est)
    total = parts[0][0] + parts[1][0] + parts["2+"][0]
    assert np.all(np.abs(total - est.mean) <= 1e-12 * est.mean)
    assert np.all(est.std_error >= 0) and np.all(est.scattered_error >= 0)


def test_first_order_fraction_grows_with_albedo():
    # near the source; far away higher orders outgrow order 1
    cfg = McConfig(100_000, seed=11, shells=(0.45, 0.55, 0.95, 1.05))
    lo = simulate(PhaseFunction(0.3), cfg)
    hi = simulate(PhaseFunction(0.7), cfg)
    assert np.all(hi.by_order[1] / hi.mean > lo.by_order[1] / lo.mean)


def test_deterministic_across_runs_and_threads():
    cfg = McConfig(3 * 2**15 + 17, seed=99, shells=SHELLS)
    ph = PhaseFunction(0.8, (1.0, 1.2, 0.3))
    a = simulate(ph, cfg, threads=1)
    b = simulate(ph, cfg, threads=1)
    c = simulate(ph, cfg, threads=3)
    for x in (b, c):
        assert np.array_equal(a.mean, x.mean)
        assert np.array_equal(a.std_error, x.std_error)
        assert np.array_equal(a.by_order, x.by_order)


def test_full_width_seed():
    est = simulate(PhaseFunction(0.5), McConfig(1000, seed=2**64 - 1, shells=SHELLS))
    assert np.all(np.isfinite(est.mean))


def test_seed_changes_estimate():
    ph = PhaseFunction(0.5)
    a = simulate(ph, McConfig(10_000, seed=1, shells=SHELLS))
    b = simulate(ph, McConfig(10_000, seed=2, shells=SHELLS))
    assert not np.array_equal(a.mean, b.mean)


def test_scattering_cosine_moments():
    ph = PhaseFunction(0.5, (1.0, 1.2, 0.4))
    mu = sample_scattering_cosines(ph, 1_000_000, seed=5)
    assert np.all(np.abs(mu) <= 1)
    for l in range(1, 3):
        P = npleg.legval(mu, [0] * l + [1])
        sigma = P.std() / math.sqrt(mu.size)
        assert abs(P.mean() - ph.beta[l] / (2 * l + 1)) <= 4 * sigma


def test_sampled_cosines_follow_the_cdf():
    """F(mu) of the samples is uniform, including the low-density bins next to mu = -1."""
    from scipy import stats

    ph = PhaseFunction(0.5, (1.0, 1.0))
    mu = sample_scattering_cosines(ph, 2_000_000, seed=9)
    u = (1 + mu) ** 2 / 4
    counts = np.bincount(np.minimum((u * 64).astype(int), 63), minlength=64)
    assert stats.chisquare(counts).pvalue > 1e-4
    low = np.count_nonzero(u < 1 / 2048)
    assert abs(low - mu.size / 2048) <= 4 * math.sqrt(mu.size / 2048)


def test_isotropic_cosines_uniform():
    mu = sample_scattering_cosines(PhaseFunction(0.5), 200_000, seed=1)
    assert abs(mu.mean()) <= 4 / math.sqrt(3 * mu.size)


def test_negative_phase_rejected():
    ph = PhaseFunction(0.5, (1.0, 0.0, 4.0))
    with pytest.raises(InvalidPhaseError):
        check_phase_nonnegative(ph)
    with pytest.raises(InvalidPhaseError):
        simulate(ph, McConfig(10, shells=SHELLS))


@pytest.mark.parametrize("kw", [dict(histories=0), dict(shells=(1.0,)), dict(shells=(0.0, 1.0)),
                                dict(shells=(1.0, 0.5)), dict(source="plane"), dict(max_scatter_order=-2),
                                dict(seed=-1)])
def test_config_validation(kw):
    base = dict(histories=10, shells=SHELLS)
    base.update(kw)
    with pytest.raises(InputError):
        McConfig(**base)


def test_beam_source_normalisation():
    cfg = McConfig(200_000, seed=4, shells=(0.9, 1.1), source="beam", omega0=Direction(0.5, 1.0),
                   max_scatter_order=0)
    est = simulate(PhaseFunction(0.5), cfg)
    ref = _uncollided_shell(0.9, 1.1, cfg.volumes[0], isotropic=False)
    assert abs(est.mean[0] - ref) <= 3 * est.std_error[0]


def test_threads_validated():
    with pytest.raises(InputError):
        simulate(PhaseFunction(0.5), McConfig(10, shells=SHELLS), threads=0)
