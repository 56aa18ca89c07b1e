"""Monte Carlo transport in an infinite homogeneous medium.

Unit total cross-section, albedo ``c`` applied as a survival weight at every
collision (implicit capture) and a Legendre-expanded scattering law. Densities
are track-length estimates in spherical shells, split by collision order
0, 1 and >= 2.

Reproducibility: every history owns a random stream derived from
(seed, history index) by a splitmix64 hash, histories are grouped into
fixed-size batches independent of the thread count, and batch tallies are
merged in batch order. The same seed therefore gives bit-identical results for
any number of threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import optimize

from .exceptions import InputError, InvalidPhaseError
from .types import Direction, PhaseFunction, as_direction

__all__ = [
    "McConfig",
    "McEstimate",
    "CosineSampler",
    "simulate",
    "decompose_collision_orders",
    "sample_scattering_cosines",
    "check_phase_nonnegative",
]

N_BINS = 2048
BATCH = 1 << 15
WEIGHT_CUTOFF = 1e-6
ROULETTE_SURVIVAL = 0.5
UNLIMITED = -1


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class McConfig:
    """``shells`` are increasing radii; shell i spans [shells[i], shells[i+1]].

    ``source`` is ``"isotropic_point"`` or ``"beam"`` (along ``omega0``).
    ``max_scatter_order`` of -1 means unlimited; 0 stops every history at its
    first collision.
    """

    histories: int
    seed: int = 0
    shells: tuple = (0.45, 0.55, 0.95, 1.05, 1.95, 2.05)
    source: str = "isotropic_point"
    omega0: Direction = field(default_factory=lambda: Direction(0.0, 0.0))
    max_scatter_order: int = UNLIMITED

    def __post_init__(self):
        h = int(self.histories)
        if h < 1:
            raise InputError(f"histories must be at least 1, got {self.histories}")
        shells = tuple(float(r) for r in np.atleast_1d(self.shells))
        if len(shells) < 2:
            raise InputError("need at least two shell radii")
        if shells[0] <= 0 or any(b <= a for a, b in zip(shells, shells[1:])) or not all(map(math.isfinite, shells)):
            raise InputError("shell radii must be positive, finite and strictly increasing")
        if self.source not in ("isotropic_point", "beam"):
            raise InputError(f"source must be 'isotropic_point' or 'beam', got {self.source!r}")
        if int(self.max_scatter_order) < UNLIMITED:
            raise InputError("max_scatter_order must be -1 (unlimited) or non-negative")
        seed = int(self.seed)
        if not (0 <= seed < 2**64):
            raise InputError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "histories", h)
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "shells", shells)
        object.__setattr__(self, "omega0", as_direction(self.omega0))
        object.__setattr__(self, "max_scatter_order", int(self.max_scatter_order))

    @property
    def midpoints(self) -> np.ndarray:
        r = np.asarray(self.shells)
        return 0.5 * (r[1:] + r[:-1])

    @property
    def volumes(self) -> np.ndarray:
        r = np.asarray(self.shells)
        return 4.0 * math.pi / 3.0 * (r[1:] ** 3 - r[:-1] ** 3)


@dataclass(frozen=True)
class McEstimate:
    """Shell-averaged densities per source particle (times 4 pi for the isotropic
    source, i.e. the energy density normalisation).

    ``by_order`` and ``by_order_error`` have rows for collision orders 0, 1, >= 2.
    """

    config: McConfig
    mean: np.ndarray
    std_error: np.ndarray
    by_order: np.ndarray
    by_order_error: np.ndarray
    scattered_error: np.ndarray

    @property
    def scattered(self) -> np.ndarray:
        return self.by_order[1] + self.by_order[2]


# --------------------------------------------------------------------------
# scattering law sampling


def check_phase_nonnegative(phase: PhaseFunction, points: int = 20001):
    """Raise :class:`InvalidPhaseError` if (1/2) sum beta_l P_l is negative anywhere on [-1, 1]."""
    mu = np.linspace(-1.0, 1.0, points)
    f = 0.5 * npleg.legval(mu, np.asarray(phase.beta))
    if f.min() < -1e-12:
        raise InvalidPhaseError(
            f"scattering density is negative (min {f.min():.3e} at mu = {mu[np.argmin(f)]:.4f})"
        )


class CosineSampler:
    """Exact sampler for f(mu) = (1/2) sum_l beta_l P_l(mu): pick one of N_BINS
    equal-probability bins (edges are exact CDF quantiles), then rejection
    inside the bin against a bound on f."""

    def __init__(self, phase: PhaseFunction):
        check_phase_nonnegative(phase)
        beta = np.asarray(phase.beta, dtype=float)
        self.density = 0.5 * beta
        self.cdf_coef = npleg.legint(self.density, lbnd=-1.0)
        edges = np.empty(N_BINS + 1)
        edges[0], edges[-1] = -1.0, 1.0
        cdf = lambda x, t: npleg.legval(x, self.cdf_coef) - t
        lo = -1.0
        for i in range(1, N_BINS):
            t = i / N_BINS
            hi = 1.0
            edges[i] = lo = optimize.brentq(cdf, lo, hi, args=(t,), xtol=1e-15, rtol=1e-15)
        self.edges = edges
        scan = np.linspace(0.0, 1.0, 33)
        pts = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * scan
        vals = npleg.legval(pts, self.density)
        slope = np.abs(npleg.legval(pts, npleg.legder(self.density))).max(axis=1)
        # bound between scan points: value plus half a step times the largest slope
        self.bound = (vals.max(axis=1) + slope * np.diff(edges) / 32) * (1 + 1e-9)
        self.bound = np.maximum(self.bound, 1e-300)


# --------------------------------------------------------------------------
# numba kernels


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _uniform(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    return (_mix(state[0]) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(inline="always")
def _open_uniform(state):
    u = _uniform(state)
    while u == 0.0:
        u = _uniform(state)
    return u


@numba.njit(inline="always")
def _legval(x, coef):
    # Clenshaw for a Legendre series
    n = coef.shape[0]
    if n == 1:
        return coef[0]
    b1 = 0.0
    b2 = 0.0
    for k in range(n - 1, 0, -1):
        b0 = coef[k] + (2.0 * k + 1.0) / (k + 1.0) * x * b1 - (k + 1.0) / (k + 2.0) * b2
        b2 = b1
        b1 = b0
    return coef[0] + x * b1 - 0.5 * b2


@numba.njit(inline="always")
def _sample_cosine(state, edges, bound, density, isotropic):
    if isotropic:
        return 2.0 * _uniform(state) - 1.0
    nb = bound.shape[0]
    # the bin is fixed before rejection: re-drawing it would favour bins with high acceptance
    i = int(_uniform(state) * nb)
    if i >= nb:
        i = nb - 1
    while True:
        mu = edges[i] + (edges[i + 1] - edges[i]) * _uniform(state)
        if _uniform(state) * bound[i] <= _legval(mu, density):
            return mu


@numba.njit(inline="always")
def _ball_chord(px, py, pz, dx, dy, dz, ell, R2):
    # length of {p + t d : 0 <= t <= ell} inside |x|^2 <= R2
    b = px * dx + py * dy + pz * dz
    cc = px * px + py * py + pz * pz - R2
    disc = b * b - cc
    if disc <= 0.0:
        return 0.0
    sq = math.sqrt(disc)
    t1 = -b - sq
    t2 = -b + sq
    if t1 < 0.0:
        t1 = 0.0
    if t2 > ell:
        t2 = ell
    return t2 - t1 if t2 > t1 else 0.0


@numba.njit(nogil=True, cache=True)
def _run_batch(seed, first, count, c, edges, bound, density, isotropic, radii2, max_order,
               beam, bx, by, bz, s1, s2, s2_tot, s2_scat):
    """Simulate histories [first, first + count) and accumulate first and second
    moments of the per-history shell tallies."""
    nsh = radii2.shape[0] - 1
    r_max2 = radii2[nsh]
    local = np.zeros((3, nsh))
    state = np.zeros(1, dtype=np.uint64)
    for h in range(first, first + count):
        state[0] = _mix(np.uint64(seed) ^ _mix(np.uint64(h) + np.uint64(0x632BE59BD9B4E019)))
        for o in range(3):
            for j in range(nsh):
                local[o, j] = 0.0
        px = 0.0
        py = 0.0
        pz = 0.0
        if beam:
            dx, dy, dz = bx, by, bz
        else:
            mu = 2.0 * _uniform(state) - 1.0
            ph = 2.0 * math.pi * _uniform(state)
            st = math.sqrt(max(0.0, 1.0 - mu * mu))
            dx, dy, dz = st * math.cos(ph), st * math.sin(ph), mu
        w = 1.0
        order = 0
        while True:
            ell = -math.log(_open_uniform(state))
            # closest approach of the flight to the origin decides whether any shell is crossed
            b = px * dx + py * dy + pz * dz
            t = -b
            if t < 0.0:
                t = 0.0
            elif t > ell:
                t = ell
            qx = px + t * dx
            qy = py + t * dy
            qz = pz + t * dz
            if qx * qx + qy * qy + qz * qz < r_max2:
                o = order if order < 2 else 2
                inner = _ball_chord(px, py, pz, dx, dy, dz, ell, radii2[0])
                for j in range(nsh):
                    outer = _ball_chord(px, py, pz, dx, dy, dz, ell, radii2[j + 1])
                    local[o, j] += w * (outer - inner)
                    inner = outer
            px += ell * dx
            py += ell * dy
            pz += ell * dz
            if max_order >= 0 and order >= max_order:
                break
            order += 1
            w *= c
            if w < WEIGHT_CUTOFF:
                if _uniform(state) < ROULETTE_SURVIVAL:
                    w /= ROULETTE_SURVIVAL
                else:
                    break
            mu = _sample_cosine(state, edges, bound, density, isotropic)
            ph = 2.0 * math.pi * _uniform(state)
            st = math.sqrt(max(0.0, 1.0 - mu * mu))
            cp = math.cos(ph)
            sp = math.sin(ph)
            if abs(dz) > 0.99999:
                sgn = 1.0 if dz > 0.0 else -1.0
                ndx = st * cp
                ndy = st * sp
                ndz = sgn * mu
            else:
                den = math.sqrt(1.0 - dz * dz)
                ndx = mu * dx + st * (dx * dz * cp - dy * sp) / den
                ndy = mu * dy + st * (dy * dz * cp + dx * sp) / den
                ndz = mu * dz - st * den * cp
            nrm = 1.0 / math.sqrt(ndx * ndx + ndy * ndy + ndz * ndz)
            dx = ndx * nrm
            dy = ndy * nrm
            dz = ndz * nrm
        for j in range(nsh):
            tot = 0.0
            for o in range(3):
                v = local[o, j]
                s1[o, j] += v
                s2[o, j] += v * v
                tot += v
            s2_tot[j] += tot * tot
            scat = local[1, j] + local[2, j]
            s2_scat[j] += scat * scat


def _batch_job(args):
    (seed, first, count, c, sampler_arrays, isotropic, radii2, max_order, beam, b) = args
    nsh = radii2.shape[0] - 1
    s1 = np.zeros((3, nsh))
    s2 = np.zeros((3, nsh))
    s2_tot = np.zeros(nsh)
    s2_scat = np.zeros(nsh)
    edges, bound, density = sampler_arrays
    _run_batch(np.uint64(seed), first, count, c, edges, bound, density, isotropic, radii2, max_order,
               beam, b[0], b[1], b[2], s1, s2, s2_tot, s2_scat)
    return s1, s2, s2_tot, s2_scat


def simulate(phase: PhaseFunction, config: McConfig, threads: int = 1) -> McEstimate:
    """Run ``config.histories`` histories and return shell-averaged densities."""
    threads = int(threads)
    if threads < 1:
        raise InputError(f"threads must be at least 1, got {threads}")
    sampler = CosineSampler(phase)
    isotropic = phase.L == 0
    radii2 = np.asarray(config.shells) ** 2
    beam = config.source == "beam"
    b = config.omega0.xyz
    jobs = []
    for first in range(0, config.histories, BATCH):
        count = min(BATCH, config.histories - first)
        jobs.append((config.seed, first, count, phase.c, (sampler.edges, sampler.bound, sampler.density),
                     isotropic, radii2, config.max_scatter_order, beam, b))
    if threads == 1 or len(jobs) == 1:
        results = [_batch_job(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_batch_job, jobs))
    nsh = len(config.shells) - 1
    s1 = np.zeros((3, nsh))
    s2 = np.zeros((3, nsh))
    s2_tot = np.zeros(nsh)
    s2_scat = np.zeros(nsh)
    for a, bb, t, s in results:  # fixed batch order
        s1 += a
        s2 += bb
        s2_tot += t
        s2_scat += s
    n = config.histories
    scale = (4.0 * math.pi if not beam else 1.0) / config.volumes

    def stats(first, second):
        m = first / n
        var = np.maximum(second / n - m * m, 0.0) / max(n - 1, 1)
        return m * scale, np.sqrt(var) * scale

    by_order, by_err = stats(s1, s2)
    mean = by_order[0] + by_order[1] + by_order[2]
    _, std = stats(s1.sum(axis=0), s2_tot)
    _, scat_err = stats(s1[1] + s1[2], s2_scat)
    return McEstimate(config, mean, std, by_order, by_err, scat_err)


def decompose_collision_orders(estimate: McEstimate) -> dict:
    """Per-order shell densities and standard errors: keys 0, 1 and '2+'."""
    return {
        0: (estimate.by_order[0], estimate.by_order_error[0]),
        1: (estimate.by_order[1], estimate.by_order_error[1]),
        "2+": (estimate.by_order[2], estimate.by_order_error[2]),
    }


@numba.njit(cache=True)
def _sample_many(seed, n, edges, bound, density, isotropic):
    out = np.empty(n)
    state = np.zeros(1, dtype=np.uint64)
    state[0] = _mix(np.uint64(seed))
    for i in range(n):
        out[i] = _sample_cosine(state, edges, bound, density, isotropic)
    return out


def sample_scattering_cosines(phase: PhaseFunction, n: int, seed: int = 0) -> np.ndarray:
    """Draw ``n`` scattering cosines with the simulator's sampler."""
    s = CosineSampler(phase)
    return _sample_many(np.uint64(seed), int(n), s.edges, s.bound, s.density, phase.L == 0)
