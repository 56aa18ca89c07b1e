"""Value types shared by every module: directions, scattering laws, wave vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DomainError, InputError, InvalidPhaseError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Direction:
    """Unit vector on the sphere given by polar ``theta`` and azimuth ``phi``.

    ``phi`` is reduced into [0, 2*pi) on construction.
    """

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        theta = float(self.theta)
        phi = float(self.phi)
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise DomainError(f"direction angles must be finite, got ({theta}, {phi})")
        if theta < 0.0 or theta > math.pi:
            raise DomainError(f"polar angle must lie in [0, pi], got {theta}")
        phi = math.fmod(phi, TWO_PI)
        if phi < 0.0:
            phi += TWO_PI
        if phi >= TWO_PI:
            phi = 0.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @property
    def mu(self) -> float:
        return math.cos(self.theta)

    @property
    def xyz(self) -> np.ndarray:
        s = math.sin(self.theta)
        return np.array([s * math.cos(self.phi), s * math.sin(self.phi), math.cos(self.theta)])

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        if v.shape != (3,):
            raise InputError(f"expected a 3-vector, got shape {v.shape}")
        n = float(np.linalg.norm(v))
        if n == 0.0 or not math.isfinite(n):
            raise DomainError("cannot take the direction of a zero or non-finite vector")
        x, y, z = v / n
        theta = math.acos(min(1.0, max(-1.0, z)))
        phi = math.atan2(y, x) if (x != 0.0 or y != 0.0) else 0.0
        return cls(theta, phi)

    @classmethod
    def parse(cls, text: str) -> "Direction":
        """Parse a ``"theta,phi"`` pair in radians."""
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 2:
            raise InputError(f"direction must be 'theta,phi' in radians, got {text!r}")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as exc:
            raise InputError(f"direction must be 'theta,phi' in radians, got {text!r}") from exc

    def dot(self, other: "Direction") -> float:
        return float(np.clip(self.xyz @ other.xyz, -1.0, 1.0))

    def __neg__(self) -> "Direction":
        return Direction(math.pi - self.theta, self.phi + math.pi)


Z_HAT = Direction(0.0, 0.0)


@dataclass(frozen=True)
class PhaseFunction:
    """Legendre-expanded scattering law with albedo ``c``.

    ``beta[0]`` must be 1 and ``|beta[l]| < 2l+1``. ``p(cos g) = sum_l beta_l P_l(cos g) / (4 pi)``.
    Non-negativity of the resulting density is not required here; the Monte
    Carlo sampler checks it separately.
    """

    c: float
    beta: tuple = field(default=(1.0,))

    def __post_init__(self):
        c = float(self.c)
        beta = tuple(float(b) for b in np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not math.isfinite(c) or not (0.0 < c < 1.0):
            raise InvalidPhaseError(f"albedo must satisfy 0 < c < 1, got {c}")
        if len(beta) == 0:
            raise InvalidPhaseError("beta must contain at least beta_0 = 1")
        if beta[0] != 1.0:
            raise InvalidPhaseError(f"beta_0 must equal 1, got {beta[0]}")
        for l, b in enumerate(beta[1:], start=1):
            if not math.isfinite(b) or abs(b) >= 2 * l + 1:
                raise InvalidPhaseError(f"|beta_{l}| must be < {2 * l + 1}, got {b}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "beta", beta)

    @property
    def L(self) -> int:
        return len(self.beta) - 1

    def beta_l(self, l: int) -> float:
        return self.beta[l] if 0 <= l <= self.L else 0.0

    def omega(self, l: int, m: int) -> float:
        """beta_l (l-m)!/(l+m)!, zero above the truncation degree."""
        if l > self.L or abs(m) > l:
            return 0.0
        return self.beta[l] * _factorial_ratio(l - m, l + m)

    def h(self, l: int) -> float:
        return 2 * l + 1 - (self.c * self.beta[l] if l <= self.L else 0.0)

    def with_albedo(self, c: float) -> "PhaseFunction":
        return PhaseFunction(c, self.beta)

    @classmethod
    def parse(cls, c, beta_text: str | Sequence[float]) -> "PhaseFunction":
        if isinstance(beta_text, str):
            try:
                beta = [float(b) for b in beta_text.split(",") if b.strip()]
            except ValueError as exc:
                raise InvalidPhaseError(f"cannot parse beta list {beta_text!r}") from exc
        else:
            beta = list(beta_text)
        return cls(float(c), tuple(beta))


@dataclass(frozen=True)
class FourierPoint:
    """Wave vector ``k * khat``; the spectral argument is ``z = i/k``."""

    k: float
    khat: Direction = Z_HAT

    def __post_init__(self):
        k = float(self.k)
        if not math.isfinite(k) or k <= 0.0:
            raise DomainError(f"wave number must be finite and positive, got {k}")
        object.__setattr__(self, "k", k)
        if not isinstance(self.khat, Direction):
            object.__setattr__(self, "khat", Direction(*self.khat))

    @property
    def z(self) -> complex:
        return complex(0.0, 1.0 / self.k)

    @property
    def vector(self) -> np.ndarray:
        return self.k * self.khat.xyz


def _factorial_ratio(a: int, b: int) -> float:
    """a!/b! for non-negative integers, correctly rounded."""
    if a == b:
        return 1.0
    if a > b:
        return float(math.prod(range(b + 1, a + 1)))
    return 1 / math.prod(range(a + 1, b + 1))


def as_direction(value) -> Direction:
    if isinstance(value, Direction):
        return value
    if isinstance(value, str):
        return Direction.parse(value)
    arr = np.asarray(value, dtype=float)
    if arr.shape == (2,):
        return Direction(float(arr[0]), float(arr[1]))
    if arr.shape == (3,):
        return Direction.from_vector(arr)
    raise InputError(f"cannot interpret {value!r} as a direction")
