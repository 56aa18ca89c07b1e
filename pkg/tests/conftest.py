import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def rotation(theta, phi):
    """Rz(phi) Ry(theta): columns are the axes of the frame whose z-axis is (theta, phi)."""
    ct, st, cp, sp = math.cos(theta), math.sin(theta), math.cos(phi), math.sin(phi)
    rz = np.array([[cp, -sp, 0], [sp, cp, 0], [0, 0, 1]])
    ry = np.array([[ct, 0, st], [0, 1, 0], [-st, 0, ct]])
    return rz @ ry


def unit(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


def polar(v):
    v = np.asarray(v, float)
    return math.acos(max(-1.0, min(1.0, v[2] / np.linalg.norm(v)))), math.atan2(v[1], v[0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
