"""Green's function of the monoenergetic linear Boltzmann equation in an
infinite homogeneous medium with Legendre-expanded anisotropic scattering."""

from .exceptions import (
    BoltzGreenError,
    ConventionError,
    InputError,
    NumericalConsistencyError,
    NumericalError,
)
from .fourier_kernel import build_L_matrix, build_P_vector, compute_M, psi_bar_matrix_route
from .inversion import (
    QuadratureSpec,
    energy_density,
    invert_bessel,
    invert_full,
    isotropic_reference_density,
    once_collided_term,
    uncollided_term,
)
from .montecarlo import McConfig, McEstimate, decompose_collision_orders, simulate
from .spectral import dispersion_lambda, kappa_lm, mode_table, psi_bar_ladder, psi_bar_seed
from .types import Direction, FourierPoint, PhaseFunction

__version__ = "0.1.0"

__all__ = [
    "BoltzGreenError",
    "ConventionError",
    "InputError",
    "NumericalConsistencyError",
    "NumericalError",
    "Direction",
    "FourierPoint",
    "PhaseFunction",
    "QuadratureSpec",
    "McConfig",
    "McEstimate",
    "build_L_matrix",
    "build_P_vector",
    "compute_M",
    "psi_bar_matrix_route",
    "dispersion_lambda",
    "psi_bar_seed",
    "psi_bar_ladder",
    "kappa_lm",
    "mode_table",
    "uncollided_term",
    "once_collided_term",
    "energy_density",
    "isotropic_reference_density",
    "invert_full",
    "invert_bessel",
    "simulate",
    "decompose_collision_orders",
]
