"""Numerical toolkit for mismatched rank-one matrix estimation.

Computes the limiting free energy, the overlap large-deviations rate
function and the Gaussian-equivalent coefficient triple of separable
channels, and verifies them against exact enumeration and Monte Carlo
at small sizes.
"""

from .cascade import RSBPoint, RSBSequence, cascade_expectation, cascade_x0, rpc_average, y_term
from .channel import (
    BetaTriple,
    ChannelModel,
    QuadratureRule,
    binary_channel,
    channel_from_json,
    check_consistency,
    gauss_hermite_rule,
    gauss_legendre_rule,
    gaussian_channel,
    laplace_channel,
    score_derivatives,
    universality_coefficients,
)
from .config import OptimizerConfig
from .gibbs import (
    ChainConfig,
    DisorderSample,
    OverlapHistogram,
    channel_free_energy,
    draw_disorder,
    empirical_rate,
    enumerate_gibbs,
    hamiltonian,
    metropolis_sample,
    zero_temperature_check,
)
from .measures import (
    DiscretePrior,
    OverlapPoint,
    empirical_distance,
    entropy_rate,
    in_constraint_set,
    log_laplace,
    make_discrete_prior,
    point_mass,
    rademacher,
)
from .variational import (
    ModelSpec,
    RateSurface,
    overlap_minimizer,
    parisi_objective,
    phi,
    phi_rs,
    rate_function,
    sup_phi,
)

__version__ = "0.1.0"
