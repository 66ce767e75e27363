"""Common-shock bivariate discrete phase-type (CDPH) distributions."""

from .cdph import (
    DEFAULT_SHIFT,
    CdphParams,
    LatentTriple,
    cdph_sample,
    cdph_sample_many,
    common_shock,
    covariance,
    cross_moment,
    factorial_moment_latent,
    joint_pgf,
    joint_pgf_latent,
    joint_pmf,
    joint_pmf_conditional,
    marginal,
    pmf_grid,
    psi,
    random_params,
    shifted_moment,
    shifted_pmf,
    support_bounds,
)
from .closures import build_coupled_chain, max_dph, min_dph, mixture, sum_dph, sum_of_vectors
from .compound import (
    LaplacePoint,
    MphStarParams,
    build_compound_mphstar,
    compound_laplace,
    independent_mphstar,
    mphstar_laplace,
)
from .dph import DphParams, dph_factorial_moment, dph_pgf, dph_pmf, dph_sample
from .estimate import CountDataset, EmConfig, SufficientStats, e_step, em_fit, log_likelihood, mle_fully_observed
from .linalg import NumericalError

__all__ = [name for name in dir() if not name.startswith("_")]
