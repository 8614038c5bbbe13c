"""Central-moment and tail bounds from Stein couplings, with Monte Carlo checks."""

from .bounds import (
    BoundValue,
    NormProfile,
    TailProfile,
    binomial_A,
    cor_bounded_tail,
    cor_normal_tail,
    er_constant,
    er_moment_bound,
    h_k,
    local_dep_moment_bound,
    local_dep_tail,
    markov_tail,
    moment_bound_from_tail,
    neighbourhood_norm_bound,
    optimized_markov_tail,
    prop_independent_bound,
    size_bias_tail,
    thm1_moment_bound,
    thm2_moment_bound,
    thm3_moment_bound,
    thm4_normal_comparison_bound,
    weak_concentration_scale,
)
from .core import (
    ConfigError,
    CouplingParams,
    CouplingSample,
    DomainError,
    MomentEstimate,
    MomentOrder,
    NumericError,
    c1,
    empirical_norm,
    normal_abs_norm,
)
from .couplings import ERParams, IndependentSumParams, ModelSpec, RunsParams
from .engine import check_stein_identity, estimate_central_moments, estimate_tail, verify_bounds
from .graphs import SparseGraph, StatisticSpec, generate_er, r_neighbourhood

__version__ = "0.1.0"
