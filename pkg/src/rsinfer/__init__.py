"""Random-set inference with interval data: priors, updating, sampling, diagnostics."""

from .core import (
    Polytope,
    SampleBundle,
    cdf_bounds,
    direction_grid,
    estimate_bounds,
    estimate_capacity,
    estimate_rsd,
    expected_support,
    make_direction,
    selection_expectation,
)
from .inference import (
    MeasurementModel,
    Noise,
    TotalConflictError,
    UnnormalizedDensity,
    capacity_transform_prior,
    data_set_membership,
    dempster_combine,
    likelihood,
    monte_carlo_combine,
    posterior_capacity_density,
    posterior_membership,
)
from .models import (
    Distribution,
    DomainError,
    MassFunction,
    PBox,
    PBoxDim,
    PriorSpec,
    RandomVariable,
    bel_pl,
    mass_to_random_set,
    pbox_to_random_set,
    prior_sampler,
)
from .sampler import (
    AlgoOneConfig,
    AtomSet,
    McmcConfig,
    PosteriorDiscreteSample,
    PosteriorSamples,
    algorithm_one,
    derive_seed,
    expected_support_posterior,
    hausdorff_convergence,
    mh_sample,
    mse_convergence,
    posterior_bounds,
    posterior_cdf_bounds,
)
from .sets import (
    BoxUnion,
    Empty,
    IntervalBox,
    Points,
    contains,
    hausdorff_distance,
    hits,
    intersect,
    support_function,
)
from .truss import TABLE1, TrussGeometry, TrussModel, TrussParams, generate_virtual_data, pratt_truss, solve_displacements

__version__ = "0.1.0"

__all__ = [
    "AlgoOneConfig",
    "AtomSet",
    "BoxUnion",
    "Distribution",
    "DomainError",
    "Empty",
    "IntervalBox",
    "MassFunction",
    "McmcConfig",
    "MeasurementModel",
    "Noise",
    "PBox",
    "PBoxDim",
    "Points",
    "Polytope",
    "PosteriorDiscreteSample",
    "PosteriorSamples",
    "PriorSpec",
    "RandomVariable",
    "SampleBundle",
    "TABLE1",
    "TotalConflictError",
    "TrussGeometry",
    "TrussModel",
    "TrussParams",
    "UnnormalizedDensity",
    "algorithm_one",
    "bel_pl",
    "capacity_transform_prior",
    "cdf_bounds",
    "contains",
    "data_set_membership",
    "dempster_combine",
    "derive_seed",
    "direction_grid",
    "estimate_bounds",
    "estimate_capacity",
    "estimate_rsd",
    "expected_support",
    "expected_support_posterior",
    "generate_virtual_data",
    "hausdorff_convergence",
    "hausdorff_distance",
    "hits",
    "intersect",
    "likelihood",
    "make_direction",
    "mass_to_random_set",
    "mh_sample",
    "monte_carlo_combine",
    "mse_convergence",
    "pbox_to_random_set",
    "posterior_bounds",
    "posterior_capacity_density",
    "posterior_cdf_bounds",
    "posterior_membership",
    "pratt_truss",
    "prior_sampler",
    "selection_expectation",
    "solve_displacements",
    "support_function",
]
