"""Entropic tilting of prior models under expert views.

Updates a prior distribution to the closest posterior, in relative entropy
or in a polynomial divergence that respects fat tails, subject to moment
constraints, a prescribed marginal, or probabilities of disjoint events.
"""

from .dist_core import Density, ExpectationEngine, SampleCloud, expectation, reweight, sample
from .divergences import (
    DivergenceValue,
    i_divergence,
    polynomial_divergence,
    renyi_from_polynomial,
    total_variation,
    tsallis_from_polynomial,
)
from .errors import (
    ConfigError,
    DegenerateWeights,
    DivergentIntegral,
    EntiltError,
    Infeasible,
    InvalidInput,
    NotAbsolutelyContinuous,
    RootNotBracketed,
    SingularBlock,
    SingularJacobian,
    SupportMismatch,
)
from .gaussian_toolkit import (
    GaussianPrior,
    MarkowitzPosterior,
    markowitz_update,
    tail_ratio_diagnostic,
    var_estimate,
)
from .marginal_update import (
    ChangeOfVariables,
    ConditionalTilt,
    MarginalView,
    lift_views,
    solve_marginal_i,
    solve_marginal_poly,
)
from .tilt_solvers import (
    ConstraintSet,
    SolveReport,
    TiltedPosterior,
    disjoint_set_update,
    feasibility_bound,
    interval_partition,
    solve_i_divergence,
    solve_polynomial,
    solve_single_constraint_poly,
    suggest_beta,
    truncated_pareto_diagnostic,
)
from .wls_perturb import PerturbedSolution, distance_curve, solve_perturbed

__version__ = "0.1.0"
