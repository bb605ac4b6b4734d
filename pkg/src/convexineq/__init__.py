"""Numerical laboratory for functional inequalities of convex measures.

Measures with density proportional to ``phi(x)**(-beta)`` for a convex
potential ``phi`` (the generalized Cauchy family being the flagship case)
satisfy entropy, Beckner/weighted-Poincare and asymmetric covariance
inequalities with explicit constants and explicit admissibility
thresholds.  This package evaluates both sides of every such inequality by
deterministic quadrature and Monte Carlo, discretizes the weighted
generator to expose the spectral-gap and semigroup mechanisms behind them,
and stress-tests the pointwise matrix inequalities they rest on, including
counterexample search right above the sharp thresholds.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvexIneqError,
    DomainViolationError,
    EvaluationError,
    ParameterError,
    PreconditionError,
    StateError,
    TuningFailureError,
    UnsupportedDimensionError,
)
from .functionals import (
    ScalarField,
    coordinate_field,
    covariance,
    field_from_config,
    gaussian_bump_field,
    linear_field,
    phi_entropy,
    phi_weighted_energy,
    polynomial_field,
    tanh_field,
    variance,
    weighted_dirichlet,
)
from .generator import (
    DiscreteGenerator,
    FlowTrace,
    alpha_trace,
    assemble,
    eigensystem,
    evolve,
    solve_poisson,
    spectral_gap,
)
from .inequality_checks import (
    InequalityReport,
    SharpnessProbe,
    check_beckner,
    check_covariance,
    check_phi_entropy,
    gaussian_lsi_reference,
    limit_experiment_ccl,
    limit_experiment_lsi,
    logconcave_ccl_reference,
    sharpness_probe_beckner,
)
from .integrate import (
    QuadratureGrid,
    SampleBatch,
    expectation,
    measure_grid,
    sample_cauchy,
    sample_metropolis,
)
from .phi_functions import (
    PhiFunction,
    builtin_phis,
    condition_constant_K,
    is_admissible,
    p_beta,
    p_beta_n,
    phi_from_config,
    phi_power,
    phi_square,
    phi_xlogx,
)
from .pointwise_calculus import (
    ClaimInstance,
    ClaimVerdict,
    carre_du_champ,
    claim_F,
    claim_holds,
    find_claim_flip,
    find_violation,
    gamma2_bochner,
    gamma2_logconcave,
    laplacian_hs_bound,
    laplacian_suite,
    matrix_power_bound,
    mixed_suite,
    mixed_term_bound,
    power_suite,
)
from .potentials import (
    ConvexMeasure,
    ConvexPotential,
    cauchy_normalization,
    cauchy_potential,
    make_cauchy,
    make_limit_family,
    make_measure,
    measure_from_config,
    min_hessian_eigenvalue,
    quadratic_potential,
    quadratic_psi,
    standard_gaussian_psi,
)
