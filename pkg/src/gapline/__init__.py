"""Numerical laboratory for the fundamental gap lambda_2 - lambda_1 of
-u'' + V(x) u = lambda w(x) u on [0, pi] with Dirichlet conditions."""

from .classes import (
    Affine,
    ConcaveWeight,
    Constant,
    ConvexPotential,
    Free,
    PiecewiseLinearFn,
    affine,
    affine_through,
    constant,
    from_spec,
    make_piecewise_linear,
    project_convex,
    sample_on_grid,
    sample_random_concave,
    sample_random_convex,
)
from .errors import (
    ClassViolation,
    GaplineError,
    GridMismatch,
    MoreThanTwoCrossings,
    PropertyViolation,
    SolverError,
    UnsortedKnots,
    ValidationError,
)
from .gap import (
    GapReport,
    HomotopyFamily,
    crossing_points,
    fh_derivative,
    fundamental_gap,
    g_identity_residual,
    homotopy_gap_derivative,
    moment_bound_check,
    ratio_monotonicity_report,
    weighted_crossing_points,
)
from .optimize import (
    ConstancyCertificate,
    OptimizeOptions,
    OptimizeTrace,
    Verdict,
    certify,
    constancy_certificate,
    critical_point_residual,
    minimize_gap_over_convex,
    reduce_to_affine_potential,
    reduce_to_affine_weight,
)
from .sturm import (
    DiscreteOperator,
    EigenPair,
    Grid,
    SampledFunction,
    assemble,
    endpoint_derivative,
    quadrature,
    richardson_eigenvalues,
    solve,
    solve_lowest_two,
)

__version__ = "0.1.0"
