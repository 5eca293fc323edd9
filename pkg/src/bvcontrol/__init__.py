"""Total-variation regularized optimal control of semilinear elliptic PDEs.

The library discretizes, solves, and verifies control problems of the form

    min over u in BV(omega):
        1/2 ||y_u - y_d||^2_{L2(Omega)} + alpha TV(u)
        + beta/2 (int_omega u)^2 + gamma/2 ||u||^2_{L2(omega)}

subject to -Laplace(y) + f(x, y) = u chi_omega on the unit square with
homogeneous Dirichlet data, where TV is the BV seminorm in either the
isotropic (pointwise Euclidean) or anisotropic (componentwise) convention.

Modules
-------
grid        interior mesh, control window, exact-adjoint difference operators
measures    finite vector measures: norms, decompositions, subdifferentials
state       semilinear state equation, linearized and adjoint solves
objective   smooth cost, its derivatives, exact and Huber-smoothed TV
solver      homotopy path over (eps, delta) with a preconditioned inner loop
certificate first-order stationarity certificates and plateau structure
soc         second-order cone sampling, necessary/sufficient condition scans
cli         config-driven command line entry point
"""

from .grid import (
    ControlField,
    GradField,
    Grid,
    GridError,
    ScalarField,
    build_grid,
    centered,
    divergence,
    embed,
    gradient,
    inner_product,
    mean,
    norm,
    restrict,
)
from .state import (
    NonConvergence,
    NonlinearitySpec,
    solve_adjoint,
    solve_linearized,
    solve_state,
)
from .objective import (
    ProblemSpec,
    eval_F,
    eval_J,
    eval_TV,
    eval_TV_smoothed,
    grad_F,
    hess_F_bilinear,
    solve_problem_state,
    tv_directional_derivative,
)
from .solver import (
    HomotopySchedule,
    SolveReport,
    dual_from_smoothed,
    homotopy_solve,
    two_phase_solve,
)
from .certificate import (
    Certificate,
    StructureReport,
    check_first_order,
    refine_dual,
    structure_report,
)
from .soc import (
    SOCConfig,
    SOCReport,
    curvature_term,
    necessary_condition_check,
    sample_critical_directions,
    sufficient_condition_scan,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "GridError",
    "ScalarField",
    "ControlField",
    "GradField",
    "build_grid",
    "gradient",
    "divergence",
    "inner_product",
    "norm",
    "mean",
    "centered",
    "embed",
    "restrict",
    "NonConvergence",
    "NonlinearitySpec",
    "solve_state",
    "solve_linearized",
    "solve_adjoint",
    "ProblemSpec",
    "solve_problem_state",
    "eval_F",
    "eval_J",
    "eval_TV",
    "eval_TV_smoothed",
    "grad_F",
    "hess_F_bilinear",
    "tv_directional_derivative",
    "HomotopySchedule",
    "SolveReport",
    "homotopy_solve",
    "two_phase_solve",
    "dual_from_smoothed",
    "Certificate",
    "StructureReport",
    "check_first_order",
    "refine_dual",
    "structure_report",
    "SOCConfig",
    "SOCReport",
    "sample_critical_directions",
    "necessary_condition_check",
    "curvature_term",
    "sufficient_condition_scan",
    "__version__",
]
