"""Shared fixtures: a small polished run and the session benchmark solve.

The benchmark fixture runs the full two-phase protocol on the 64x64
problem once per session (about two minutes) and is shared by every
test that needs a converged reference solution at scale.
"""

import numpy as np
import pytest

from bvcontrol.grid import ScalarField, build_grid
from bvcontrol.objective import ProblemSpec, solve_problem_state
from bvcontrol.solver import two_phase_solve
from bvcontrol.state import NonlinearitySpec


def benchmark_target(X, Y):
    # smooth two-lobe target vanishing at the boundary
    taper = 16.0 * X * (1.0 - X) * Y * (1.0 - Y)
    b1 = np.exp(-25.0 * ((X - 0.35) ** 2 + (Y - 0.4) ** 2))
    b2 = np.exp(-25.0 * ((X - 0.7) ** 2 + (Y - 0.65) ** 2))
    return 0.7 * taper * (b1 - 0.8 * b2)


def benchmark_spec(n, alpha=1e-3, gamma=1e-4, beta=0.0, norm_choice="l2"):
    g = build_grid(n, n, (0.125, 0.875, 0.125, 0.875))
    return ProblemSpec(
        grid=g,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        y_d=ScalarField.from_function(g, benchmark_target),
        f=NonlinearitySpec(c0=1.0, a=1.0, d0=0.0),
        norm_choice=norm_choice,
        state_tol=1e-11,
    )


@pytest.fixture(scope="session")
def polished_run():
    spec = benchmark_spec(16)
    report = two_phase_solve(spec, burnin=12, stages=5, grad_tol=1e-9, max_inner=400)
    state = solve_problem_state(report.u, spec, y0=report.y)
    return spec, report, state


@pytest.fixture(scope="session")
def benchmark_run():
    spec = benchmark_spec(64)
    report = two_phase_solve(spec, burnin=18, stages=10, grad_tol=1e-8, max_inner=400)
    state = solve_problem_state(report.u, spec, y0=report.y)
    return spec, report, state
