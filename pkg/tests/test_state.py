import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from bvcontrol.grid import ControlField, ScalarField, build_grid, embed, inner_product, restrict
from bvcontrol.state import (
    EllipticOperator,
    NonlinearitySpec,
    laplacian_matrix,
    solve_adjoint,
    solve_linearized,
    solve_second_linearized,
    solve_state,
)

CUBIC = NonlinearitySpec(c0=1.0, a=1.0)


def manufactured_forcing(X, Y):
    # u := (-Laplace + id + cube)(sin(pi x) sin(pi y)) for f = y + y^3
    ystar = np.sin(np.pi * X) * np.sin(np.pi * Y)
    return (2.0 * np.pi ** 2 + 1.0) * ystar + ystar ** 3


class TestNonlinearitySpec:
    def test_rejects_non_monotone(self):
        with pytest.raises(ValueError):
            NonlinearitySpec(a=-1.0)
        with pytest.raises(ValueError):
            NonlinearitySpec(c0=-0.5)

    def test_derivatives(self):
        g = build_grid(8, 8)
        y = np.linspace(-1, 1, g.nx * g.ny).reshape(g.nx, g.ny)
        f = NonlinearitySpec(c0=2.0, a=3.0, d0=0.5)
        np.testing.assert_allclose(f.f(y, g), 2 * y + 3 * y ** 3 + 0.5)
        np.testing.assert_allclose(f.fy(y, g), 2 + 9 * y ** 2)
        np.testing.assert_allclose(f.fyy(y, g), 18 * y)
        assert not f.is_affine
        assert NonlinearitySpec(c0=1.0).is_affine


class TestSolveState:
    def test_zero_data_zero_solution(self):
        g = build_grid(16, 16, (0.2, 0.8, 0.2, 0.8))
        sol = solve_state(ControlField.zeros(g), CUBIC, tol=1e-12)
        assert np.all(sol.y.values == 0.0)
        assert sol.newton_iters <= 1
        assert sol.residual_norm <= 1e-12

    def test_manufactured_solution_order(self):
        errs = {}
        for n in (31, 63):
            g = build_grid(n, n)
            u = ControlField.from_function(g, manufactured_forcing)
            sol = solve_state(u, CUBIC, tol=1e-12)
            X, Y = g.interior_mesh()
            ystar = np.sin(np.pi * X) * np.sin(np.pi * Y)
            errs[n] = np.max(np.abs(sol.y.values - ystar))
        ratio = errs[31] / errs[63]
        assert 3.6 <= ratio <= 4.4

    def test_affine_matches_direct_solve(self):
        g = build_grid(24, 24, (0.1, 0.9, 0.2, 0.7))
        rng = np.random.default_rng(0)
        u = ControlField(g, rng.standard_normal((g.mx, g.my)))
        f = NonlinearitySpec(c0=2.0, d0=0.3)
        sol = solve_state(u, f, tol=1e-13)
        A = laplacian_matrix(g) + sp.diags(np.full(g.nx * g.ny, 2.0))
        rhs = embed(u).values.ravel() - 0.3
        y_direct = spla.spsolve(A.tocsc(), rhs).reshape(g.nx, g.ny)
        assert np.max(np.abs(sol.y.values - y_direct)) <= 1e-10

    def test_residual_reported(self):
        g = build_grid(16, 16)
        u = ControlField.constant(g, 5.0)
        sol = solve_state(u, CUBIC, tol=1e-11)
        A = laplacian_matrix(g)
        r = (A @ sol.y.values.ravel()).reshape(g.nx, g.ny) + CUBIC.f(sol.y.values, g) - embed(u).values
        assert g.h * np.linalg.norm(r) == pytest.approx(sol.residual_norm, rel=1e-6, abs=1e-14)
        assert sol.residual_norm <= 1e-11

    def test_warm_start_converges_fast(self):
        g = build_grid(24, 24)
        u = ControlField.from_function(g, manufactured_forcing)
        sol = solve_state(u, CUBIC, tol=1e-12)
        u2 = ControlField(g, u.values * 1.001)
        warm = solve_state(u2, CUBIC, tol=1e-12, y0=sol.y)
        cold = solve_state(u2, CUBIC, tol=1e-12)
        assert warm.newton_iters <= cold.newton_iters
        assert warm.newton_iters <= 2

    def test_max_bound_stable_under_refinement(self):
        # Desk surrogate of the uniform bound: max|y_u| moves < 5% from h to h/2.
        def forcing(X, Y):
            return 40.0 * np.exp(-40 * ((X - 0.4) ** 2 + (Y - 0.55) ** 2))

        maxes = {}
        for n in (31, 63):
            g = build_grid(n, n)
            u = ControlField.from_function(g, forcing)
            maxes[n] = np.max(np.abs(solve_state(u, CUBIC, tol=1e-12).y.values))
        assert abs(maxes[31] - maxes[63]) / maxes[63] < 0.05

    def test_bounded_family_bounded_states(self):
        g = build_grid(24, 24)
        for c in (-8.0, -1.0, 1.0, 8.0):
            u = ControlField.constant(g, c)
            sol = solve_state(u, CUBIC, tol=1e-11)
            assert np.max(np.abs(sol.y.values)) < 10.0


class TestLinearizedAndAdjoint:
    def test_zero_direction(self):
        g = build_grid(16, 16)
        sol = solve_state(ControlField.constant(g, 1.0), CUBIC, tol=1e-12)
        z = solve_linearized(sol.y, ControlField.zeros(g), CUBIC, operator=sol.operator)
        assert np.all(z.values == 0.0)

    def test_affine_linearized_is_exact_difference(self):
        g = build_grid(20, 20, (0.15, 0.85, 0.15, 0.85))
        rng = np.random.default_rng(1)
        f = NonlinearitySpec(c0=1.5, d0=-0.2)
        u = ControlField(g, rng.standard_normal((g.mx, g.my)))
        v = ControlField(g, rng.standard_normal((g.mx, g.my)))
        sol = solve_state(u, f, tol=1e-13)
        sol2 = solve_state(ControlField(g, u.values + v.values), f, tol=1e-13)
        z = solve_linearized(sol.y, v, f, operator=sol.operator)
        assert np.max(np.abs(sol2.y.values - sol.y.values - z.values)) <= 1e-10

    def test_taylor_defect_first_order(self):
        g = build_grid(24, 24)
        rng = np.random.default_rng(2)
        u = ControlField(g, rng.standard_normal((g.mx, g.my)))
        v = ControlField(g, rng.standard_normal((g.mx, g.my)))
        sol = solve_state(u, CUBIC, tol=1e-13)
        z = solve_linearized(sol.y, v, CUBIC, operator=sol.operator)

        def defect(rho):
            pert = solve_state(
                ControlField(g, u.values + rho * v.values), CUBIC, tol=1e-13, y0=sol.y
            )
            return g.h * np.linalg.norm(pert.y.values - sol.y.values - rho * z.values)

        d1, d2 = defect(1e-2), defect(5e-3)
        assert 3.5 <= d1 / d2 <= 4.5

    def test_second_linearized_symmetry_and_affine_zero(self):
        g = build_grid(16, 16)
        rng = np.random.default_rng(3)
        u = ControlField(g, rng.standard_normal((g.mx, g.my)))
        v = ControlField(g, rng.standard_normal((g.mx, g.my)))
        w = ControlField(g, rng.standard_normal((g.mx, g.my)))
        sol = solve_state(u, CUBIC, tol=1e-13)
        z_v = solve_linearized(sol.y, v, CUBIC, operator=sol.operator)
        z_w = solve_linearized(sol.y, w, CUBIC, operator=sol.operator)
        z_vw = solve_second_linearized(sol.y, z_v, z_w, CUBIC, operator=sol.operator)
        z_wv = solve_second_linearized(sol.y, z_w, z_v, CUBIC, operator=sol.operator)
        assert np.max(np.abs(z_vw.values - z_wv.values)) <= 1e-12

        f_aff = NonlinearitySpec(c0=1.0)
        sol_a = solve_state(u, f_aff, tol=1e-13)
        za_v = solve_linearized(sol_a.y, v, f_aff, operator=sol_a.operator)
        za_vw = solve_second_linearized(sol_a.y, za_v, za_v, f_aff, operator=sol_a.operator)
        assert np.all(za_vw.values == 0.0)

    def test_second_order_taylor_defect(self):
        g = build_grid(20, 20)
        rng = np.random.default_rng(4)
        u = ControlField(g, rng.standard_normal((g.mx, g.my)))
        v = ControlField(g, rng.standard_normal((g.mx, g.my)))
        sol = solve_state(u, CUBIC, tol=1e-13)
        z_v = solve_linearized(sol.y, v, CUBIC, operator=sol.operator)
        z_vv = solve_second_linearized(sol.y, z_v, z_v, CUBIC, operator=sol.operator)

        def defect(rho):
            pert = solve_state(
                ControlField(g, u.values + rho * v.values), CUBIC, tol=5e-14, y0=sol.y
            )
            return g.h * np.linalg.norm(
                pert.y.values - sol.y.values - rho * z_v.values - 0.5 * rho ** 2 * z_vv.values
            )

        d1, d2 = defect(2e-2), defect(1e-2)
        assert 6.5 <= d1 / d2 <= 9.5  # O(rho^3): halving rho divides by ~8

    def test_adjoint_zero_when_target_met(self):
        g = build_grid(16, 16)
        sol = solve_state(ControlField.constant(g, 2.0), CUBIC, tol=1e-12)
        phi = solve_adjoint(sol.y, sol.y, CUBIC, operator=sol.operator)
        assert np.all(phi.values == 0.0)

    def test_adjoint_identity(self):
        # <y_u - y_d, z_v>_Omega = <phi_u, v>_omega: the discrete transpose identity
        g = build_grid(24, 24, (0.2, 0.8, 0.25, 0.75))
        rng = np.random.default_rng(5)
        u = ControlField(g, rng.standard_normal((g.mx, g.my)))
        y_d = ScalarField(g, rng.standard_normal((g.nx, g.ny)))
        sol = solve_state(u, CUBIC, tol=1e-13)
        phi = solve_adjoint(sol.y, y_d, CUBIC, operator=sol.operator)
        for _ in range(10):
            v = ControlField(g, rng.standard_normal((g.mx, g.my)))
            z_v = solve_linearized(sol.y, v, CUBIC, operator=sol.operator)
            lhs = inner_product(ScalarField(g, sol.y.values - y_d.values), z_v)
            rhs = inner_product(restrict(phi), v)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1e-30)


class TestEllipticOperator:
    def test_cg_matches_direct(self):
        g = build_grid(31, 31)
        rng = np.random.default_rng(6)
        q = rng.uniform(0.0, 3.0, size=(g.nx, g.ny))
        rhs = rng.standard_normal((g.nx, g.ny))
        x_cg = EllipticOperator(g, q, method="cg").solve(rhs)
        x_direct = EllipticOperator(g, q, method="direct").solve(rhs)
        assert np.max(np.abs(x_cg - x_direct)) <= 1e-9 * max(1.0, np.max(np.abs(x_direct)))

    def test_cg_residual_invariant(self):
        g = build_grid(31, 31)
        rng = np.random.default_rng(7)
        op = EllipticOperator(g, np.ones((g.nx, g.ny)), method="cg")
        for _ in range(3):
            op.solve(rng.standard_normal((g.nx, g.ny)))
            assert op.last_rel_residual <= 1e-11

    def test_rejects_negative_coefficient(self):
        g = build_grid(8, 8)
        q = np.zeros((g.nx, g.ny))
        q[0, 0] = -1.0
        with pytest.raises(ValueError):
            EllipticOperator(g, q)

    def test_spd_symmetry(self):
        g = build_grid(8, 8)
        A = (laplacian_matrix(g) + sp.diags(np.ones(g.nx * g.ny))).toarray()
        np.testing.assert_allclose(A, A.T)
        assert np.all(np.linalg.eigvalsh(A) > 0)
