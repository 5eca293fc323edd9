import numpy as np
import pytest

from bvcontrol.certificate import (
    Certificate,
    check_first_order,
    plateau_labels,
    refine_dual,
    structure_report,
)
from bvcontrol.grid import ControlField, GradField, ScalarField, build_grid, gradient
from bvcontrol.objective import ProblemSpec, eval_TV, solve_problem_state
from bvcontrol.solver import dual_from_smoothed, two_phase_solve
from bvcontrol.state import NonlinearitySpec, solve_state

class TestCheckFirstOrder:
    def test_matches_solver_polish_gradient(self, polished_run):
        # the polish stage minimizes F + alpha TV_delta, so its recorded
        # gradient norm is exactly the certificate residual for the Huber
        # dual the solver itself produced
        spec, report, state = polished_run
        cert = check_first_order(report.u, report.lam, spec, state=state)
        assert cert.residual_abs == pytest.approx(report.stages[-1].grad_norm, rel=1e-9)

    def test_rel_is_abs_over_scale(self, polished_run):
        spec, report, state = polished_run
        cert = check_first_order(report.u, report.lam, spec, state=state)
        assert cert.residual_rel == pytest.approx(cert.residual_abs / cert.scale, rel=1e-14)
        assert cert.scale > 0.0

    def test_solver_dual_is_admissible(self, polished_run):
        spec, report, state = polished_run
        cert = check_first_order(report.u, report.lam, spec, state=state)
        assert cert.dual_overshoot <= 1e-15
        assert cert.pairing_gap >= -1e-12
        assert cert.pairing_gap <= report.delta_final * spec.grid.omega_area + 1e-10
        assert cert.tv_value == pytest.approx(eval_TV(report.u, spec.norm_choice), rel=1e-12)

    def test_inflated_dual_reports_overshoot(self, polished_run):
        spec, report, state = polished_run
        bad = GradField(spec.grid, 1.5 * report.lam.gx, 1.5 * report.lam.gy)
        cert = check_first_order(report.u, bad, spec, state=state)
        assert cert.dual_max == pytest.approx(1.5, abs=1e-12)
        assert cert.dual_overshoot == pytest.approx(0.5, abs=1e-12)

    def test_stationary_zero_control(self):
        # y_d produced by u = 0 makes u = 0 stationary with lambda = 0:
        # every certificate quantity vanishes identically
        g = build_grid(12, 12)
        f = NonlinearitySpec(c0=1.0, a=0.5, d0=0.3)
        y_d = solve_state(ControlField.zeros(g), f, tol=1e-13).y
        spec = ProblemSpec(grid=g, alpha=1e-3, gamma=1e-2, y_d=y_d, f=f, state_tol=1e-13)
        u = ControlField.zeros(g)
        lam = GradField.zeros(g)
        cert = check_first_order(u, lam, spec)
        assert cert.residual_abs <= 1e-12
        assert cert.pairing_gap == 0.0
        assert cert.tv_value == 0.0
        assert cert.dual_max == 0.0
        assert cert.active_cells == 0
        assert cert.saturation_fraction == 1.0

    def test_saturation_on_clean_jump(self):
        g = build_grid(16, 16)
        u = ControlField.from_function(g, lambda X, Y: (X >= 0.5).astype(float))
        lam = dual_from_smoothed(u, 1e-8)
        f = NonlinearitySpec(c0=1.0)
        spec = ProblemSpec(grid=g, alpha=1e-3, gamma=1e-3,
                           y_d=ScalarField.zeros(g), f=f)
        cert = check_first_order(u, lam, spec)
        assert cert.saturation_fraction == 1.0
        assert cert.active_cells > 0

    def test_linf_reports_sign_fractions(self, polished_run):
        g = build_grid(12, 12)
        u = ControlField.from_function(g, lambda X, Y: (X >= 0.5).astype(float))
        lam = dual_from_smoothed(u, 1e-8, "linf")
        spec = ProblemSpec(grid=g, alpha=1e-3, gamma=1e-3,
                           y_d=ScalarField.zeros(g), f=NonlinearitySpec(c0=1.0),
                           norm_choice="linf")
        cert = check_first_order(u, lam, spec)
        assert cert.norm_choice == "linf"
        for frac in (cert.sign_pos_x, cert.sign_neg_x, cert.sign_pos_y, cert.sign_neg_y):
            assert frac is not None and 0.0 <= frac <= 1.0
        l2spec, l2rep, l2state = polished_run
        l2cert = check_first_order(l2rep.u, l2rep.lam, l2spec, state=l2state)
        assert l2cert.sign_pos_x is None

    def test_json_keys(self, polished_run):
        spec, report, state = polished_run
        doc = check_first_order(report.u, report.lam, spec, state=state).as_json()
        for key in ("residual_abs", "residual_rel", "scale", "dual_max",
                    "dual_overshoot", "pairing_gap", "tv_value",
                    "saturation_fraction", "active_cells", "active_fraction",
                    "theta", "stol", "norm_choice"):
            assert key in doc


class TestRefineDual:
    def test_improves_residual_and_stays_admissible(self, polished_run):
        spec, report, state = polished_run
        raw = check_first_order(report.u, report.lam, spec, state=state)
        lam = refine_dual(report.u, spec, report.delta_final, lam0=report.lam, state=state)
        cert = check_first_order(report.u, lam, spec, state=state)
        assert cert.residual_abs < 0.1 * raw.residual_abs
        assert cert.dual_overshoot <= 1e-9
        budget = report.delta_final * spec.grid.omega_area + 1e-8
        assert cert.pairing_gap <= budget
        assert cert.pairing_gap >= -1e-12

    def test_near_machine_residual_on_small_problem(self, polished_run):
        spec, report, state = polished_run
        lam = refine_dual(report.u, spec, report.delta_final, lam0=report.lam, state=state)
        cert = check_first_order(report.u, lam, spec, state=state)
        assert cert.residual_rel <= 1e-5
        assert cert.saturation_fraction >= 0.95

    def test_cold_start_without_seed_dual(self, polished_run):
        spec, report, state = polished_run
        lam = refine_dual(report.u, spec, report.delta_final, state=state)
        cert = check_first_order(report.u, lam, spec, state=state)
        assert cert.dual_overshoot <= 1e-9
        assert cert.residual_rel <= 1e-4

    def test_rejects_bad_inputs(self, polished_run):
        spec, report, _ = polished_run
        with pytest.raises(ValueError):
            refine_dual(report.u, spec, 0.0)
        zero_alpha = ProblemSpec(grid=spec.grid, alpha=0.0, gamma=1e-3,
                                 y_d=spec.y_d, f=spec.f)
        with pytest.raises(ValueError):
            refine_dual(report.u, zero_alpha, 1e-6)

    def test_linf_branch(self):
        g = build_grid(12, 12)
        spec = ProblemSpec(grid=g, alpha=1e-3, gamma=1e-3,
                           y_d=ScalarField.from_function(
                               g, lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y)),
                           f=NonlinearitySpec(c0=1.0), norm_choice="linf")
        rep = two_phase_solve(spec, burnin=10, stages=4, grad_tol=1e-9, max_inner=400)
        state = solve_problem_state(rep.u, spec, y0=rep.y)
        lam = refine_dual(rep.u, spec, rep.delta_final, lam0=rep.lam, state=state)
        cert = check_first_order(rep.u, lam, spec, state=state)
        assert cert.dual_overshoot <= 1e-9
        raw = check_first_order(rep.u, rep.lam, spec, state=state)
        assert cert.residual_abs <= raw.residual_abs


class TestStructure:
    def test_two_plateau_rectangle(self):
        g = build_grid(20, 20)
        X, Y = g.omega_mesh()
        inside = (X > 0.3) & (X < 0.7) & (Y > 0.3) & (Y < 0.7)
        u = ControlField(g, np.where(inside, 2.0, 0.0))
        sr = structure_report(u)
        assert sr.plateau_count == 2
        areas = sorted(sr.plateau_areas)
        assert areas[0] == pytest.approx(inside.sum() * g.h ** 2, rel=1e-12)
        assert sum(sr.plateau_areas) == pytest.approx(sr.domain_area, rel=1e-12)
        # jump length is the inner rectangle's perimeter measured in cell edges
        nx_in = len(np.unique(X[inside]))
        ny_in = len(np.unique(Y[inside]))
        assert sr.jump_length == pytest.approx(2 * (nx_in + ny_in) * g.h, rel=1e-12)
        assert sr.coverage(2) == pytest.approx(1.0, rel=1e-14)

    def test_ramp_splits_into_columns(self):
        g = build_grid(14, 14)
        u = ControlField.from_function(g, lambda X, Y: X)
        sr = structure_report(u)
        assert sr.plateau_count == g.mx
        assert sr.jump_length == pytest.approx((g.mx - 1) * g.my * g.h ** 1, rel=1e-12)

    def test_quantization_merges_noise(self):
        g = build_grid(14, 14)
        rng = np.random.default_rng(5)
        base = np.where(rng.random((g.mx, g.my)) > 2.0, 1.0, 0.0)  # all zeros
        u = ControlField(g, base + 1e-9 * rng.standard_normal((g.mx, g.my)))
        sr = structure_report(u, quantization_tol=1e-6)
        assert sr.plateau_count == 1
        assert sr.coverage(1) == 1.0

    def test_labels_partition_cells(self):
        g = build_grid(10, 10)
        rng = np.random.default_rng(9)
        u = ControlField(g, np.round(rng.random((g.mx, g.my)) * 3.0))
        labels = plateau_labels(u)
        assert labels.shape == (g.mx, g.my)
        # within a label all values agree to the quantization tolerance
        for root in np.unique(labels):
            vals = u.values[labels == root]
            assert vals.max() - vals.min() <= 1e-3 * (u.values.max() - u.values.min()) * len(vals)

    def test_report_json(self):
        g = build_grid(10, 10)
        u = ControlField.from_function(g, lambda X, Y: (X >= 0.5).astype(float))
        doc = structure_report(u).as_json()
        for key in ("plateau_count", "plateau_areas", "active_fraction",
                    "jump_length", "quantization_tol", "domain_area"):
            assert key in doc
