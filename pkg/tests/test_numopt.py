import numpy as np
import pytest

from egs_control import (
    ConvergenceError,
    EgsConfig,
    NumProblem,
    SessionTable,
    dual_objective,
    solve_dual,
    verify_kkt,
)
from egs_control.rcp import PriceVector


def make_problem(sessions, n_nodes, n_resources=3, p_gen=0.05, lam_node=0.5, lam_min=1e-3, x=1):
    table = SessionTable(n_nodes, sessions, x=x, lam_min=lam_min)
    config = EgsConfig(
        n_nodes=n_nodes,
        n_resources=n_resources,
        p_gen=p_gen,
        lam_node=lam_node,
        theta_c=1.0,
    )
    return NumProblem(table=table, config=config)


class TestAnalyticInstances:
    def test_single_session_hits_cap(self):
        # total cap 0.15 exceeds the per-session ceiling 0.05, so the box binds
        problem = make_problem([(0, 1)], n_nodes=2)
        sol = solve_dual(problem)
        assert sol.lam[0] == pytest.approx(0.05, rel=1e-6)
        assert verify_kkt(problem, sol.lam, sol.prices).ok

    def test_two_sessions_stay_at_ceilings(self):
        problem = make_problem([(0, 1), (2, 3)], n_nodes=4)
        sol = solve_dual(problem)
        assert np.allclose(sol.lam, 0.05, rtol=1e-6)
        assert sol.prices.p_c == pytest.approx(0.0, abs=1e-6)

    def test_three_sessions_share_total_cap(self):
        # R * p_gen = 0.10 < 3 * 0.05; symmetric split 1/30 each, p_c = 30
        problem = make_problem([(0, 1), (2, 3), (4, 5)], n_nodes=6, n_resources=2)
        sol = solve_dual(problem)
        assert np.allclose(sol.lam, 0.1 / 3, rtol=1e-6)
        assert sol.prices.p_c == pytest.approx(30.0, rel=1e-5)
        assert np.allclose(sol.prices.p_u, 0.0, atol=1e-6)

    def test_binding_node_cap_instance(self):
        # node 0 cap 0.04 splits evenly over its two sessions; the other
        # three sessions share the remaining 0.11 of the total cap
        problem = make_problem(
            [(0, 1), (0, 2), (1, 2), (3, 4), (4, 5)],
            n_nodes=6,
            lam_node=[0.04, 0.5, 0.5, 0.5, 0.5, 0.5],
        )
        sol = solve_dual(problem)
        assert sol.lam[0] == pytest.approx(0.02, rel=1e-4)
        assert sol.lam[1] == pytest.approx(0.02, rel=1e-4)
        assert np.allclose(sol.lam[2:], 0.11 / 3, rtol=1e-4)
        assert sol.prices.p_c == pytest.approx(3 / 0.11, rel=1e-4)
        assert sol.prices.p_u[0] == pytest.approx(50 - 3 / 0.11, rel=1e-4)
        assert sol.residual < 1e-8


class TestKktReport:
    def setup_method(self):
        self.problem = make_problem([(0, 1), (2, 3), (4, 5)], n_nodes=6, n_resources=2)
        self.sol = solve_dual(self.problem)

    def test_solution_passes(self):
        report = verify_kkt(self.problem, self.sol.lam, self.sol.prices)
        assert report.ok
        assert report.max_violation < 1e-8

    def test_perturbed_rates_flagged(self):
        report = verify_kkt(self.problem, self.sol.lam + 0.01, self.sol.prices)
        assert not report.ok

    def test_zero_price_overload_is_primal_infeasible(self):
        # at zero prices all four sessions clamp to 0.05, total 0.20 > 0.15
        problem = make_problem([(0, 1), (2, 3), (4, 5), (1, 2)], n_nodes=6)
        lam = problem.primal_rates(PriceVector.zeros(6))
        report = verify_kkt(problem, lam, PriceVector.zeros(6))
        assert report.primal_feasibility == pytest.approx(0.05)
        assert not report.ok


class TestDualObjective:
    def test_solution_minimizes_dual(self):
        problem = make_problem([(0, 1), (2, 3), (4, 5)], n_nodes=6, n_resources=2)
        sol = solve_dual(problem)
        d_star = dual_objective(problem, sol.prices)
        rng = np.random.default_rng(4)
        for _ in range(50):
            p = PriceVector(float(rng.uniform(0, 60)), rng.uniform(0, 5, size=6))
            assert d_star <= dual_objective(problem, p) + 1e-9


class TestRobustness:
    def test_initialization_independence(self):
        problem = make_problem(
            [(0, 1), (0, 2), (1, 2), (3, 4), (4, 5)],
            n_nodes=6,
            lam_node=[0.04, 0.5, 0.5, 0.5, 0.5, 0.5],
        )
        a = solve_dual(problem, p0=None)
        b = solve_dual(problem, p0=PriceVector(10.0, np.full(6, 10.0)))
        assert np.allclose(a.lam, b.lam, atol=1e-6)

    def test_slater_failure_raises(self):
        problem = make_problem([(0, 1), (2, 3), (4, 5)], n_nodes=6, lam_min=0.06)
        with pytest.raises(ConvergenceError):
            solve_dual(problem)

    def test_iteration_cap_carries_last_iterate(self):
        problem = make_problem(
            [(0, 1), (0, 2), (1, 2), (3, 4), (4, 5)],
            n_nodes=6,
            lam_node=[0.04, 0.5, 0.5, 0.5, 0.5, 0.5],
        )
        with pytest.raises(ConvergenceError) as info:
            solve_dual(problem, tol=1e-12, max_iter=5)
        assert info.value.last_rates is not None
        assert info.value.iterations == 5
