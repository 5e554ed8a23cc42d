"""Soft-constraint adapter: scaling exactness and penalty-solution quality."""

import numpy as np
import pytest

from boxmpc.adapter import GeneralQp, desoften, soften
from boxmpc.bench import gen_random_general_qp
from boxmpc.boxqp import SolverConfig, solve

import oracles


def solve_soft(qp, rho=1e6, epsilon=1e-9):
    soft = soften(qp, rho=rho)
    result = solve(soft.problem, config=SolverConfig(epsilon=epsilon))
    assert result.converged
    return soft, result, desoften(result, soft)


class TestScalingExactness:
    def test_descale_roundtrip(self):
        rng = np.random.default_rng(0)
        qp = gen_random_general_qp(4, 6, 1)
        soft = soften(qp, rho=100.0)
        z = rng.uniform(-1.0, 1.0, soft.problem.n)
        x, y = soft.descale(z)
        assert np.allclose(soft.x_center + soft.x_halfwidth * z[:4], x,
                           atol=1e-14)
        assert np.all(x >= qp.x_min - 1e-12) and np.all(x <= qp.x_max + 1e-12)
        assert np.all(y >= qp.y_min - 1e-12) and np.all(y <= qp.y_max + 1e-12)

    def test_scaled_objective_matches_penalized_cost(self):
        rng = np.random.default_rng(1)
        qp = gen_random_general_qp(3, 5, 2)
        rho = 1e3
        soft = soften(qp, rho=rho)
        for _ in range(10):
            z = rng.uniform(-1.0, 1.0, soft.problem.n)
            x, y = soft.descale(z)
            direct = (qp.objective(x)
                      + 0.5 * rho * float(np.sum((qp.A @ x - y) ** 2)))
            assert soft.scaled_objective(z) == pytest.approx(direct, rel=1e-9)

    def test_unit_box_problem_is_well_scaled(self):
        qp = gen_random_general_qp(5, 12, 3)
        soft = soften(qp)
        assert soft.problem.n == 5 + 12
        # linear term finite and solver-ready
        assert np.all(np.isfinite(soft.problem.linear))


class TestPenaltySolutionQuality:
    def test_symmetric_instance_solves_to_origin(self):
        qp = GeneralQp(Q=np.eye(2), q=np.zeros(2),
                       A=np.array([[1.0, 1.0]]),
                       y_min=np.array([-0.5]), y_max=np.array([0.5]),
                       x_min=-np.ones(2), x_max=np.ones(2))
        _, _, (x, y, violation) = solve_soft(qp)
        assert np.abs(x).max() <= 1e-6
        assert violation.max() == 0.0

    def test_no_rows_reduces_to_box_qp(self):
        rng = np.random.default_rng(2)
        G = rng.standard_normal((3, 3))
        qp = GeneralQp(Q=G @ G.T + np.eye(3), q=rng.standard_normal(3),
                       A=np.zeros((0, 3)),
                       y_min=np.zeros(0), y_max=np.zeros(0),
                       x_min=np.array([-1.0, -2.0, 0.0]),
                       x_max=np.array([2.0, 0.5, 3.0]))
        _, _, (x, y, violation) = solve_soft(qp)
        x_ref = oracles.solve_general_qp_reference(qp)
        assert y.shape == (0,)
        assert violation.shape == (0,)
        assert np.abs(x - x_ref).max() <= 1e-6

    def test_matches_enumeration_oracle_on_small_instances(self):
        for seed in range(8):
            qp = gen_random_general_qp(2, 3, seed)
            _, _, (x, _, violation) = solve_soft(qp)
            x_ref = oracles.solve_general_qp_reference(qp)
            assert violation.max() <= 1e-4
            gap = abs(qp.objective(x) - qp.objective(x_ref))
            assert gap <= 10.0 / 1e6

    def test_violation_shrinks_with_rho(self):
        # drive the solution against a row bound so the penalty is active
        qp = GeneralQp(Q=np.eye(2), q=np.array([-4.0, -4.0]),
                       A=np.array([[1.0, 1.0]]),
                       y_min=np.array([-1.0]), y_max=np.array([1.0]),
                       x_min=-2 * np.ones(2), x_max=2 * np.ones(2))
        worst = []
        for rho in (1e2, 1e4, 1e6):
            _, _, (x, _, violation) = solve_soft(qp, rho=rho)
            worst.append(violation.max())
        assert worst[0] > worst[1] > worst[2]
        assert worst[2] <= 1e-4
        # O(1/rho): two decades of rho buy about two decades of feasibility
        assert worst[1] / worst[0] <= 2e-2
        assert worst[2] / worst[1] <= 2e-2

    def test_active_row_solution_near_bound(self):
        qp = GeneralQp(Q=np.eye(1), q=np.array([-10.0]),
                       A=np.array([[1.0]]),
                       y_min=np.array([-1.0]), y_max=np.array([2.0]),
                       x_min=np.array([-5.0]), x_max=np.array([5.0]))
        # unconstrained minimum at 10, row caps a x = x at 2
        _, _, (x, y, violation) = solve_soft(qp)
        assert x[0] == pytest.approx(2.0, abs=1e-4)
        assert violation.max() <= 1e-4


class TestStructureSelection:
    def test_tall_instances_use_structured_backend(self):
        qp = gen_random_general_qp(4, 20, 5)
        soft, result, _ = solve_soft(qp)
        assert soft.problem.is_structured
        assert result.diagnostics["factor_dim"] == 4

    def test_wide_instances_stay_dense(self):
        qp = gen_random_general_qp(6, 2, 6)
        soft, result, _ = solve_soft(qp)
        assert not soft.problem.is_structured
        assert result.diagnostics["factor_dim"] == 8

    def test_structured_and_dense_agree(self):
        qp = gen_random_general_qp(3, 9, 7)
        soft = soften(qp, rho=1e4)
        assert soft.problem.is_structured
        a = solve(soft.problem, config=SolverConfig(epsilon=1e-10))
        b = solve(soft.problem, config=SolverConfig(epsilon=1e-10,
                                                    backend="dense"))
        assert np.abs(a.z_star - b.z_star).max() <= 1e-8


class TestDegenerateBounds:
    def test_fixed_variable_eliminated_and_reinserted(self):
        qp = GeneralQp(Q=np.eye(3), q=np.array([1.5, -2.0, 3.0]),
                       A=np.array([[1.0, 1.0, 0.0]]),
                       y_min=np.array([-5.0]), y_max=np.array([5.0]),
                       x_min=np.array([-1.0, 0.7, -1.0]),
                       x_max=np.array([1.0, 0.7, 1.0]))
        soft, result, (x, _, violation) = solve_soft(qp)
        assert soft.n_x == 2  # one coordinate pinned
        assert x[1] == 0.7
        x_ref = oracles.solve_general_qp_reference(qp)
        assert np.abs(x - x_ref).max() <= 1e-5

    def test_zero_width_row_folded_into_objective(self):
        # a'x pinned to 1: acts like a soft equality constraint
        qp = GeneralQp(Q=np.eye(2), q=np.zeros(2),
                       A=np.array([[1.0, 1.0], [1.0, -1.0]]),
                       y_min=np.array([1.0, -3.0]), y_max=np.array([1.0, 3.0]),
                       x_min=-2 * np.ones(2), x_max=2 * np.ones(2))
        soft, result, (x, y, violation) = solve_soft(qp)
        assert soft.n_y == 1  # only the genuine inequality keeps a y
        assert abs(x[0] + x[1] - 1.0) <= 1e-4
        assert np.abs(x - np.array([0.5, 0.5])).max() <= 1e-4
        assert violation.shape == (2,)  # reported on all original rows

    def test_all_variables_fixed(self):
        qp = GeneralQp(Q=np.eye(2), q=np.zeros(2),
                       A=np.zeros((0, 2)), y_min=np.zeros(0), y_max=np.zeros(0),
                       x_min=np.array([0.3, -0.4]), x_max=np.array([0.3, -0.4]))
        soft, result, (x, y, violation) = solve_soft(qp)
        assert soft.problem.n == 0
        assert result.iterations == 0
        assert np.array_equal(x, [0.3, -0.4])


class TestValidation:
    def test_nonpositive_rho_rejected(self):
        qp = gen_random_general_qp(2, 3, 8)
        with pytest.raises(ValueError):
            soften(qp, rho=0.0)

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValueError):
            GeneralQp(Q=np.eye(1), q=np.zeros(1), A=np.zeros((0, 1)),
                      y_min=np.zeros(0), y_max=np.zeros(0),
                      x_min=np.array([1.0]), x_max=np.array([-1.0]))

    def test_non_finite_bounds_rejected(self):
        with pytest.raises(ValueError):
            GeneralQp(Q=np.eye(1), q=np.zeros(1), A=np.ones((1, 1)),
                      y_min=np.array([-np.inf]), y_max=np.array([1.0]),
                      x_min=np.array([-1.0]), x_max=np.array([1.0]))
