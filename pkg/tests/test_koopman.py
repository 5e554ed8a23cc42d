"""Lift values, EDMD fit optimality, and horizon condensation."""

import numpy as np
import pytest

from boxmpc.koopman import (LiftKind, LiftSpec, PredictionMatrices,
                            SnapshotDataset, build_prediction_matrices, fit,
                            lift, lift_columns, lift_lipschitz_estimate,
                            output_matrix, predict, sample_centers)

import oracles


def small_model(rng, n_x=3, n_rbf=4, n_u=2, spectral=0.8):
    spec = LiftSpec(n_x=n_x, centers=rng.standard_normal((n_rbf, n_x)))
    n_psi = spec.n_psi
    A = rng.standard_normal((n_psi, n_psi))
    A *= spectral / max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n_psi, n_u))
    from boxmpc.koopman import KoopmanModel
    return KoopmanModel(A=A, B=B, C=output_matrix(n_x, n_psi), lift=spec)


class TestLift:
    def test_unit_radius_vanishes(self):
        spec = LiftSpec(n_x=2, centers=np.zeros((1, 2)))
        psi = lift(spec, np.array([1.0, 0.0]))
        assert psi[2] == 0.0

    def test_value_at_radius_e(self):
        spec = LiftSpec(n_x=1, centers=np.zeros((1, 1)))
        psi = lift(spec, np.array([np.e]))
        assert psi[1] == pytest.approx(np.e ** 2, rel=1e-14)

    def test_center_maps_to_zero(self):
        c = np.array([[0.3, -0.7]])
        spec = LiftSpec(n_x=2, centers=c)
        psi = lift(spec, c[0])
        assert psi[2] == 0.0 and np.all(np.isfinite(psi))

    def test_state_block_is_identity_part(self):
        rng = np.random.default_rng(0)
        spec = LiftSpec(n_x=4, centers=rng.standard_normal((6, 4)))
        x = rng.standard_normal(4)
        assert np.array_equal(lift(spec, x)[:4], x)

    def test_columns_agree_with_single_lift(self):
        rng = np.random.default_rng(1)
        spec = LiftSpec(n_x=3, centers=rng.standard_normal((5, 3)))
        X = rng.standard_normal((3, 40))
        P = lift_columns(spec, X)
        assert P.shape == (8, 40)
        for j in (0, 17, 39):
            assert np.allclose(P[:, j], lift(spec, X[:, j]), atol=1e-12)

    def test_identity_lift_when_no_centers(self):
        spec = LiftSpec(n_x=3, centers=np.zeros((0, 3)))
        x = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(lift(spec, x), x)
        assert spec.n_psi == 3

    def test_sample_centers_inside_box_and_deterministic(self):
        lo, hi = -2.0 * np.ones(3), np.array([1.0, 2.0, 3.0])
        c1 = sample_centers(lo, hi, 50, seed=9)
        c2 = sample_centers(lo, hi, 50, seed=9)
        assert np.array_equal(c1, c2)
        assert c1.shape == (50, 3)
        assert np.all(c1 >= lo) and np.all(c1 <= hi)


class TestFit:
    def test_recovers_linear_system_with_identity_lift(self):
        rng = np.random.default_rng(2)
        n_x, n_u, m = 4, 2, 60
        A_true = rng.standard_normal((n_x, n_x)) * 0.3
        B_true = rng.standard_normal((n_x, n_u))
        X = rng.standard_normal((n_x, m))
        U = rng.standard_normal((n_u, m))
        ds = SnapshotDataset(X=X, U=U, Xp=A_true @ X + B_true @ U)
        model = fit(ds, LiftSpec(n_x=n_x, centers=np.zeros((0, n_x))))
        assert np.abs(model.A - A_true).max() <= 1e-8
        assert np.abs(model.B - B_true).max() <= 1e-8
        assert model.fit_residual <= 1e-12
        assert not model.rank_deficient

    def test_normal_equations_satisfied(self):
        rng = np.random.default_rng(3)
        spec = LiftSpec(n_x=2, centers=rng.standard_normal((3, 2)))
        m = 40
        ds = SnapshotDataset(X=rng.standard_normal((2, m)),
                             U=rng.standard_normal((1, m)),
                             Xp=rng.standard_normal((2, m)))
        model = fit(ds, spec)
        G = np.vstack([lift_columns(spec, ds.X), ds.U])
        resid = lift_columns(spec, ds.Xp) - np.hstack([model.A, model.B]) @ G
        assert np.abs(resid @ G.T).max() <= 1e-8

    def test_no_perturbation_improves_the_fit(self):
        rng = np.random.default_rng(4)
        spec = LiftSpec(n_x=2, centers=rng.standard_normal((2, 2)))
        m = 30
        ds = SnapshotDataset(X=rng.standard_normal((2, m)),
                             U=rng.standard_normal((1, m)),
                             Xp=0.5 * rng.standard_normal((2, m)))
        model = fit(ds, spec)
        G = np.vstack([lift_columns(spec, ds.X), ds.U])
        P_next = lift_columns(spec, ds.Xp)
        theta = np.hstack([model.A, model.B])
        base = np.linalg.norm(P_next - theta @ G) ** 2
        assert base == pytest.approx(model.fit_residual, rel=1e-9)
        for _ in range(20):
            delta = 1e-4 * rng.standard_normal(theta.shape)
            assert np.linalg.norm(P_next - (theta + delta) @ G) ** 2 >= base

    def test_zero_input_block_flags_deficiency_and_zeroes_b(self):
        rng = np.random.default_rng(5)
        n_x, m = 2, 25
        X = rng.standard_normal((n_x, m))
        ds = SnapshotDataset(X=X, U=np.zeros((2, m)), Xp=0.9 * X)
        model = fit(ds, LiftSpec(n_x=n_x, centers=np.zeros((0, n_x))))
        assert model.rank_deficient
        assert np.abs(model.B).max() <= 1e-6
        # the A block is still the honest regression on the reachable rows
        assert np.abs(model.A - 0.9 * np.eye(n_x)).max() <= 1e-6

    def test_underdetermined_warns(self):
        rng = np.random.default_rng(6)
        spec = LiftSpec(n_x=2, centers=rng.standard_normal((5, 2)))
        ds = SnapshotDataset(X=rng.standard_normal((2, 4)),
                             U=rng.standard_normal((1, 4)),
                             Xp=rng.standard_normal((2, 4)))
        with pytest.warns(UserWarning, match="underdetermined"):
            fit(ds, spec)

    def test_output_matrix_projection(self):
        C = output_matrix(2, 5)
        assert np.array_equal(C, np.hstack([np.eye(2), np.zeros((2, 3))]))


class TestCondensation:
    def test_matches_stepwise_rollout(self):
        rng = np.random.default_rng(7)
        model = small_model(rng)
        N = 6
        pm = build_prediction_matrices(model, N)
        x0 = rng.standard_normal(model.n_x)
        U = rng.standard_normal((N, model.n_u))
        psi0 = lift(model.lift, x0)
        stacked = pm.E @ psi0 + pm.F @ U.ravel()
        assert np.abs(stacked - oracles.rollout_prediction(model, psi0, U)).max() <= 1e-10
        assert np.abs(stacked - predict(model, x0, U).ravel()).max() <= 1e-10

    def test_single_step_horizon(self):
        rng = np.random.default_rng(8)
        model = small_model(rng)
        pm = build_prediction_matrices(model, 1)
        assert np.allclose(pm.E, model.C @ model.A)
        assert np.allclose(pm.F, model.C @ model.B)
        assert pm.n_x == model.n_x and pm.n_u == model.n_u

    def test_zero_input_matrix_gives_zero_f(self):
        rng = np.random.default_rng(9)
        model = small_model(rng)
        model.B[:] = 0.0
        pm = build_prediction_matrices(model, 4)
        assert np.abs(pm.F).max() == 0.0

    def test_toeplitz_block_structure(self):
        rng = np.random.default_rng(10)
        model = small_model(rng)
        N = 5
        pm = build_prediction_matrices(model, N)
        n_x, n_u = model.n_x, model.n_u
        for i in range(N):
            for j in range(i + 1):
                block = pm.F[i * n_x:(i + 1) * n_x, j * n_u:(j + 1) * n_u]
                expected = model.C @ np.linalg.matrix_power(model.A, i - j) @ model.B
                assert np.allclose(block, expected, atol=1e-9)
        for i in range(N):
            for j in range(i + 1, N):
                block = pm.F[i * n_x:(i + 1) * n_x, j * n_u:(j + 1) * n_u]
                assert np.abs(block).max() == 0.0

    def test_invalid_horizon(self):
        rng = np.random.default_rng(11)
        with pytest.raises(ValueError):
            build_prediction_matrices(small_model(rng), 0)


class TestLipschitzEstimate:
    def test_identity_lift_quotient_is_one(self):
        spec = LiftSpec(n_x=3, centers=np.zeros((0, 3)))
        rng = np.random.default_rng(12)
        a = rng.standard_normal((3, 30))
        b = rng.standard_normal((3, 30))
        assert lift_lipschitz_estimate(spec, a, b) == pytest.approx(1.0)

    def test_single_pair_value(self):
        spec = LiftSpec(n_x=1, centers=np.zeros((1, 1)))
        a = np.array([[1.0]])
        b = np.array([[np.e]])
        # psi = [x, r^2 log r]; quotient = ||(e-1, e^2-0)|| / (e-1)
        expected = np.hypot(np.e - 1.0, np.e ** 2) / (np.e - 1.0)
        assert lift_lipschitz_estimate(spec, a, b) == pytest.approx(expected)

    def test_coincident_pairs_rejected(self):
        spec = LiftSpec(n_x=2, centers=np.zeros((1, 2)))
        pts = np.ones((2, 4))
        with pytest.raises(ValueError):
            lift_lipschitz_estimate(spec, pts, pts.copy())


class TestDatasetValidation:
    def test_mismatched_columns_rejected(self):
        with pytest.raises(ValueError):
            SnapshotDataset(X=np.zeros((2, 5)), U=np.zeros((1, 4)),
                            Xp=np.zeros((2, 5)))

    def test_non_finite_rejected(self):
        X = np.zeros((2, 3))
        bad = X.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            SnapshotDataset(X=X, U=np.zeros((1, 3)), Xp=bad)
