"""PDE simulator fidelity, dataset generation, and the closed control loop."""

import numpy as np
import pytest

from boxmpc import matio
from boxmpc.kdv import (CONTROL_CENTERS, ClosedLoopConfig, ControlShapes,
                        KdvBlowUpError, KdvGrid, KdvSimulator, KdvState,
                        generate_dataset, initial_profiles, make_reference,
                        run_closed_loop, train_model)
from boxmpc.mpc import MpcWeights


class TestGrid:
    def test_nodes_and_spacing(self):
        grid = KdvGrid.make(8)
        assert grid.dx == pytest.approx(2 * np.pi / 8)
        assert grid.nodes[0] == pytest.approx(-np.pi)
        assert grid.nodes[-1] == pytest.approx(np.pi - grid.dx)

    def test_fft_ordered_wavenumbers(self):
        grid = KdvGrid.make(8)
        assert np.array_equal(grid.wavenumbers,
                              [0, 1, 2, 3, -4, -3, -2, -1])

    def test_odd_size_rejected(self):
        with pytest.raises(ValueError):
            KdvGrid.make(101)


class TestShapesAndProfiles:
    def test_four_gaussian_columns_peak_near_one(self):
        grid = KdvGrid.make(200)
        shapes = ControlShapes.make(grid)
        assert shapes.V.shape == (200, 4)
        assert np.all(shapes.V > 0)
        for j, m in enumerate(CONTROL_CENTERS):
            peak = shapes.V[:, j].max()
            node = grid.nodes[np.argmax(shapes.V[:, j])]
            assert peak == pytest.approx(1.0, abs=1e-2)
            assert abs(node - m) <= grid.dx

    def test_initial_profile_values(self):
        grid = KdvGrid.make(100)
        P = initial_profiles(grid)
        assert P.shape == (4, 100)
        x = grid.nodes
        assert np.allclose(P[0], np.exp(-(x - np.pi / 2) ** 2))
        assert np.allclose(P[1], -np.sin(x / 2) ** 2)
        assert np.allclose(P[3], np.cos(x / 2) ** 2)
        assert np.all(np.abs(P) <= 1.0 + 1e-12)


class TestSimulatorFidelity:
    def test_dispersion_phase_exact_for_single_mode(self):
        # with the advection term off, mode m evolves as cos(m x + m^3 t)
        grid = KdvGrid.make(100)
        sim = KdvSimulator(grid, nonlinear=False)
        m = 3
        state = KdvState(y=np.cos(m * grid.nodes))
        for _ in range(100):
            state = sim.step(state, np.zeros(4), 0.01)
        exact = np.cos(m * grid.nodes + m ** 3 * state.t)
        assert np.abs(state.y - exact).max() <= 1e-10

    def test_zero_profile_is_equilibrium(self):
        grid = KdvGrid.make(64)
        sim = KdvSimulator(grid)
        state = KdvState(y=np.zeros(64))
        for _ in range(50):
            state = sim.step(state, np.zeros(4), 0.01)
        assert np.abs(state.y).max() == 0.0

    def test_unforced_mass_conserved(self):
        grid = KdvGrid.make(100)
        sim = KdvSimulator(grid)
        state = KdvState(y=0.8 * np.cos(grid.nodes))
        m0 = sim.mass(state.y)
        worst = 0.0
        for _ in range(200):
            state = sim.step(state, np.zeros(4), 0.01)
            worst = max(worst, abs(sim.mass(state.y) - m0))
        assert worst <= 1e-8

    def test_forced_mass_budget(self):
        # advection and dispersion leave mode zero alone, so one step adds
        # exactly dt * integral of the forcing
        grid = KdvGrid.make(100)
        sim = KdvSimulator(grid)
        u = np.array([0.5, -0.2, 0.1, 0.3])
        state = KdvState(y=0.3 * np.sin(grid.nodes))
        expected_rate = float(np.sum(sim.shapes.V @ u)) * grid.dx
        m0 = sim.mass(state.y)
        state = sim.step(state, u, 0.01)
        assert sim.mass(state.y) - m0 == pytest.approx(0.01 * expected_rate,
                                                       rel=1e-10)

    def test_substep_refinement_converges_at_second_order(self):
        # Strang splitting: halving the substep should cut the error by ~4x
        grid = KdvGrid.make(100)
        y0 = 0.9 * np.exp(-grid.nodes ** 2)
        u = np.zeros(4)
        ref = KdvSimulator(grid, n_sub=32).step(KdvState(y=y0.copy()), u, 0.02)
        e1 = np.abs(KdvSimulator(grid, n_sub=1).step(
            KdvState(y=y0.copy()), u, 0.02).y - ref.y).max()
        e4 = np.abs(KdvSimulator(grid, n_sub=4).step(
            KdvState(y=y0.copy()), u, 0.02).y - ref.y).max()
        assert e4 <= e1 / 8.0

    def test_blow_up_raises_with_time(self):
        grid = KdvGrid.make(64)
        sim = KdvSimulator(grid, blow_limit=10.0)
        state = KdvState(y=9.9 * np.cos(grid.nodes), t=1.5)
        with pytest.raises(KdvBlowUpError) as exc:
            for _ in range(200):
                state = sim.step(state, np.zeros(4), 0.05)
        assert exc.value.t > 1.5


class TestDatasetGeneration:
    def test_shapes_and_determinism(self):
        ds1, man1 = generate_dataset(seed=11, n_traj=3, n_samples=20)
        ds2, man2 = generate_dataset(seed=11, n_traj=3, n_samples=20)
        assert ds1.X.shape == (100, 60)
        assert ds1.U.shape == (4, 60)
        assert np.array_equal(ds1.X, ds2.X)
        assert np.array_equal(ds1.U, ds2.U)
        assert np.array_equal(ds1.Xp, ds2.Xp)
        assert man1 == man2
        ds3, _ = generate_dataset(seed=12, n_traj=3, n_samples=20)
        assert not np.array_equal(ds1.X, ds3.X)

    def test_snapshots_align_with_replayed_dynamics(self):
        ds, man = generate_dataset(seed=4, n_traj=2, n_samples=15)
        grid = KdvGrid.make(100)
        sim = KdvSimulator(grid)
        for col in (0, 7, 29):
            stepped = sim.step(KdvState(y=ds.X[:, col].copy()), ds.U[:, col],
                               man["dt"])
            assert np.abs(stepped.y - ds.Xp[:, col]).max() <= 1e-12

    def test_consecutive_samples_chain(self):
        ds, _ = generate_dataset(seed=5, n_traj=1, n_samples=10)
        # within a trajectory the successor state is the next sample's state
        assert np.array_equal(ds.Xp[:, :-1], ds.X[:, 1:])

    def test_initial_states_inside_unit_ball(self):
        ds, _ = generate_dataset(seed=6, n_traj=4, n_samples=5)
        first_cols = ds.X[:, ::5]
        assert np.abs(first_cols).max() <= 1.0 + 1e-12

    def test_zero_inputs_flag(self):
        ds, man = generate_dataset(seed=7, n_traj=2, n_samples=5,
                                   zero_inputs=True)
        assert np.abs(ds.U).max() == 0.0
        assert man["zero_inputs"] is True

    def test_linear_mode_matches_spectral_multiplier(self):
        ds, man = generate_dataset(seed=8, n_traj=1, n_samples=6,
                                   nonlinear=False, zero_inputs=True)
        grid = KdvGrid.make(100)
        k = grid.wavenumbers
        mult = np.exp(1j * k ** 3 * man["dt"]).astype(complex)
        # the per-half-step real projection turns the sign-ambiguous Nyquist
        # mode's multiplier into cos^2 of the half-step phase
        mult[50] = np.cos(k[50] ** 3 * man["dt"] / 2.0) ** 2
        for col in range(6):
            expected = np.fft.ifft(mult * np.fft.fft(ds.X[:, col])).real
            assert np.abs(expected - ds.Xp[:, col]).max() <= 1e-12


class TestTrainModel:
    def test_pipeline_manifests_and_checksum(self):
        model, dataset, manifest = train_model(seed=3, n_traj=5, n_samples=30,
                                               n_rbf=8)
        assert model.n_x == 100 and model.n_u == 4
        assert model.n_psi == 108
        assert model.data_checksum == matio.dataset_checksum(dataset)
        assert manifest["center_seed"] == 3 + 1_000_003
        assert manifest["n_rbf"] == 8
        assert manifest["fit_residual"] == model.fit_residual >= 0.0

    def test_centers_inside_data_bounding_box(self):
        model, dataset, _ = train_model(seed=9, n_traj=4, n_samples=30,
                                        n_rbf=6)
        lo = dataset.X.min(axis=1)
        hi = dataset.X.max(axis=1)
        assert np.all(model.lift.centers >= lo)
        assert np.all(model.lift.centers <= hi)


class TestReference:
    def test_traveling_wave_at_origin_time(self):
        grid = KdvGrid.make(50)
        ref = make_reference({"kind": "traveling_wave", "amplitude": 0.5,
                              "period": 25.0}, grid)
        assert np.allclose(ref(0.0), 0.5 * np.sin(grid.nodes))
        assert np.allclose(ref(25.0), ref(0.0), atol=1e-12)

    def test_constant_and_zero(self):
        grid = KdvGrid.make(10)
        profile = np.linspace(-0.5, 0.5, 10)
        const = make_reference({"kind": "constant", "x_r": profile}, grid)
        assert np.array_equal(const(3.0), profile)
        zero = make_reference({"kind": "zero"}, grid)
        assert np.abs(zero(1.0)).max() == 0.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            make_reference({"kind": "sawtooth"}, KdvGrid.make(10))


@pytest.fixture(scope="module")
def tiny_model():
    model, _, _ = train_model(seed=21, n_traj=40, n_samples=60, n_rbf=40)
    return model


def tiny_weights(rho=100.0):
    return MpcWeights(Wx=np.ones(100), Wu=0.05 * np.ones(4),
                      Wdu=0.01 * np.ones(4), rho=rho, N=10)


class TestClosedLoop:
    def test_regulation_to_zero_damps_initial_bump(self, tiny_model):
        grid = KdvGrid.make(100)
        y0 = 0.4 * np.exp(-2.0 * grid.nodes ** 2)
        log = run_closed_loop(ClosedLoopConfig(
            model=tiny_model, weights=tiny_weights(),
            duration=2.0, reference={"kind": "zero"}, y0=y0))
        assert log.max_abs_y[-1] < log.max_abs_y[0]
        assert np.abs(log.u).max() <= 1.0
        assert log.converged.all()
        assert log.field.shape == (201, 100)

    def test_warm_start_saves_iterations(self, tiny_model):
        common = dict(model=tiny_model, weights=tiny_weights(), duration=1.0)
        cold = run_closed_loop(ClosedLoopConfig(warm_start=False, **common))
        warm = run_closed_loop(ClosedLoopConfig(warm_start=True, **common))
        assert warm.iterations.mean() < cold.iterations.mean()
        assert warm.converged.all() and cold.converged.all()
        # step 0 is cold either way; step 1 solves the identical QP, so the
        # applied inputs agree to solver accuracy (later steps may drift as
        # tolerance-level differences feed back through the plant)
        assert np.array_equal(warm.u[0], cold.u[0])
        assert np.abs(warm.u[1] - cold.u[1]).max() <= 1e-3

    def test_log_artifacts_round_trip(self, tiny_model, tmp_path):
        log = run_closed_loop(ClosedLoopConfig(
            model=tiny_model, weights=tiny_weights(), duration=0.3))
        csv_path = tmp_path / "steps.csv"
        log.write_csv(csv_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0].startswith("#")
        assert lines[1].split(",") == list(log.CSV_COLUMNS)
        assert len(lines) == 2 + log.t.shape[0]

        field_path = tmp_path / "field.npz"
        log.save_field(field_path)
        times, field, nodes, meta = matio.load_field(field_path)
        assert field.shape == log.field.shape
        assert np.array_equal(field, log.field)
        assert times.shape[0] == field.shape[0]
        assert meta["horizon"] == 10
