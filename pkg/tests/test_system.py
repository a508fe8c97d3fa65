import numpy as np
import pytest

from stochlq.errors import (DivergenceError, NotStable, NotSymmetric,
                            ShapeMismatch)
from stochlq.oracle import solve_sare
from stochlq.problems import example1
from stochlq.system import (CostWeights, SystemModel, closed_loop, evaluate_cost,
                            is_ms_stable, lyapunov_residual, noise_stream,
                            propagate_moments, simulate_paths,
                            solve_stochastic_lyapunov, stage_cost_matrix)
from helpers import random_spd, scalar_model
from oracles import lyapunov_series
from reference_values import EX1_POSITIVE_K, EX1_POSITIVE_P


def stable_pair(rng, n, sigma2=1.0, target=0.8):
    F = rng.standard_normal((n, n))
    G = rng.standard_normal((n, n))
    rho = np.abs(np.linalg.eigvals(np.kron(F, F) + sigma2 * np.kron(G, G))).max()
    scale = np.sqrt(target / rho)
    return scale * F, scale * G


class TestModel:
    def test_shapes_validated(self):
        with pytest.raises(ShapeMismatch):
            SystemModel(np.eye(2), np.ones((2, 1)), np.eye(3), np.ones((2, 1)))
        with pytest.raises(ShapeMismatch):
            SystemModel(np.eye(2), np.ones((2, 1)), np.eye(2), np.ones((2, 2)))

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            scalar_model(1, 1, 0, 0, sigma2=-0.1)

    def test_weights_symmetry_and_flag(self):
        with pytest.raises(NotSymmetric):
            CostWeights([[1, 0.5], [0, 1]], np.zeros((1, 2)), [[1]])
        assert CostWeights(np.eye(2), np.zeros((1, 2)), [[1]]).standard_assumption
        assert not CostWeights(np.eye(2), np.zeros((1, 2)), [[0]]).standard_assumption
        assert not CostWeights(np.eye(2), np.zeros((1, 2)), [[-1]]).standard_assumption

    def test_weights_shape(self):
        with pytest.raises(ShapeMismatch):
            CostWeights(np.eye(2), np.zeros((2, 2)), [[1]])


class TestClosedLoop:
    def test_zero_gain(self):
        p = example1()
        F, G = closed_loop(p.model, np.zeros((2, 2)))
        np.testing.assert_array_equal(F, p.model.A)
        np.testing.assert_array_equal(G, p.model.C)

    def test_example1_initial_gain(self):
        p = example1()
        F, G = closed_loop(p.model, p.K0)
        np.testing.assert_allclose(F, [[1.6, 4.8], [-0.3, -1.3]], atol=1e-15)
        np.testing.assert_allclose(G, [[0.35, 3.1], [0.0, -0.4]], atol=1e-15)

    def test_scalar(self):
        F, G = closed_loop(scalar_model(1, 1, 0, 1), [[-0.5]])
        assert F[0, 0] == 0.5 and G[0, 0] == -0.5

    def test_gain_shape_checked(self):
        with pytest.raises(ShapeMismatch):
            closed_loop(example1().model, np.zeros((1, 2)))


class TestStability:
    def test_example1_initial_gain_is_stabilizing(self):
        p = example1()
        check = is_ms_stable(p.model, p.K0)
        assert check and check.radius < 1

    def test_example1_open_loop_unstable(self):
        check = is_ms_stable(example1().model, np.zeros((2, 2)))
        assert not check and check.radius >= 4

    def test_scalar_radius(self):
        check = is_ms_stable(scalar_model(0.5, 0, 0.5, 0), [[0.0]])
        assert check
        assert check.radius == pytest.approx(0.5)

    def test_margin(self):
        # radius exactly 1 - 1e-12 is within the default margin
        model = scalar_model(np.sqrt(1 - 1e-12), 0, 0, 0)
        assert not is_ms_stable(model, [[0.0]])
        assert is_ms_stable(model, [[0.0]], tol=0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_radius_agrees_with_lyapunov_characterization(self, seed):
        # stable iff P = F'PF + s2 G'PG + I has a positive definite solution
        rng = np.random.default_rng(seed)
        F, G = stable_pair(rng, 3, target=0.9)
        P = solve_stochastic_lyapunov(F, G, 1.0, np.eye(3))
        assert np.linalg.eigvalsh(P).min() > 0
        F2, G2 = stable_pair(rng, 3, target=1.2)
        with pytest.raises(NotStable):
            solve_stochastic_lyapunov(F2, G2, 1.0, np.eye(3))


class TestLyapunov:
    @pytest.mark.parametrize("f, g, s2, expected", [
        (0.0, 0.0, 1.0, 1.0),
        (0.5, 0.0, 1.0, 4 / 3),
        (0.5, 0.5, 1.0, 2.0),
    ])
    def test_scalar(self, f, g, s2, expected):
        P = solve_stochastic_lyapunov([[f]], [[g]], s2, [[1.0]])
        assert P[0, 0] == pytest.approx(expected, rel=1e-14)

    def test_zero_dynamics_returns_M(self, rng):
        M = random_spd(rng, 3)
        np.testing.assert_allclose(
            solve_stochastic_lyapunov(np.zeros((3, 3)), np.zeros((3, 3)), 1.0, M), M)

    @pytest.mark.parametrize("seed", range(10))
    def test_residual_and_series_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = 1 + seed % 4
        F, G = stable_pair(rng, n, sigma2=0.7)
        M = random_spd(rng, n)
        P = solve_stochastic_lyapunov(F, G, 0.7, M)
        res = np.linalg.norm(lyapunov_residual(F, G, 0.7, M, P))
        assert res <= 1e-10 * (1 + np.linalg.norm(P))
        assert np.linalg.eigvalsh(P).min() > 0
        np.testing.assert_allclose(P, lyapunov_series(F, G, 0.7, M), rtol=1e-9)

    def test_unstable_raises(self):
        with pytest.raises(NotStable):
            solve_stochastic_lyapunov([[1.1]], [[0.0]], 1.0, [[1.0]])


class TestMoments:
    def test_deterministic_scalar(self):
        M = propagate_moments(scalar_model(0.5, 0, 0, 0, 0.0), [[0.0]], [2.0], 0, 2)
        np.testing.assert_allclose(M[:, 0, 0], [4, 1, 0.25, 0.0625])

    def test_pure_noise_scalar(self):
        M = propagate_moments(scalar_model(0, 0, 1, 0, 1.0), [[0.0]], [1.0], 0, 5)
        np.testing.assert_allclose(M[:, 0, 0], np.ones(7))

    def test_length_and_psd(self):
        p = example1()
        M = propagate_moments(p.model, p.K0, [3, 7], 0, 50)
        assert M.shape == (52, 2, 2)
        for Mt in M:
            assert np.allclose(Mt, Mt.T)
            assert np.linalg.eigvalsh(Mt).min() > -1e-9 * np.abs(Mt).max()

    def test_example1_moments_decay(self):
        p = example1()
        M = propagate_moments(p.model, p.K0, [3, 7], 0, 1000)
        tr = np.trace(M, axis1=1, axis2=2)
        assert tr[-1] < 1e-6 * tr[0]


class TestCost:
    def test_zero_horizon(self):
        p = example1()
        x0 = np.array([3.0, 7.0])
        expected = x0 @ stage_cost_matrix(p.weights, p.K0) @ x0
        assert evaluate_cost(p.model, p.weights, p.K0, x0, 0) == pytest.approx(expected)

    def test_scalar_long_horizon(self):
        model = scalar_model(1.2, 1.0, 0.3, 0.2, 1.0)
        weights = CostWeights([[1.0]], [[0.1]], [[2.0]])
        k = np.array([[-0.9]])
        F, G = closed_loop(model, k)
        phi = stage_cost_matrix(weights, k)[0, 0]
        p = phi / (1 - F[0, 0] ** 2 - G[0, 0] ** 2)
        cost = evaluate_cost(model, weights, k, [1.5], 500)
        assert cost == pytest.approx(1.5 ** 2 * p, rel=1e-8)

    def test_example1_optimal_gain(self):
        p = example1()
        x0 = np.array([3.0, 7.0])
        cost = evaluate_cost(p.model, p.weights, EX1_POSITIVE_K, x0, 300)
        assert cost == pytest.approx(x0 @ EX1_POSITIVE_P @ x0, rel=1e-6)


class TestSimulation:
    def test_shapes_and_window(self):
        p = example1()
        batch = simulate_paths(p.model, p.K0, [3, 7], 5, 10, 4, seed=1)
        assert batch.paths.shape == (4, 12, 2)
        np.testing.assert_array_equal(batch.times, np.arange(5, 17))
        np.testing.assert_array_equal(batch.paths[:, 0], [[3, 7]] * 4)

    def test_noise_free_paths_are_identical(self):
        p = example1(sigma2=0.0)
        batch = simulate_paths(p.model, p.K0, [3, 7], 0, 20, 5, seed=3)
        F, _ = closed_loop(p.model, p.K0)
        x = np.array([3.0, 7.0])
        for t in range(22):
            np.testing.assert_allclose(batch.paths[:, t], [x] * 5, rtol=1e-13)
            x = F @ x

    def test_determinism(self):
        p = example1()
        a = simulate_paths(p.model, p.K0, [3, 7], 0, 30, 50, seed=7, stream=(2, 1))
        b = simulate_paths(p.model, p.K0, [3, 7], 0, 30, 50, seed=7, stream=(2, 1))
        assert a.paths.tobytes() == b.paths.tobytes()

    def test_path_independent_of_batch_size(self):
        p = example1()
        small = simulate_paths(p.model, p.K0, [3, 7], 0, 30, 3, seed=7)
        large = simulate_paths(p.model, p.K0, [3, 7], 0, 30, 40, seed=7)
        np.testing.assert_array_equal(small.paths, large.paths[:3])

    def test_streams_differ(self):
        a = noise_stream(5, 0, 0).standard_normal(4)
        b = noise_stream(5, 0, 1).standard_normal(4)
        c = noise_stream(6, 0, 0).standard_normal(4)
        assert not np.allclose(a, b) and not np.allclose(a, c)

    def test_first_step_mean_within_three_standard_errors(self):
        p = example1()
        L = 100000
        batch = simulate_paths(p.model, p.K0, [3, 7], 0, 0, L, seed=11)
        F, G = closed_loop(p.model, p.K0)
        x0 = np.array([3.0, 7.0])
        x1 = batch.paths[:, 1]
        se = np.sqrt(p.model.sigma2) * np.abs(G @ x0) / np.sqrt(L)
        assert np.all(np.abs(x1.mean(axis=0) - F @ x0) < 3 * se)

    def test_first_step_second_moment(self):
        p = example1()
        batch = simulate_paths(p.model, p.K0, [3, 7], 0, 0, 100000, seed=12)
        M = propagate_moments(p.model, p.K0, [3, 7], 0, 0)[1]
        S = batch.terminal_second_moment()
        assert np.linalg.norm(S - M) / np.linalg.norm(M) < 0.02

    def test_monte_carlo_error_rate(self):
        # RMS error of the sample second moment shrinks like 1/sqrt(L)
        p = example1()
        K = EX1_POSITIVE_K
        M = propagate_moments(p.model, K, [3, 7], 0, 3)[-1]
        rms = []
        for L in (100, 1000, 10000):
            errs = [np.linalg.norm(simulate_paths(p.model, K, [3, 7], 0, 3, L, seed=r)
                                   .terminal_second_moment() - M)
                    for r in range(16)]
            rms.append(np.sqrt(np.mean(np.square(errs))))
        for coarse, fine in zip(rms, rms[1:]):
            ratio = coarse / fine
            assert np.sqrt(10) / 2 < ratio < 2 * np.sqrt(10)

    def test_divergence_guard(self):
        p = example1()
        with pytest.raises(DivergenceError):
            simulate_paths(p.model, np.zeros((2, 2)), [3, 7], 0, 200, 2, seed=0,
                           max_norm=1e6)


def test_sare_solution_is_cost_of_its_gain():
    p = example1()
    P, K = solve_sare(p.model, p.weights, p.K0)
    F, G = closed_loop(p.model, K)
    P_K = solve_stochastic_lyapunov(F, G, 1.0, stage_cost_matrix(p.weights, K))
    np.testing.assert_allclose(P_K, P, rtol=1e-10)
