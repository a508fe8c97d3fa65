import time

import numpy as np
import pytest
import scipy.linalg

from stochlq.errors import MaxItersExceeded, NotStabilizing, QuasiRNotPD
from stochlq.oracle import (calibrate_sigma2, improve_gain, model_policy_iteration,
                            sare_residual, solve_sare, stabilizing_sigma2_limit)
from stochlq.problems import (EX1_INDEFINITE_R_RECOVERED, EX1_VARIANTS, example1,
                              example2, random_stabilizable_problem)
from stochlq.system import CostWeights, SystemModel, is_ms_stable
from helpers import scalar_model
import oracles
import reference_values as ref


def test_frozen_values_match_independent_oracle():
    p = example1()
    m, w = p.model, p.weights
    P, K = oracles.riccati_value_iteration(m.A, m.B, m.C, m.D, w.Q, w.S, w.R, 1.0)
    np.testing.assert_allclose(P, ref.EX1_POSITIVE_P, rtol=1e-11)
    np.testing.assert_allclose(K, ref.EX1_POSITIVE_K, rtol=1e-10)
    assert oracles.scalar_dare(0.9, 1, 1, 1) == pytest.approx(ref.SCALAR_DARE_P, rel=1e-14)


class TestImproveGain:
    def test_no_input_channel(self, rng):
        model = SystemModel(np.eye(2), np.zeros((2, 1)), np.eye(2), np.zeros((2, 1)))
        weights = CostWeights(np.eye(2), [[0.3, -0.2]], [[2.0]])
        K = improve_gain(model, weights, np.eye(2))
        np.testing.assert_allclose(K, -np.linalg.solve([[2.0]], [[0.3, -0.2]]))

    def test_reference_value_gives_reference_gain(self):
        p = example1()
        K = improve_gain(p.model, p.weights, p.P_reference)
        np.testing.assert_allclose(K, p.K_reference, atol=1e-3)

    def test_scalar(self):
        model = scalar_model(0.9, 1, 0, 0, 1.0)
        weights = CostWeights([[1.0]], [[0.0]], [[1.0]])
        p = ref.SCALAR_DARE_P
        K = improve_gain(model, weights, [[p]])
        assert K[0, 0] == pytest.approx(-0.9 * p / (1 + p), rel=1e-13)

    def test_quasi_r_not_pd(self):
        p = example1()
        weights = CostWeights(p.weights.Q, p.weights.S, -1e4 * np.eye(2))
        with pytest.raises(QuasiRNotPD):
            improve_gain(p.model, weights, np.eye(2))


class TestResidual:
    def test_reference_value_small(self):
        p = example1()
        assert np.linalg.norm(sare_residual(p.model, p.weights, p.P_reference)) <= 1e-3

    def test_trivial_zero(self):
        model = scalar_model(0.5, 1, 0.3, 0.2)
        weights = CostWeights([[0.0]], [[0.0]], [[1.0]])
        np.testing.assert_array_equal(sare_residual(model, weights, [[0.0]]), [[0.0]])


class TestPolicyIteration:
    @pytest.mark.parametrize("variant, P_ref, K_ref", [
        ("positive", ref.EX1_POSITIVE_P, ref.EX1_POSITIVE_K),
        ("zero", ref.EX1_ZERO_P, ref.EX1_ZERO_K),
        ("indefinite", ref.EX1_INDEF5_P, ref.EX1_INDEF5_K),
    ])
    def test_example1_against_value_iteration(self, variant, P_ref, K_ref):
        p = example1(variant)
        P, K, report = model_policy_iteration(p.model, p.weights, p.K0)
        assert report.converged
        np.testing.assert_allclose(P, P_ref, rtol=1e-10)
        np.testing.assert_allclose(K, K_ref, rtol=1e-9, atol=1e-11)

    def test_example1_tabulated_values(self):
        for variant in ("positive", "zero"):
            p = example1(variant)
            P, K = solve_sare(p.model, p.weights, p.K0)
            assert np.abs(P - p.P_reference).max() <= 5e-5
            assert np.abs(K - p.K_reference).max() <= 5e-5

    def test_example2(self):
        p = example2(sigma2=0.04)
        P, K, report = model_policy_iteration(p.model, p.weights, p.K0)
        np.testing.assert_allclose(P, ref.EX2_P, rtol=1e-10)
        np.testing.assert_allclose(K, ref.EX2_K, rtol=1e-9, atol=1e-11)

    def test_scalar_fixed_point(self):
        model = scalar_model(0.9, 1, 0, 0, 1.0)
        weights = CostWeights([[1.0]], [[0.0]], [[1.0]])
        P, _, _ = model_policy_iteration(model, weights, [[-0.5]])
        assert P[0, 0] == pytest.approx(ref.SCALAR_DARE_P, rel=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_noise_free_matches_scipy_dare(self, seed):
        rng = np.random.default_rng(seed)
        p = random_stabilizable_problem(rng, 3, 2, sigma2=0.0)
        w = p.weights
        if np.abs(w.S).max() > 0:
            w = CostWeights(w.Q, np.zeros_like(w.S), w.R)
        P, K, _ = model_policy_iteration(p.model, w, p.K0)
        X = scipy.linalg.solve_discrete_are(p.model.A, p.model.B, w.Q, w.R)
        np.testing.assert_allclose(P, X, rtol=1e-8)

    @pytest.mark.parametrize("seed", range(8))
    def test_invariants_random(self, seed):
        rng = np.random.default_rng(1000 + seed)
        p = random_stabilizable_problem(rng, 1 + seed % 3, 1 + seed % 2)
        tol = 1e-10
        P, K, report = model_policy_iteration(p.model, p.weights, p.K0, tol=tol)
        for rec in report.history:
            assert rec.radius < 1
            assert np.linalg.eigvalsh(rec.P).min() > 0
        for a, b in zip(report.history, report.history[1:]):
            assert np.linalg.eigvalsh(a.P - b.P).min() >= -1e-8
        assert np.linalg.norm(sare_residual(p.model, p.weights, P)) <= 10 * tol
        assert is_ms_stable(p.model, K)

    def test_unstable_initial_gain(self):
        p = example1()
        with pytest.raises(NotStabilizing):
            model_policy_iteration(p.model, p.weights, np.zeros((2, 2)))

    def test_max_iters(self):
        p = example1()
        with pytest.raises(MaxItersExceeded) as info:
            model_policy_iteration(p.model, p.weights, p.K0, max_iters=2)
        assert info.value.report.iterations == 2

    def test_fixed_iteration_count(self):
        p = example1()
        _, _, report = model_policy_iteration(p.model, p.weights, p.K0, n_iter=3)
        assert report.iterations == 3
        assert not report.converged

    def test_runtime(self):
        for p in (example1(), example2(sigma2=0.04)):
            start = time.perf_counter()
            model_policy_iteration(p.model, p.weights, p.K0)
            assert time.perf_counter() - start < 1.0


class TestVarianceSearch:
    def test_example2_stability_limit(self):
        p = example2()
        assert stabilizing_sigma2_limit(p.model, p.K0) == pytest.approx(
            ref.EX2_K0_SIGMA2_LIMIT, abs=1e-9)

    def test_calibrate_example1(self):
        p = example1()
        assert calibrate_sigma2(p.model, p.weights, p.K0, p.P_reference) == \
            pytest.approx(1.0, abs=1e-5)

    def test_calibrate_example2(self):
        p = example2()
        assert calibrate_sigma2(p.model, p.weights, p.K0, p.P_reference) == \
            pytest.approx(0.04, abs=1e-5)

    def test_recovered_indefinite_weight(self):
        p = example1("indefinite", R=EX1_INDEFINITE_R_RECOVERED)
        P, K = solve_sare(p.model, p.weights, p.K0)
        np.testing.assert_allclose(P, ref.EX1_INDEF1_P, rtol=1e-10)
        assert np.abs(P - np.array(EX1_VARIANTS["indefinite"]["P"])).max() <= 5e-5
