"""Benchmark problems and their reference values.

``example1`` (n = m = 2) and ``example2`` (n = m = 3) are the two
multiplicative-noise plants used to demonstrate the trajectory-based policy
iteration, together with the initial gains, initial states and the value
and gain matrices tabulated for them (four decimals).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .system import CostWeights, SystemModel, is_ms_stable


@dataclass(frozen=True)
class Problem:
    name: str
    model: SystemModel
    weights: CostWeights
    K0: np.ndarray
    initial_states: tuple
    P_reference: np.ndarray = None
    K_reference: np.ndarray = None


EX1_A = [[2, 1], [0, 2]]
EX1_B = [[1, 0], [-0.5, 1]]
EX1_C = [[1, 0], [0.5, 1]]
EX1_D = [[1, 0.5], [0, 1]]
EX1_Q = [[10, 5], [5, 10]]
EX1_S = [[1, 0], [0.5, 1]]
EX1_K0 = [[-0.4, 3.8], [-0.5, -1.4]]
EX1_STATES = ((3.0, 7.0), (2.0, 18.0), (14.0, 3.0))

# R variants of the first example with their tabulated (P, K).
EX1_VARIANTS = {
    "positive": dict(
        R=[[10, 0], [0, 10]],
        P=[[86.3101, 159.5861], [159.5861, 419.6332]],
        K=[[-0.6250, 1.4830], [-0.6568, -1.6745]]),
    "zero": dict(
        R=[[0, 0], [0, 0]],
        P=[[28.9136, 49.9422], [49.9422, 106.2917]],
        K=[[-0.5103, 2.0453], [-0.7384, -1.9275]]),
    "indefinite": dict(
        R=[[0, 0], [0, -5]],
        P=[[28.1154, 47.8493], [47.8493, 100.8027]],
        K=[[-0.5154, 2.0325], [-0.7432, -1.9407]]),
}

# The tabulated indefinite-case (P, K) satisfy the Riccati equation to print
# precision for R = diag(0, -1), not for the tabulated diag(0, -5).
EX1_INDEFINITE_R_RECOVERED = [[0, 0], [0, -1]]

# Direction of the input-matrix error in the initial estimate for the
# identification runs.
EX1_THETA0_DIRECTION = [[1, -1], [1, 1]]
EX1_THETA0_SCALE = 0.1

EX2_A = [[2, 1, 0], [0, 2, 0], [1, 0, 1]]
EX2_B = [[1, 0, 1], [-0.5, 1, 0], [0, 1, 1]]
EX2_C = [[1, 0, 0], [0.5, 1, 1], [0, 0, 1]]
EX2_D = [[1, 0.5, 0], [0, 1, 1], [0, 0, 1]]
EX2_Q = [[10, 5, 0], [5, 10, 0], [0, 0, 1]]
EX2_S = [[1, 0, 1], [0.5, 1, 0], [0, 1, 1]]
EX2_R = [[10, 0, 0], [0, 10, 0], [0, 0, 100]]
EX2_K0 = [[-0.6, -5.8, 0.8], [-0.3, -4.8, 0.4], [-0.7, 4.8, -0.8]]
EX2_STATES = ((1.69, 1.13, -0.59), (0.11, 0.75, -2.10), (0.10, 0.35, 0.58),
              (-0.08, 0.50, 1.14), (0.10, -1.91, 0.32), (-2.00, 0.30, 0.07))
EX2_P = [[44.2609, 39.3667, -3.1271],
         [39.3667, 145.7899, -30.5478],
         [-3.1271, -30.5478, 12.4739]]
EX2_K = [[-1.3493, -0.0494, -0.2034],
         [-0.7136, -2.3848, 0.0886],
         [-0.1755, -0.0418, -0.0554]]
# K0 above is not a mean-square stabilizer at unit variance; the tabulated
# (P, K) are reproduced at this variance (found by calibration).
EX2_SIGMA2_RECOVERED = 0.04
# Semidefinite variant: the third input is left unpenalized.
EX2_R_SEMIDEFINITE = [[10, 0, 0], [0, 10, 0], [0, 0, 0]]


def example1(variant="positive", sigma2=1.0, R=None):
    spec = EX1_VARIANTS[variant]
    model = SystemModel(EX1_A, EX1_B, EX1_C, EX1_D, sigma2)
    weights = CostWeights(EX1_Q, EX1_S, spec["R"] if R is None else R)
    return Problem(f"example1-{variant}", model, weights, np.array(EX1_K0, float),
                   EX1_STATES, np.array(spec["P"], float), np.array(spec["K"], float))


def example2(sigma2=1.0, R=None):
    model = SystemModel(EX2_A, EX2_B, EX2_C, EX2_D, sigma2)
    weights = CostWeights(EX2_Q, EX2_S, EX2_R if R is None else R)
    reference = R is None
    return Problem("example2", model, weights, np.array(EX2_K0, float), EX2_STATES,
                   np.array(EX2_P, float) if reference else None,
                   np.array(EX2_K, float) if reference else None)


def closed_loop_consistent_prior(model, K0, B_error):
    """Initial ``(A0, B0)`` that is wrong but agrees with the plant under ``K0``.

    ``B0 = B + B_error`` and ``A0 = A - B_error K0``, so ``A0 + B0 K0`` equals
    the true ``A + B K0``.  Data collected under ``K0`` cannot tell the two
    apart, and ``K0`` stays a stabilizer of the estimated model.
    """
    B_error = np.asarray(B_error, dtype=float)
    return model.A - B_error @ np.asarray(K0, dtype=float), model.B + B_error


def example1_prior(problem, scale=EX1_THETA0_SCALE):
    return closed_loop_consistent_prior(
        problem.model, problem.K0, scale * np.array(EX1_THETA0_DIRECTION, float))


def random_stabilizable_problem(rng, n, m, sigma2=1.0, noise_scale=0.3,
                                max_radius=0.95, max_value=1e3, max_tries=1000):
    """Random plant with a mean-square stabilizing initial gain.

    ``A`` is drawn with spectral radius in ``[0.5, 1.5]`` so many draws are
    open-loop unstable; the initial gain is the deterministic LQR gain of
    ``(A, B)``.  Draws are rejected until that gain is a mean-square
    stabilizer with radius below ``max_radius`` and its closed-loop value
    stays below ``max_value`` in norm, which keeps the test problems well
    scaled.  Weights satisfy ``R > 0`` and ``Q - S'R^{-1}S > 0``.
    """
    from .oracle import model_policy_iteration

    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        A *= rng.uniform(0.5, 1.5) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-8)
        B = rng.standard_normal((n, m))
        C = noise_scale * rng.standard_normal((n, n))
        D = noise_scale * rng.standard_normal((n, m))
        Q = np.eye(n) + 0.1 * _random_psd(rng, n)
        R = np.eye(m) + 0.1 * _random_psd(rng, m)
        S = 0.1 * rng.standard_normal((m, n))
        model = SystemModel(A, B, C, D, sigma2)
        weights = CostWeights(Q, S, R)
        if not weights.standard_assumption:
            continue
        try:
            X = scipy.linalg.solve_discrete_are(A, B, Q, R)
        except (np.linalg.LinAlgError, ValueError):
            continue
        K0 = -np.linalg.solve(R + B.T @ X @ B, B.T @ X @ A)
        check = is_ms_stable(model, K0)
        if not check or check.radius > max_radius:
            continue
        P, _, _ = model_policy_iteration(model, weights, K0)
        if np.linalg.norm(P) > max_value:
            continue
        return Problem(f"random-n{n}-m{m}", model, weights, K0, ())
    raise RuntimeError(f"no acceptable random problem after {max_tries} draws")


def _random_psd(rng, d):
    X = rng.standard_normal((d, d))
    return X @ X.T / d
