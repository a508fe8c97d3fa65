"""Model-based ground truth for the stochastic LQ problem.

Policy iteration with exact Lyapunov solves (Kleinman-type) converges to the
solution of the stochastic algebraic Riccati equation

    P = Q + A'PA + s2 C'PC - L' H^{-1} L,
    H = R + B'PB + s2 D'PD,  L = B'PA + s2 D'PC + S,

and the optimal gain ``K = -H^{-1} L``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import MaxItersExceeded, NotStabilizing, QuasiRNotPD
from .system import (closed_loop, is_ms_stable, solve_stochastic_lyapunov,
                     stage_cost_matrix)
from .matops import symmetrize


def _gain_terms(model, weights, P):
    A, B, C, D, s2 = model.A, model.B, model.C, model.D, model.sigma2
    H = symmetrize(weights.R + B.T @ P @ B + s2 * D.T @ P @ D)
    L = B.T @ P @ A + s2 * D.T @ P @ C + weights.S
    eig_min = np.linalg.eigvalsh(H).min()
    if eig_min <= 0:
        raise QuasiRNotPD(
            f"R + B'PB + sigma2 D'PD has eigenvalue {eig_min:.6g} <= 0")
    return H, L


def improve_gain(model, weights, P):
    """Greedy gain ``K = -(R + B'PB + s2 D'PD)^{-1} (B'PA + s2 D'PC + S)``."""
    H, L = _gain_terms(model, weights, np.asarray(P, dtype=float))
    return -np.linalg.solve(H, L)


def sare_residual(model, weights, P):
    """Right side minus left side of the SARE at ``P`` (zero at the solution)."""
    P = np.asarray(P, dtype=float)
    A, C, s2 = model.A, model.C, model.sigma2
    H, L = _gain_terms(model, weights, P)
    return weights.Q + A.T @ P @ A + s2 * C.T @ P @ C - L.T @ np.linalg.solve(H, L) - P


@dataclass
class IterationRecord:
    """One evaluation/improvement step.

    ``K`` is the gain that was evaluated, ``P`` its value matrix, ``radius``
    the mean-square spectral radius of ``K``'s closed loop and ``delta``
    the Frobenius norm of the change from the previous ``P``.
    """

    iteration: int
    K: np.ndarray
    P: np.ndarray
    radius: float
    delta: float


@dataclass
class SolveReport:
    history: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.history)

    def value_sequence(self):
        return [rec.P for rec in self.history]


def model_policy_iteration(model, weights, K0, tol=1e-10, max_iters=500,
                           n_iter=None):
    """Policy iteration with exact Lyapunov-equation policy evaluation.

    Parameters
    ----------
    model, weights : SystemModel, CostWeights
    K0 : (m, n) array_like
        Initial mean-square stabilizer.
    tol : float
        Stop once ``||P_{i+1} - P_i||_F < tol``.  The first iterate is
        compared against the zero matrix.
    max_iters : int
        Cap on evaluations; exceeding it raises :class:`MaxItersExceeded`.
    n_iter : int, optional
        Run exactly this many evaluations and ignore ``tol``.

    Returns
    -------
    P, K, report
        Final value matrix, the gain improved from it, and the iterate
        history.
    """
    K = np.asarray(K0, dtype=float)
    weights.check(model)
    check = is_ms_stable(model, K)
    if not check:
        raise NotStabilizing(
            f"initial gain is not mean-square stabilizing (radius {check.radius:.6g})")

    report = SolveReport()
    P_prev = np.zeros((model.n, model.n))
    limit = n_iter if n_iter is not None else max_iters
    for i in range(limit):
        check = is_ms_stable(model, K)
        if not check:
            raise NotStabilizing(
                f"iterate K({i}) is not mean-square stabilizing "
                f"(radius {check.radius:.6g})")
        F, G = closed_loop(model, K)
        P = solve_stochastic_lyapunov(F, G, model.sigma2, stage_cost_matrix(weights, K))
        delta = float(np.linalg.norm(P - P_prev))
        report.history.append(IterationRecord(i, K, P, check.radius, delta))
        K = improve_gain(model, weights, P)
        P_prev = P
        if n_iter is None and delta < tol:
            report.converged = True
            return P, K, report
    if n_iter is not None:
        report.converged = report.history[-1].delta < tol
        return P_prev, K, report
    raise MaxItersExceeded(
        f"no convergence to tol={tol:g} within {max_iters} iterations", report)


def solve_sare(model, weights, K0, tol=1e-10, max_iters=500):
    """Convenience wrapper returning only ``(P, K)``."""
    P, K, _ = model_policy_iteration(model, weights, K0, tol, max_iters)
    return P, K


def _bisect(f, lo, hi, xtol, max_steps=200):
    for _ in range(max_steps):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if f(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def stabilizing_sigma2_limit(model, K, upper=1e3, xtol=1e-12):
    """Largest noise variance for which ``K`` stays mean-square stabilizing.

    The closed-loop second-moment operator is monotone in the variance, so
    its spectral radius crosses 1 at most once.
    """
    if not is_ms_stable(model.with_sigma2(0.0), K):
        return None
    if is_ms_stable(model.with_sigma2(upper), K):
        return upper
    lo, _ = _bisect(lambda s2: bool(is_ms_stable(model.with_sigma2(s2), K)),
                    0.0, upper, xtol)
    return lo


def calibrate_sigma2(model, weights, K0, P_target, xtol=1e-10):
    """Noise variance whose SARE solution best matches ``P_target``.

    The optimal value matrix is nondecreasing in the noise variance, so the
    search bisects on ``trace(P(s2)) - trace(P_target)`` over the range where
    ``K0`` is a valid starting stabilizer.

    Returns
    -------
    float
        The calibrated variance.

    Raises
    ------
    ValueError
        If the target trace is not bracketed on that range.
    """
    target = float(np.trace(P_target))
    hi = stabilizing_sigma2_limit(model, K0)
    if hi is None:
        raise NotStabilizing("K0 does not stabilize the noise-free system")
    hi -= 1e-9 * max(hi, 1.0)

    def trace_at(s2):
        P, _ = solve_sare(model.with_sigma2(s2), weights, K0)
        return float(np.trace(P))

    if trace_at(0.0) > target or trace_at(hi) < target:
        raise ValueError(
            f"trace {target:.6g} not bracketed on sigma2 in [0, {hi:.6g}]")
    lo, hi = _bisect(lambda s2: trace_at(s2) < target, 0.0, hi, xtol)
    return 0.5 * (lo + hi)
