"""Policy iteration with least-squares estimation of ``[A B]``.

The learner knows ``C``, ``D`` and the noise variance but not ``A`` and
``B``.  It rolls out the current gain on the plant, estimates
``theta = [A B]'`` (so that ``theta' z = A x + B u`` for ``z = [x; u]``)
by ridge regression, and runs evaluation and improvement on the estimated
model.

Under a fixed gain every regressor ``z_t = [x_t; K x_t]`` lies in the
n-dimensional range of ``[I; K]``, so one iteration's data only identify
``A + BK``.  :class:`ThetaEstimator` therefore accumulates the normal
equations over iterations, and can shrink toward a prior estimate instead
of zero so the unexcited directions keep their prior values.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import MaxItersExceeded, RankDeficient, SingularGram
from .oracle import improve_gain
from .policy_iteration import regression_from_batches
from .system import (SystemModel, closed_loop, is_ms_stable, ms_radius,
                     simulate_paths, solve_stochastic_lyapunov,
                     stage_cost_matrix)

LEVEL = "level"
DIFFERENCE = "difference"
DIVERGENCE_BOUND = 1e9


class KnownNoise(NamedTuple):
    """The part of the model the learner is given."""

    C: np.ndarray
    D: np.ndarray
    sigma2: float

    @classmethod
    def from_model(cls, model):
        return cls(model.C, model.D, model.sigma2)


def _check_form(residual_form):
    if residual_form not in (LEVEL, DIFFERENCE):
        raise ValueError(f"residual_form must be {LEVEL!r} or {DIFFERENCE!r}, "
                         f"got {residual_form!r}")
    return residual_form


@dataclass
class ParameterEstimate:
    """Stacked estimate ``theta`` of shape ``(n + m, n)``.

    In ``level`` form ``theta = [A B]'``.  In ``difference`` form the
    regression target is ``x_{t+1} - x_t``, so ``theta = [A - I, B]'`` and
    :attr:`A` adds the identity back.
    """

    theta: np.ndarray
    n: int
    residual_form: str = LEVEL

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        _check_form(self.residual_form)
        if self.theta.ndim != 2 or self.theta.shape[1] != self.n \
                or self.theta.shape[0] <= self.n:
            raise ValueError(f"theta must be (n+m, n) with n={self.n}, "
                             f"got {self.theta.shape}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta has non-finite entries")

    @classmethod
    def from_matrices(cls, A, B, residual_form=LEVEL):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        top = A - np.eye(A.shape[0]) if residual_form == DIFFERENCE else A
        return cls(np.vstack([top.T, B.T]), A.shape[0], residual_form)

    @property
    def m(self):
        return self.theta.shape[0] - self.n

    @property
    def A(self):
        top = self.theta[:self.n].T
        return top + np.eye(self.n) if self.residual_form == DIFFERENCE else top

    @property
    def B(self):
        return self.theta[self.n:].T

    def in_form(self, residual_form):
        return ParameterEstimate.from_matrices(self.A, self.B, residual_form)

    def model(self, noise):
        return SystemModel(self.A, self.B, noise.C, noise.D, noise.sigma2)


def regressors(batch, K):
    """Regressors ``z_t = [x_t; K x_t]`` and next states for ``t = s..s+l``.

    Returns ``(Z, X_next)`` with one row per (path, time) sample.
    """
    n = batch.paths.shape[2]
    x = batch.paths[:, :-1].reshape(-1, n)
    Z = np.hstack([x, x @ np.asarray(K, dtype=float).T])
    return Z, batch.paths[:, 1:].reshape(-1, n)


class ThetaEstimator:
    """Running ridge regression for ``theta``.

    Solves ``(sum z z' + lam I) theta = sum z y' + lam theta_prior`` where
    ``y`` is ``x_{t+1}`` (level form) or ``x_{t+1} - x_t`` (difference form).
    With no prior and ``lam = 1`` this is the plain ``tr(theta' theta)``
    penalized estimator.
    Dividing both sums by the path count ``L`` leaves the solution unchanged,
    so the regularizer's relative weight shrinks like ``1/L``.
    """

    def __init__(self, n, m, residual_form=LEVEL, prior=None, ridge=1.0):
        if ridge <= 0:
            raise ValueError(f"ridge must be positive, got {ridge!r}")
        self.n, self.m = n, m
        self.ridge = float(ridge)
        self.residual_form = _check_form(residual_form)
        self.prior = None if prior is None else prior.in_form(residual_form).theta
        self.reset()

    def reset(self):
        d = self.n + self.m
        self.gram = self.ridge * np.eye(d)
        self.cross = (np.zeros((d, self.n)) if self.prior is None
                      else self.ridge * self.prior)
        self.samples = 0

    def add(self, batch, K):
        Z, X_next = regressors(batch, K)
        if self.residual_form == DIFFERENCE:
            X_next = X_next - Z[:, :self.n]
        self.gram += Z.T @ Z
        self.cross += Z.T @ X_next
        self.samples += Z.shape[0]
        return self

    def estimate(self):
        if not np.all(np.isfinite(self.gram)) or np.linalg.cond(self.gram) > 1e14:
            raise SingularGram("regularized Gram matrix is numerically singular")
        theta = np.linalg.solve(self.gram, self.cross)
        return ParameterEstimate(theta, self.n, self.residual_form)


def update_theta(batch, K, residual_form=LEVEL, prior=None, ridge=1.0):
    """Ridge estimate of ``theta`` from a single batch collected under ``K``.

    ``batch`` may also be a list of batches collected under the same gain.
    """
    batches = batch if isinstance(batch, (list, tuple)) else [batch]
    n = batches[0].paths.shape[2]
    m = np.asarray(K).shape[0]
    est = ThetaEstimator(n, m, residual_form, prior, ridge)
    for b in batches:
        est.add(b, K)
    return est.estimate()


def estimated_policy_evaluation(est, noise, weights, K):
    """Value of ``K`` on the estimated model, via the stochastic Lyapunov equation."""
    model = est.model(noise)
    F, G = closed_loop(model, K)
    return solve_stochastic_lyapunov(F, G, noise.sigma2, stage_cost_matrix(weights, K))


def estimated_policy_improvement(est, noise, weights, P):
    """Greedy gain computed with the estimated ``A`` and ``B``."""
    return improve_gain(est.model(noise), weights, P)


class Plant:
    """Black-box plant: the learner only sees rollouts from it."""

    def __init__(self, model, max_norm=DIVERGENCE_BOUND):
        self._model = model
        self.max_norm = max_norm

    def rollout(self, K, window, L, seed, stream=()):
        return simulate_paths(self._model, K, window.x0, window.start, window.length,
                              L, seed, stream, max_norm=self.max_norm)


@dataclass
class SysIdIteration:
    iteration: int
    K: np.ndarray
    P: np.ndarray
    P_data: np.ndarray
    discrepancy: float
    delta: float
    estimated_radius: float
    radius: float
    theta_error: float
    error: float = None


@dataclass
class SysIdRunRecord:
    iterations: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.iterations)


def run_algorithm2(model, weights, K0, theta0, plan, tol=1e-10, max_iters=500,
                   n_iter=None, evaluation="model", residual_form=LEVEL,
                   accumulate=True, prior="initial", ridge=1.0,
                   max_norm=DIVERGENCE_BOUND, reference_P=None):
    """Policy iteration on an estimated model.

    Each iteration rolls out ``K_i`` on the plant for every plan window,
    evaluates ``K_i``, improves it with ``theta_i``, then refits ``theta``.

    Parameters
    ----------
    model : SystemModel
        The true plant.  Only rollouts and ``(C, D, sigma2)`` reach the
        learner; ``A`` and ``B`` feed diagnostics in the record.
    theta0 : ParameterEstimate or (A0, B0)
        Initial estimate.
    plan : ExcitationPlan
        Windows and path count for the rollouts; ``plan.mode`` is ignored
        because the learner only has sample paths.
    evaluation : {"model", "data"}
        ``"model"`` solves the Lyapunov equation of the estimated model;
        ``"data"`` fits P from the rollouts as in trajectory-based policy
        iteration.  The other value is always recorded as ``P_data`` or
        ``P`` for comparison.
    accumulate : bool
        Keep the normal equations from earlier iterations.  Without it the
        estimate sees a single gain per refit and ``[A B]`` is not
        identifiable.
    prior : {"initial", "zero"}
        Shrink ``theta`` toward ``theta0`` or toward zero.
    ridge : float
        Weight of the shrinkage term.  Noise-free data tolerate a small
        weight, which removes most of the shrinkage bias.
    max_norm : float
        Rollouts whose state norm exceeds this abort with
        :class:`~stochlq.errors.DivergenceError`.

    Returns
    -------
    P, K, estimate, record
    """
    if evaluation not in ("model", "data"):
        raise ValueError(f"evaluation must be 'model' or 'data', got {evaluation!r}")
    if prior not in ("initial", "zero"):
        raise ValueError(f"prior must be 'initial' or 'zero', got {prior!r}")
    weights.check(model)
    n, m = model.n, model.m
    plant = Plant(model, max_norm)
    noise = KnownNoise.from_model(model)
    if not isinstance(theta0, ParameterEstimate):
        theta0 = ParameterEstimate.from_matrices(*theta0, residual_form)
    est = theta0.in_form(residual_form)
    estimator = ThetaEstimator(n, m, residual_form,
                               prior=est if prior == "initial" else None,
                               ridge=ridge)
    true_theta = ParameterEstimate.from_matrices(model.A, model.B).theta

    K = np.asarray(K0, dtype=float)
    record = SysIdRunRecord()
    P_prev = np.zeros((n, n))
    limit = n_iter if n_iter is not None else max_iters
    for i in range(limit):
        batches = [plant.rollout(K, w, plan.paths, plan.seed, (i, j))
                   for j, w in enumerate(plan.windows)]
        try:
            P_data, _ = regression_from_batches(batches, weights, K).solve()
        except RankDeficient:
            P_data = None
        est_model = est.model(noise)
        F_hat, G_hat = closed_loop(est_model, K)
        est_radius = ms_radius(F_hat, G_hat, noise.sigma2)
        if evaluation == "model":
            P = estimated_policy_evaluation(est, noise, weights, K)
        else:
            if P_data is None:
                raise RankDeficient(f"rollouts at iteration {i} do not identify P")
            P = P_data
        discrepancy = np.nan if P_data is None else float(np.linalg.norm(P - P_data))
        delta = float(np.linalg.norm(P - P_prev))
        record.iterations.append(SysIdIteration(
            i, K, P, P_data, discrepancy, delta, est_radius,
            is_ms_stable(model, K).radius,
            float(np.linalg.norm(est.in_form(LEVEL).theta - true_theta)),
            None if reference_P is None else float(np.linalg.norm(P - reference_P))))

        K_next = estimated_policy_improvement(est, noise, weights, P)
        if not accumulate:
            estimator.reset()
        for b in batches:
            estimator.add(b, K)
        est = estimator.estimate()
        K = K_next
        P_prev = P
        if n_iter is None and delta < tol:
            record.converged = True
            return P, K, est, record
    if n_iter is not None:
        record.converged = record.iterations[-1].delta < tol
        return P_prev, K, est, record
    raise MaxItersExceeded(
        f"no convergence to tol={tol:g} within {max_iters} iterations", record)
