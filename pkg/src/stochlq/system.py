"""Plant model, mean-square stability, Lyapunov solves and simulation.

The plant is ``x_{t+1} = A x_t + B u_t + (C x_t + D u_t) w_t`` with scalar
i.i.d. Gaussian ``w_t ~ N(0, sigma2)``.  Under ``u = K x`` the closed loop
is ``x_{t+1} = (F + w_t G) x_t`` with ``F = A + BK`` and ``G = C + DK``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (DivergenceError, NotStable, ShapeMismatch,
                     SingularSystem)
from .matops import check_symmetric, symmetrize, unvec, vec

STABILITY_TOL = 1e-9


def _as_matrix(value, name):
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True)
class SystemModel:
    """The quadruple ``[A, C; B, D]`` and the noise variance."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ShapeMismatch(f"A must be square, got {self.A.shape}")
        if self.C.shape != (n, n):
            raise ShapeMismatch(f"C must be {n}x{n}, got {self.C.shape}")
        if self.B.shape[0] != n:
            raise ShapeMismatch(f"B must have {n} rows, got {self.B.shape}")
        if self.D.shape != self.B.shape:
            raise ShapeMismatch(
                f"D must match B's shape {self.B.shape}, got {self.D.shape}")
        sigma2 = float(self.sigma2)
        if not sigma2 >= 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def with_sigma2(self, sigma2):
        return SystemModel(self.A, self.B, self.C, self.D, sigma2)


@dataclass(frozen=True)
class CostWeights:
    """Weights of the stage cost ``x'Qx + 2u'Sx + u'Ru``."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = check_symmetric(_as_matrix(self.Q, "Q"), name="Q")
        R = check_symmetric(_as_matrix(self.R, "R"), name="R")
        S = _as_matrix(self.S, "S")
        if S.shape != (R.shape[0], Q.shape[0]):
            raise ShapeMismatch(
                f"S must be {R.shape[0]}x{Q.shape[0]}, got {S.shape}")
        object.__setattr__(self, "Q", symmetrize(Q))
        object.__setattr__(self, "R", symmetrize(R))
        object.__setattr__(self, "S", S)

    @property
    def standard_assumption(self):
        """True when ``R > 0`` and ``Q - S'R^{-1}S > 0``.

        Informational only: the indefinite-weight experiments violate it on
        purpose.
        """
        if np.linalg.eigvalsh(self.R).min() <= 0:
            return False
        schur = self.Q - self.S.T @ np.linalg.solve(self.R, self.S)
        return bool(np.linalg.eigvalsh(symmetrize(schur)).min() > 0)

    def check(self, model):
        if self.Q.shape != (model.n, model.n) or self.R.shape != (model.m, model.m):
            raise ShapeMismatch(
                f"weights (Q {self.Q.shape}, R {self.R.shape}) do not match "
                f"n={model.n}, m={model.m}")
        return self


def _check_gain(model, K):
    K = np.asarray(K, dtype=float)
    if K.shape != (model.m, model.n):
        raise ShapeMismatch(
            f"gain must be {model.m}x{model.n}, got {K.shape}")
    return K


def closed_loop(model, K):
    """Return ``(F, G) = (A + BK, C + DK)``."""
    K = _check_gain(model, K)
    return model.A + model.B @ K, model.C + model.D @ K


def stage_cost_matrix(weights, K):
    """``Q + K'S + S'K + K'RK``: the stage cost of ``u = Kx`` as a quadratic in x."""
    K = np.asarray(K, dtype=float)
    S, R = weights.S, weights.R
    return symmetrize(weights.Q + K.T @ S + S.T @ K + K.T @ R @ K)


def second_moment_operator(F, G, sigma2):
    """``F'kron F' + sigma2 G'kron G'``, acting on ``vec(P)``."""
    return np.kron(F.T, F.T) + sigma2 * np.kron(G.T, G.T)


def ms_radius(F, G, sigma2):
    return float(np.abs(np.linalg.eigvals(second_moment_operator(F, G, sigma2))).max())


@dataclass(frozen=True)
class StabilityCheck:
    stable: bool
    radius: float

    def __bool__(self):
        return self.stable


def is_ms_stable(model, K, tol=STABILITY_TOL):
    """Mean-square stability of the closed loop under ``u = Kx``.

    Stable iff the spectral radius of ``F'kron F' + sigma2 G'kron G'`` is
    below ``1 - tol``.  The result is truthy when stable and carries the
    radius for diagnostics.
    """
    F, G = closed_loop(model, K)
    rho = ms_radius(F, G, model.sigma2)
    return StabilityCheck(rho < 1.0 - tol, rho)


def solve_stochastic_lyapunov(F, G, sigma2, M):
    """Solve ``P = F'PF + sigma2 G'PG + M`` for symmetric ``P``.

    Raises
    ------
    NotStable
        If the pair ``(F, G)`` is not mean-square stable; the solution would
        not be the cost-to-go even if the linear system were solvable.
    SingularSystem
        If the ``n^2 x n^2`` linear solve fails.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    M = np.asarray(M, dtype=float)
    n = F.shape[0]
    T = second_moment_operator(F, G, sigma2)
    rho = float(np.abs(np.linalg.eigvals(T)).max())
    if rho >= 1.0:
        raise NotStable(f"closed loop is not mean-square stable (radius {rho:.6g})")
    try:
        p = np.linalg.solve(np.eye(n * n) - T, vec(M))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return symmetrize(unvec(p, n))


def lyapunov_residual(F, G, sigma2, M, P):
    return P - F.T @ P @ F - sigma2 * G.T @ P @ G - M


def noise_stream(seed, *keys):
    """Independent generator for the substream ``(seed, *keys)``.

    The key tuple is mixed into numpy's ``SeedSequence`` as a spawn key, so a
    path's noise depends only on its own key and never on how many other
    paths are drawn or in what order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class TrajectoryBatch:
    """``L`` sample paths on the window ``t = s, ..., s + l + 1``.

    ``paths[k, t - s]`` is the state of path ``k`` at time ``t``;
    ``noise[k, t - s]`` is the ``w_t`` that produced ``paths[k, t - s + 1]``.
    """

    paths: np.ndarray
    noise: np.ndarray
    seed: int
    s: int
    l: int
    stream: tuple = field(default_factory=tuple)

    @property
    def L(self):
        return self.paths.shape[0]

    @property
    def times(self):
        return np.arange(self.s, self.s + self.l + 2)

    def terminal_second_moment(self):
        """Sample mean of ``x x'`` at ``t = s + l + 1``."""
        xt = self.paths[:, -1]
        return xt.T @ xt / self.L


def simulate_paths(model, K, x0, s, l, L, seed, stream=(), max_norm=None):
    """Simulate ``L`` closed-loop paths from the deterministic state ``x0``.

    Path ``k`` draws its ``l + 1`` noise values from
    ``noise_stream(seed, *stream, k)``.  With ``max_norm`` set, any state
    whose norm exceeds it raises :class:`DivergenceError`.
    """
    if L < 1 or l < 0:
        raise ValueError(f"need L >= 1 and l >= 0, got L={L}, l={l}")
    F, G = closed_loop(model, K)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (model.n,):
        raise ShapeMismatch(f"x0 must have length {model.n}, got {x0.shape}")

    sigma = np.sqrt(model.sigma2)
    noise = np.empty((L, l + 1))
    for k in range(L):
        noise[k] = sigma * noise_stream(seed, *stream, k).standard_normal(l + 1)

    paths = np.empty((L, l + 2, model.n))
    paths[:, 0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(l + 1):
            x = paths[:, t]
            paths[:, t + 1] = x @ F.T + noise[:, t, None] * (x @ G.T)
            if max_norm is not None:
                peak = np.linalg.norm(paths[:, t + 1], axis=1).max()
                if not peak <= max_norm:
                    raise DivergenceError(
                        f"rollout diverged at t={s + t + 1}: |x| = {peak:.3e} "
                        f"exceeds {max_norm:.1e}")
    return TrajectoryBatch(paths, noise, int(seed), int(s), int(l), tuple(stream))


def _moment_stack(F, G, sigma2, x0, count):
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    M = np.empty((count, n, n))
    M[0] = np.outer(x0, x0)
    for t in range(1, count):
        prev = M[t - 1]
        M[t] = F @ prev @ F.T + sigma2 * (G @ prev @ G.T)
    return M


def propagate_moments(model, K, x0, s, l):
    """Exact second moments ``E[x_t x_t']`` for ``t = s, ..., s + l + 1``.

    Returns an array of shape ``(l + 2, n, n)``; index ``t - s``.  Since the
    noise is independent of the state, ``M_{t+1} = F M_t F' + sigma2 G M_t G'``.
    """
    if l < 0:
        raise ValueError(f"l must be >= 0, got {l}")
    F, G = closed_loop(model, K)
    return _moment_stack(F, G, model.sigma2, x0, l + 2)


def evaluate_cost(model, weights, K, x0, horizon):
    """Expected cost ``sum_{t=0}^{horizon} E[x_t' Phi x_t]`` under ``u = Kx``.

    ``Phi = Q + K'S + S'K + K'RK``.  For a stabilizing gain this tends to
    ``x0' P x0`` as the horizon grows, with ``P`` the Lyapunov solution.
    """
    F, G = closed_loop(model, K)
    Phi = stage_cost_matrix(weights, K)
    M = _moment_stack(F, G, model.sigma2, x0, int(horizon) + 1)
    return float(np.einsum("ij,tji->", Phi, M))
