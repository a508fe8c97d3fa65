"""Data-driven policy iteration.

Policy evaluation fits ``P`` from short trajectory windows through the
Bellman identity on ``[s, s + l + 1]``::

    xi' P xi - E[x_{s+l+1}' P x_{s+l+1}] = E[sum_{t=s}^{s+l} x_t' Phi x_t]

One window gives one linear equation in ``vec(P)``; ``N = n(n+1)/2``
windows with independent initial states identify ``P`` through ``vec_plus``.
Expectations come either from exact moment propagation or from ``L``
simulated sample paths.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (MaxItersExceeded, NotStabilizing, RankDeficient,
                     IllConditionedWarning)
from .matops import duplication_w, half_dim, inv_vec_plus, symmetrize, vec
from .oracle import improve_gain
from .system import (is_ms_stable, propagate_moments, simulate_paths,
                     stage_cost_matrix)

EXACT = "exact"
MONTE_CARLO = "mc"
CONDITION_WARN = 1e8

# Initial states used for the two-state example.
PAPER_STATES_2D = ((3.0, 7.0), (2.0, 18.0), (14.0, 3.0))


@dataclass(frozen=True)
class Window:
    x0: tuple
    start: int = 0
    length: int = 200

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.ravel(self.x0)))
        if self.length < 0:
            raise ValueError(f"window length must be >= 0, got {self.length}")


@dataclass
class ExcitationPlan:
    """Evaluation windows plus how their expectations are computed."""

    windows: list
    mode: str = EXACT
    paths: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.windows = [w if isinstance(w, Window) else Window(*w) for w in self.windows]
        if not self.windows:
            raise ValueError("plan needs at least one window")
        dims = {len(w.x0) for w in self.windows}
        if len(dims) != 1:
            raise ValueError(f"window initial states have mixed dimensions {sorted(dims)}")
        if self.mode not in (EXACT, MONTE_CARLO):
            raise ValueError(f"mode must be {EXACT!r} or {MONTE_CARLO!r}, got {self.mode!r}")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if len(self.windows) < half_dim(self.n):
            raise ValueError(
                f"{len(self.windows)} windows cannot identify "
                f"{half_dim(self.n)} entries of P")

    @property
    def n(self):
        return len(self.windows[0].x0)

    def replace(self, **changes):
        fields = dict(windows=self.windows, mode=self.mode, paths=self.paths,
                      seed=self.seed)
        fields.update(changes)
        return ExcitationPlan(**fields)


def default_initial_states(n, scale=1.0):
    if n == 2:
        return [np.array(x) for x in PAPER_STATES_2D]
    eye = np.eye(n)
    states = [scale * eye[i] for i in range(n)]
    states += [scale * (eye[i] + eye[j]) for i in range(n) for j in range(i + 1, n)]
    return states


def default_plan(n, length=200, start=0, mode=EXACT, paths=1000, seed=0):
    windows = [Window(x, start, length) for x in default_initial_states(n)]
    return ExcitationPlan(windows, mode, paths, seed)


def _exact_statistics(model, K, Phi, window):
    M = propagate_moments(model, K, window.x0, window.start, window.length)
    delta = float(np.einsum("ij,tji->", Phi, M[:-1]))
    return vec(M[-1]), delta


def _sample_statistics(batch, Phi):
    X = batch.paths[:, :-1]
    delta = float(np.einsum("kti,ij,ktj->", X, Phi, X) / batch.L)
    return vec(batch.terminal_second_moment()), delta


def _window_statistics(model, K, Phi, window, mode, L, seed, stream):
    if mode == EXACT:
        terminal, delta = _exact_statistics(model, K, Phi, window)
    elif mode == MONTE_CARLO:
        batch = simulate_paths(model, K, window.x0, window.start, window.length,
                               L, seed, stream)
        terminal, delta = _sample_statistics(batch, Phi)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    xi = np.asarray(window.x0)
    return np.kron(xi, xi) - terminal, delta


def window_statistics(model, weights, K, window, mode=EXACT, L=1000, seed=0,
                      stream=()):
    """Terminal row and cost increment for one window.

    Returns ``(row, delta)`` with ``row = (xi kron xi)' - E[x_T kron x_T]'``
    at ``T = s + l + 1`` and ``delta`` the expected stage cost summed over
    ``t = s, ..., s + l``.  Both come from the same moments or sample paths.
    """
    Phi = stage_cost_matrix(weights, K)
    return _window_statistics(model, K, Phi, window, mode, L, seed, stream)


def delta_j(model, weights, K, window, mode=EXACT, L=1000, seed=0, stream=()):
    """Expected stage cost accumulated over the window."""
    return window_statistics(model, weights, K, window, mode, L, seed, stream)[1]


def terminal_row(model, K, window, mode=EXACT, L=1000, seed=0, stream=()):
    """Regression row ``(xi kron xi)' - E[x_{s+l+1} kron x_{s+l+1}]'``."""
    Phi = np.zeros((model.n, model.n))
    return _window_statistics(model, K, Phi, window, mode, L, seed, stream)[0]


@dataclass
class RegressionSystem:
    """Stacked equations ``X vec(P) = J``."""

    X: np.ndarray
    J: np.ndarray

    @property
    def n(self):
        return int(round(np.sqrt(self.X.shape[1])))

    def solve(self, warn_condition=CONDITION_WARN):
        """Least-squares ``vec_plus(P)`` from ``(X W) vec_plus(P) = J``.

        Returns ``(P, condition_number)``.
        """
        n = self.n
        XW = self.X @ duplication_w(n)
        sv = np.linalg.svd(XW, compute_uv=False)
        N = half_dim(n)
        rank_tol = sv.max() * max(XW.shape) * np.finfo(float).eps if sv.size else 0.0
        rank = int((sv > rank_tol).sum())
        if rank < N:
            raise RankDeficient(
                f"regression has rank {rank} < {N}; the windows do not excite "
                f"every entry of P")
        cond = float(sv[0] / sv[N - 1])
        if cond > warn_condition:
            warnings.warn(f"policy-evaluation regression is ill-conditioned "
                          f"(cond {cond:.3e})", IllConditionedWarning, stacklevel=3)
        v, *_ = np.linalg.lstsq(XW, self.J, rcond=None)
        return symmetrize(inv_vec_plus(v, n)), cond


def assemble_regression(model, weights, K, plan, iteration=0):
    """Build ``X`` and ``J`` from every window of ``plan``.

    Monte Carlo window ``j`` at iteration ``i`` draws from the substream
    ``(plan.seed, i, j, path)``.
    """
    rows, J = [], []
    for j, window in enumerate(plan.windows):
        row, d = window_statistics(model, weights, K, window, plan.mode, plan.paths,
                                   plan.seed, stream=(iteration, j))
        rows.append(row)
        J.append(d)
    return RegressionSystem(np.array(rows), np.array(J))


def regression_from_batches(batches, weights, K):
    """Regression rows built from already simulated batches (one per window)."""
    Phi = stage_cost_matrix(weights, K)
    rows, J = [], []
    for batch in batches:
        terminal, d = _sample_statistics(batch, Phi)
        xi = batch.paths[0, 0]
        rows.append(np.kron(xi, xi) - terminal)
        J.append(d)
    return RegressionSystem(np.array(rows), np.array(J))


@dataclass
class PolicyEvaluation:
    P: np.ndarray
    condition_number: float
    regression: RegressionSystem


def evaluate_policy(model, weights, K, plan, iteration=0):
    """Value matrix of the gain ``K`` fitted from the plan's windows."""
    check = is_ms_stable(model, K)
    if not check:
        raise NotStabilizing(
            f"cannot evaluate a non-stabilizing gain (radius {check.radius:.6g})")
    if plan.n != model.n:
        raise ValueError(f"plan states have dimension {plan.n}, model has n={model.n}")
    system = assemble_regression(model, weights, K, plan, iteration)
    P, cond = system.solve()
    return PolicyEvaluation(P, cond, system)


@dataclass
class RLIteration:
    iteration: int
    K: np.ndarray
    P: np.ndarray
    condition_number: float
    radius: float
    delta: float
    error: float = None


@dataclass
class RLRunRecord:
    iterations: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.iterations)


def run_algorithm1(model, weights, K0, plan, tol=1e-10, max_iters=500,
                   n_iter=None, reference_P=None):
    """Policy iteration with trajectory-based policy evaluation.

    Each iteration fits ``P`` for the current gain from the plan's windows,
    then improves the gain with the model-based greedy formula.  Every gain
    is stability-checked before it is evaluated.

    Parameters
    ----------
    tol : float
        Stopping threshold on ``||P_{i+1} - P_i||_F`` (first iterate compared
        with zero).
    n_iter : int, optional
        Run exactly this many iterations; ``tol`` is then only recorded.
    reference_P : ndarray, optional
        If given, each record stores the Frobenius error against it.

    Returns
    -------
    P, K, record
    """
    weights.check(model)
    K = np.asarray(K0, dtype=float)
    record = RLRunRecord()
    P_prev = np.zeros((model.n, model.n))
    limit = n_iter if n_iter is not None else max_iters
    for i in range(limit):
        check = is_ms_stable(model, K)
        if not check:
            which = "initial gain" if i == 0 else f"iterate K({i})"
            raise NotStabilizing(
                f"{which} is not mean-square stabilizing (radius {check.radius:.6g})")
        result = evaluate_policy(model, weights, K, plan, iteration=i)
        P = result.P
        delta = float(np.linalg.norm(P - P_prev))
        err = None if reference_P is None else float(np.linalg.norm(P - reference_P))
        record.iterations.append(
            RLIteration(i, K, P, result.condition_number, check.radius, delta, err))
        K = improve_gain(model, weights, P)
        P_prev = P
        if n_iter is None and delta < tol:
            record.converged = True
            return P, K, record
    if n_iter is not None:
        record.converged = record.iterations[-1].delta < tol
        return P_prev, K, record
    raise MaxItersExceeded(
        f"no convergence to tol={tol:g} within {max_iters} iterations", record)
