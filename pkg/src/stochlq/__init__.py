"""Stochastic linear-quadratic control with multiplicative noise.

Model-based policy iteration (:mod:`stochlq.oracle`), trajectory-based
policy iteration (:mod:`stochlq.policy_iteration`) and policy iteration on a
least-squares model estimate (:mod:`stochlq.sysid`).
"""

from .errors import (ConfigError, DimensionMismatch, DivergenceError,
                     IllConditionedWarning, InstabilityError, MaxItersExceeded,
                     MissingField, NotStabilizing, NotStable, NotSymmetric,
                     NumericalError, ParseError, QuasiRNotPD, RankDeficient,
                     ShapeMismatch, SingularGram, SingularSystem, StochLQError)
from .matops import duplication_w, inv_vec_plus, kron, vec, vec_plus
from .oracle import (SolveReport, improve_gain, model_policy_iteration,
                     sare_residual, solve_sare)
from .policy_iteration import (ExcitationPlan, Window, default_plan, delta_j,
                               evaluate_policy, run_algorithm1, terminal_row)
from .sysid import (ParameterEstimate, ThetaEstimator, estimated_policy_evaluation,
                    estimated_policy_improvement, run_algorithm2, update_theta)
from .system import (CostWeights, SystemModel, TrajectoryBatch, closed_loop,
                     evaluate_cost, is_ms_stable, propagate_moments,
                     simulate_paths, solve_stochastic_lyapunov)

__version__ = "0.1.0"
