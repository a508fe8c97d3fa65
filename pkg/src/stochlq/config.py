"""Experiment configuration files.

Configs are TOML with the sections ``model``, ``cost``, ``policy``,
``plan``, ``solver`` and ``output``.  Matrices are row-major nested lists::

    [model]
    A = [[2, 1], [0, 2]]
    ...
    sigma2 = 1.0

    [policy]
    K0 = [[-0.4, 3.8], [-0.5, -1.4]]

Every matrix is checked against the others on load, and errors name the
offending fields.
"""

import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, MissingField, ParseError
from .policy_iteration import (EXACT, ExcitationPlan, Window,
                               default_initial_states)
from .system import CostWeights, SystemModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BUNDLED = ("example1", "example1_zero", "example1_indefinite", "example2")


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-10
    max_iters: int = 500
    iterations: int = None
    evaluation: str = "model"
    residual_form: str = "level"
    ridge: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: SystemModel
    weights: CostWeights
    K0: np.ndarray
    plan: ExcitationPlan
    solver: SolverSettings
    theta0: tuple = None
    out_dir: str = "out"

    def with_overrides(self, mode=None, paths=None, seed=None, tol=None,
                       max_iters=None, out=None, sigma2=None):
        """Copy with command-line overrides applied; ``None`` keeps a value."""
        plan_changes = {k: v for k, v in
                        dict(mode=mode, paths=paths, seed=seed).items() if v is not None}
        solver_changes = {k: v for k, v in
                          dict(tol=tol, max_iters=max_iters).items() if v is not None}
        return replace(
            self,
            model=self.model if sigma2 is None else self.model.with_sigma2(sigma2),
            plan=self.plan.replace(**plan_changes) if plan_changes else self.plan,
            solver=replace(self.solver, **solver_changes),
            out_dir=self.out_dir if out is None else str(out))


def _get(table, section, key, required=True, default=None):
    sec = table.get(section, {})
    if not isinstance(sec, dict):
        raise ParseError(f"{section}: expected a table, got {type(sec).__name__}")
    if key not in sec:
        if required:
            raise MissingField(f"missing required field {section}.{key}")
        return default
    return sec[key]


def _matrix(table, section, key, required=True):
    raw = _get(table, section, key, required)
    if raw is None:
        return None
    field = f"{section}.{key}"
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise ParseError(f"{field}: expected a nested list of rows")
    if len({len(r) for r in raw}) != 1 or not raw[0]:
        raise ParseError(f"{field}: rows have unequal or zero length")
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{field}: non-numeric entry ({exc})") from None
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{field}: non-finite entry")
    return arr


def _number(table, section, key, kind, default):
    raw = _get(table, section, key, required=False, default=default)
    if raw is None:
        return None
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ParseError(f"{section}.{key}: expected a number, got {raw!r}")
    if kind is int and not float(raw).is_integer():
        raise ParseError(f"{section}.{key}: expected an integer, got {raw!r}")
    return kind(raw)


def _string(table, section, key, default, choices=None):
    raw = _get(table, section, key, required=False, default=default)
    if not isinstance(raw, str):
        raise ParseError(f"{section}.{key}: expected a string, got {raw!r}")
    if choices is not None and raw not in choices:
        raise ParseError(f"{section}.{key}: must be one of {sorted(choices)}, got {raw!r}")
    return raw


def _expect(shape, expected, fields):
    if shape != expected:
        raise DimensionMismatch(
            f"{fields}: shape {shape[0]}x{shape[1]} does not conform "
            f"(expected {expected[0]}x{expected[1]})")


def _check_dimensions(mats):
    A, B = mats["A"], mats["B"]
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"model.A must be square, got {A.shape[0]}x{A.shape[1]}")
    n = A.shape[0]
    if B.shape[0] != n:
        raise DimensionMismatch(f"A/B: B has {B.shape[0]} rows, A is {n}x{n}")
    m = B.shape[1]
    K0 = mats["K0"]
    if K0.shape[1] != n:
        raise DimensionMismatch(f"A/K0: K0 has {K0.shape[1]} columns, A is {n}x{n}")
    if K0.shape[0] != m:
        raise DimensionMismatch(
            f"B/K0: B has {m} columns but K0 has {K0.shape[0]} rows")
    _expect(mats["C"].shape, (n, n), "A/C")
    _expect(mats["D"].shape, (n, m), "B/D")
    _expect(mats["Q"].shape, (n, n), "A/Q")
    _expect(mats["S"].shape, (m, n), "B/S")
    _expect(mats["R"].shape, (m, m), "B/R")
    if mats.get("A0") is not None:
        _expect(mats["A0"].shape, (n, n), "A/A0")
    if mats.get("B0") is not None:
        _expect(mats["B0"].shape, (n, m), "B/B0")
    return n, m


def _plan(table, n):
    raw_states = _get(table, "plan", "initial_states", required=False)
    if raw_states is None:
        states = default_initial_states(n)
    else:
        states = _matrix(table, "plan", "initial_states")
        if states.shape[1] != n:
            raise DimensionMismatch(
                f"A/plan.initial_states: states have length {states.shape[1]}, A is {n}x{n}")
    start = _number(table, "plan", "start", int, 0)
    length = _number(table, "plan", "length", int, 200)
    mode = _string(table, "plan", "mode", EXACT, {"exact", "mc"})
    paths = _number(table, "plan", "paths", int, 1000)
    seed = _number(table, "plan", "seed", int, 0)
    if length < 0 or start < 0:
        raise ParseError("plan.start and plan.length must be >= 0")
    if paths < 1:
        raise ParseError("plan.paths must be >= 1")
    try:
        return ExcitationPlan([Window(x, start, length) for x in states], mode, paths, seed)
    except ValueError as exc:
        raise DimensionMismatch(f"plan.initial_states: {exc}") from None


def _solver(table):
    settings = SolverSettings(
        tol=_number(table, "solver", "tol", float, 1e-10),
        max_iters=_number(table, "solver", "max_iters", int, 500),
        iterations=_number(table, "solver", "iterations", int, None),
        evaluation=_string(table, "solver", "evaluation", "model", {"model", "data"}),
        residual_form=_string(table, "solver", "residual_form", "level",
                              {"level", "difference"}),
        ridge=_number(table, "solver", "ridge", float, 1.0))
    if settings.tol <= 0 or settings.max_iters < 1 or settings.ridge <= 0:
        raise ParseError("solver.tol, solver.max_iters and solver.ridge must be positive")
    if settings.iterations is not None and settings.iterations < 1:
        raise ParseError("solver.iterations must be >= 1")
    return settings


def parse_config(text, name="config"):
    """Build an :class:`ExperimentConfig` from TOML text."""
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{name}: {exc}") from None

    mats = {key: _matrix(table, "model", key) for key in "ABCD"}
    mats.update({key: _matrix(table, "cost", key) for key in "QSR"})
    mats["K0"] = _matrix(table, "policy", "K0")
    mats["A0"] = _matrix(table, "policy", "A0", required=False)
    mats["B0"] = _matrix(table, "policy", "B0", required=False)
    if (mats["A0"] is None) != (mats["B0"] is None):
        raise MissingField("policy.A0 and policy.B0 must be given together")
    n, _ = _check_dimensions(mats)

    sigma2 = _number(table, "model", "sigma2", float, 1.0)
    if sigma2 < 0:
        raise ParseError(f"model.sigma2 must be >= 0, got {sigma2}")
    try:
        weights = CostWeights(mats["Q"], mats["S"], mats["R"])
    except ValueError as exc:
        raise ParseError(f"cost: {exc}") from None
    theta0 = None if mats["A0"] is None else (mats["A0"], mats["B0"])
    return ExperimentConfig(
        name=_string(table, "output", "name", name),
        model=SystemModel(mats["A"], mats["B"], mats["C"], mats["D"], sigma2),
        weights=weights, K0=mats["K0"], plan=_plan(table, n), solver=_solver(table),
        theta0=theta0, out_dir=_string(table, "output", "dir", "out"))


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.stem)


def bundled_config_path(name):
    if name not in BUNDLED:
        raise ValueError(f"unknown bundled config {name!r}; choose from {BUNDLED}")
    return resources.files("stochlq") / "configs" / f"{name}.toml"


def load_bundled(name):
    path = bundled_config_path(name)
    return parse_config(path.read_text(encoding="utf-8"), name)
