"""Command-line driver.

Subcommands::

    stochlq oracle    --config FILE   model-based policy iteration
    stochlq pi        --config FILE   trajectory-based policy iteration
    stochlq sysid     --config FILE   policy iteration on an estimated model
    stochlq simulate  --config FILE   dump closed-loop sample paths
    stochlq reproduce example1|example2

``--config`` takes a path or the name of a bundled config.  Each run writes
``iterates.csv``, ``trajectories.csv`` (``simulate`` and ``reproduce``) and
``report.txt`` under ``--out``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 instability detected.
"""

import argparse
import csv
import datetime
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import problems
from .config import BUNDLED, load_bundled, load_config
from .errors import (ConfigError, InstabilityError, MissingField,
                     NotStabilizing, StochLQError)
from .matops import vec, vec_plus
from .oracle import (calibrate_sigma2, model_policy_iteration, sare_residual,
                     stabilizing_sigma2_limit)
from .policy_iteration import run_algorithm1
from .sysid import run_algorithm2
from .system import CostWeights, is_ms_stable, simulate_paths

log = logging.getLogger("stochlq")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_UNSTABLE = 4

SIMULATE_PATHS = 10
PRINT_TOL = 5e-5


def exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, InstabilityError):
        return EXIT_UNSTABLE
    return EXIT_NUMERICAL


# -- output -----------------------------------------------------------------

def _num(x):
    # repr is locale independent and round-trips
    if x is None:
        return "nan"
    return repr(float(x))


def write_iterates(path, records, extra=()):
    """One row per iteration: index, vec+(P), vec(K), |dP|, radius, cond.

    ``records`` yields dicts with keys ``iteration, P, K, delta, radius,
    cond`` plus the names in ``extra``.
    """
    records = list(records)
    n = records[0]["P"].shape[0]
    m = records[0]["K"].shape[0]
    N = n * (n + 1) // 2
    header = (["iteration"] + [f"p{i + 1}" for i in range(N)]
              + [f"k{i + 1}" for i in range(m * n)]
              + ["delta_p", "radius", "cond"] + list(extra))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in records:
            writer.writerow(
                [rec["iteration"]] + [_num(v) for v in vec_plus(rec["P"])]
                + [_num(v) for v in vec(rec["K"])]
                + [_num(rec["delta"]), _num(rec["radius"]), _num(rec.get("cond"))]
                + [_num(rec.get(name)) for name in extra])


def write_trajectories(path, batches):
    n = batches[0].paths.shape[2]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window", "t", "path"] + [f"x{i + 1}" for i in range(n)])
        for j, batch in enumerate(batches):
            for k in range(batch.L):
                for t, x in zip(batch.times, batch.paths[k]):
                    writer.writerow([j, int(t), k] + [_num(v) for v in x])


def fmt_matrix(M, indent="    "):
    M = np.atleast_2d(M)
    rows = []
    for row in np.round(M, 4) + 0.0:  # + 0.0 turns -0.0 into 0.0
        rows.append(indent + "[" + ", ".join(f"{v:10.4f}" for v in row) + "]")
    return "\n".join(rows)


class Report:
    def __init__(self, title):
        self.title = title
        self.lines = []

    def add(self, *lines):
        self.lines.extend(lines)

    def matrix(self, label, M):
        self.lines.append(f"{label}:")
        self.lines.append(fmt_matrix(M))

    def text(self):
        return "\n".join(self.lines) + "\n"

    def write(self, path):
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {self.title} | generated {stamp}\n")
            fh.write(self.text())


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- helpers ----------------------------------------------------------------

def _resolve_config(args):
    if args.config is None:
        raise MissingField("--config is required for this subcommand")
    cfg = load_bundled(args.config) if args.config in BUNDLED \
        and not Path(args.config).exists() else load_config(args.config)
    return cfg.with_overrides(mode=args.mode, paths=args.paths, seed=args.seed,
                              tol=args.tol, max_iters=args.max_iters, out=args.out,
                              sigma2=args.sigma2)


def _iterations(args, cfg):
    return args.iterations if args.iterations is not None else cfg.solver.iterations


def _reference(cfg):
    try:
        P, K, _ = model_policy_iteration(cfg.model, cfg.weights, cfg.K0)
        return P, K
    except StochLQError as exc:
        log.warning("no oracle reference: %s", exc)
        return None, None


def _oracle_rows(report):
    return [dict(iteration=r.iteration, P=r.P, K=r.K, delta=r.delta, radius=r.radius)
            for r in report.history]


def _rl_rows(record):
    return [dict(iteration=r.iteration, P=r.P, K=r.K, delta=r.delta, radius=r.radius,
                 cond=r.condition_number, error=r.error) for r in record.iterations]


def _error_block(report, P, P_ref):
    if P_ref is None:
        return
    report.matrix("error P_oracle - P", P_ref - P)
    report.add(f"relative error: {np.linalg.norm(P - P_ref) / np.linalg.norm(P_ref):.3e}")


# -- subcommands ------------------------------------------------------------

def cmd_oracle(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg.out_dir)
    P, K, solve = model_policy_iteration(cfg.model, cfg.weights, cfg.K0,
                                         cfg.solver.tol, cfg.solver.max_iters)
    write_iterates(out / "iterates.csv", _oracle_rows(solve))
    report = Report(f"oracle {cfg.name}")
    report.add(f"sigma2: {cfg.model.sigma2:g}", f"iterations: {solve.iterations}")
    report.matrix("P", P)
    report.matrix("K", K)
    report.add(f"SARE residual (Frobenius): "
               f"{np.linalg.norm(sare_residual(cfg.model, cfg.weights, P)):.3e}",
               "eigenvalues of P: " + ", ".join(f"{e:.6g}" for e in np.linalg.eigvalsh(P)))
    report.write(out / "report.txt")
    print(report.text(), end="")
    return EXIT_OK


def cmd_pi(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg.out_dir)
    P_ref, _ = _reference(cfg)
    P, K, record = run_algorithm1(cfg.model, cfg.weights, cfg.K0, cfg.plan,
                                  cfg.solver.tol, cfg.solver.max_iters,
                                  n_iter=_iterations(args, cfg), reference_P=P_ref)
    write_iterates(out / "iterates.csv", _rl_rows(record), extra=("error",))
    report = Report(f"pi {cfg.name}")
    report.add(f"sigma2: {cfg.model.sigma2:g}", f"mode: {cfg.plan.mode}",
               f"iterations: {len(record)}", f"converged: {record.converged}")
    report.matrix("P", P)
    report.matrix("K", K)
    _error_block(report, P, P_ref)
    report.write(out / "report.txt")
    print(report.text(), end="")
    return EXIT_OK


def cmd_sysid(args):
    cfg = _resolve_config(args)
    if cfg.theta0 is None:
        raise MissingField("policy.A0 and policy.B0 are required for sysid")
    out = _out_dir(cfg.out_dir)
    P_ref, _ = _reference(cfg)
    s = cfg.solver
    P, K, est, record = run_algorithm2(
        cfg.model, cfg.weights, cfg.K0, cfg.theta0, cfg.plan, s.tol, s.max_iters,
        n_iter=_iterations(args, cfg), evaluation=s.evaluation,
        residual_form=s.residual_form, ridge=s.ridge, reference_P=P_ref)
    rows = [dict(iteration=r.iteration, P=r.P, K=r.K, delta=r.delta, radius=r.radius,
                 estimated_radius=r.estimated_radius, discrepancy=r.discrepancy,
                 theta_error=r.theta_error, error=r.error) for r in record.iterations]
    write_iterates(out / "iterates.csv", rows,
                   extra=("estimated_radius", "discrepancy", "theta_error", "error"))
    report = Report(f"sysid {cfg.name}")
    report.add(f"sigma2: {cfg.model.sigma2:g}", f"paths: {cfg.plan.paths}",
               f"evaluation: {s.evaluation}", f"iterations: {len(record)}",
               f"converged: {record.converged}")
    report.matrix("P", P)
    report.matrix("K", K)
    report.matrix("estimated A", est.A)
    report.matrix("estimated B", est.B)
    _error_block(report, P, P_ref)
    report.write(out / "report.txt")
    print(report.text(), end="")
    return EXIT_OK


def _simulate(cfg, K, paths):
    return [simulate_paths(cfg.model, K, w.x0, w.start, w.length, paths,
                           cfg.plan.seed, stream=(0, j))
            for j, w in enumerate(cfg.plan.windows)]


def cmd_simulate(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg.out_dir)
    K = cfg.K0
    if args.gain == "optimal":
        _, K, _ = model_policy_iteration(cfg.model, cfg.weights, cfg.K0)
    check = is_ms_stable(cfg.model, K)
    paths = args.paths if args.paths is not None else SIMULATE_PATHS
    batches = _simulate(cfg, K, paths)
    write_trajectories(out / "trajectories.csv", batches)
    report = Report(f"simulate {cfg.name}")
    report.add(f"sigma2: {cfg.model.sigma2:g}", f"gain: {args.gain}",
               f"mean-square radius: {check.radius:.6f} (stable: {bool(check)})")
    report.matrix("K", K)
    for j, batch in enumerate(batches):
        ms = np.mean(np.sum(batch.paths ** 2, axis=2), axis=0)
        report.add(f"window {j}: mean |x|^2 at t={batch.times[0]}: {ms[0]:.4e}, "
                   f"at t={batch.times[-1]}: {ms[-1]:.4e}")
    report.write(out / "report.txt")
    print(report.text(), end="")
    return EXIT_OK if check else EXIT_UNSTABLE


def _compare(report, label, value, reference):
    err = float(np.abs(value - reference).max())
    verdict = "MATCH" if err <= PRINT_TOL else "MISMATCH"
    report.add(f"{label} max entry error vs reference: {err:.2e} -> {verdict}")
    return verdict == "MATCH"


def _reproduce_case(report, cfg, out, P_pub=None, K_pub=None, label=None):
    """Run trajectory-based policy iteration for one case and log it."""
    label = label or cfg.name
    report.add("", f"== {label} ==", f"sigma2: {cfg.model.sigma2:g}",
               f"R: {cfg.weights.R.tolist()}")
    try:
        P_ref, K_ref, _ = model_policy_iteration(cfg.model, cfg.weights, cfg.K0)
        P, K, record = run_algorithm1(cfg.model, cfg.weights, cfg.K0, cfg.plan,
                                      cfg.solver.tol, cfg.solver.max_iters,
                                      n_iter=cfg.solver.iterations, reference_P=P_ref)
    except StochLQError as exc:
        report.add(f"FAILED: {type(exc).__name__}: {exc}")
        return exit_code(exc)
    case_dir = _out_dir(out / label)
    write_iterates(case_dir / "iterates.csv", _rl_rows(record), extra=("error",))
    report.add(f"iterations: {len(record)} ({cfg.plan.mode} mode)")
    report.matrix("P", P)
    report.matrix("K", K)
    report.matrix("error P_oracle - P", P_ref - P)
    report.add(f"max |P_oracle - P|: {np.abs(P_ref - P).max():.3e}")
    if P_pub is not None:
        _compare(report, "P", P, P_pub)
        _compare(report, "K", K, K_pub)
    else:
        report.add("no tabulated reference; values above are derived")
    return EXIT_OK


def _with_R(cfg, R):
    return replace(cfg, weights=CostWeights(cfg.weights.Q, cfg.weights.S, R))


def _apply(cfg, args):
    return cfg.with_overrides(mode=args.mode, paths=args.paths, seed=args.seed,
                              tol=args.tol, max_iters=args.max_iters,
                              sigma2=args.sigma2)


def reproduce_example1(args, out, report):
    codes = []
    for name, variant in (("example1", "positive"), ("example1_zero", "zero"),
                          ("example1_indefinite", "indefinite")):
        cfg = _apply(load_bundled(name), args)
        ref = problems.EX1_VARIANTS[variant]
        codes.append(_reproduce_case(report, cfg, out, np.array(ref["P"]),
                                     np.array(ref["K"])))
    indefinite = _apply(load_bundled("example1_indefinite"), args)
    ref = problems.EX1_VARIANTS["indefinite"]
    codes.append(_reproduce_case(
        report, _with_R(indefinite, problems.EX1_INDEFINITE_R_RECOVERED), out,
        np.array(ref["P"]), np.array(ref["K"]), label="example1_indefinite_r_diag0m1"))

    base = _apply(load_bundled("example1"), args)
    s2 = calibrate_sigma2(base.model, base.weights, base.K0,
                          np.array(problems.EX1_VARIANTS["positive"]["P"]))
    report.add("", f"sigma2 calibrated on the positive-R reference: {s2:.6f}")
    write_trajectories(out / "trajectories.csv", _simulate(base, base.K0, SIMULATE_PATHS))
    return max(codes)


def reproduce_example2(args, out, report):
    cfg = _apply(load_bundled("example2"), args)
    check = is_ms_stable(cfg.model, cfg.K0)
    limit = stabilizing_sigma2_limit(cfg.model, cfg.K0)
    report.add("", f"== example2 at sigma2={cfg.model.sigma2:g} ==",
               f"K0 mean-square radius: {check.radius:.6f} (stable: {bool(check)})",
               f"K0 stabilizes for sigma2 up to {limit:.6f}")
    codes = []
    if check:
        codes.append(_reproduce_case(report, cfg, out, np.array(problems.EX2_P),
                                     np.array(problems.EX2_K)))
    else:
        report.add(f"{NotStabilizing.__name__}: trajectory-based iteration cannot start")

    s2 = calibrate_sigma2(cfg.model, cfg.weights, cfg.K0, np.array(problems.EX2_P))
    report.add(f"sigma2 calibrated on the reference P: {s2:.6f}")
    recovered = cfg.with_overrides(sigma2=problems.EX2_SIGMA2_RECOVERED)
    codes.append(_reproduce_case(report, recovered, out, np.array(problems.EX2_P),
                                 np.array(problems.EX2_K),
                                 label=f"example2_sigma2_{problems.EX2_SIGMA2_RECOVERED:g}"))
    codes.append(_reproduce_case(report, _with_R(recovered, problems.EX2_R_SEMIDEFINITE),
                                 out, label="example2_semidefinite_r"))
    write_trajectories(out / "trajectories.csv",
                       _simulate(recovered, recovered.K0, SIMULATE_PATHS))
    return max(codes)


def cmd_reproduce(args):
    out = _out_dir(args.out or f"out/reproduce_{args.target}")
    report = Report(f"reproduce {args.target}")
    runner = reproduce_example1 if args.target == "example1" else reproduce_example2
    code = runner(args, out, report)
    report.write(out / "report.txt")
    print(report.text(), end="")
    return code


# -- entry point ------------------------------------------------------------

def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or bundled name "
                        f"({', '.join(BUNDLED)})")
    common.add_argument("--mode", choices=("exact", "mc"))
    common.add_argument("--paths", type=int, help="sample paths per window")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--iterations", type=int,
                        help="run exactly this many iterations")
    common.add_argument("--sigma2", type=float, help="override the noise variance")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser():
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="stochlq", description="Stochastic LQ control by policy iteration.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("oracle", parents=[common], help="model-based policy iteration")
    sub.add_parser("pi", parents=[common], help="trajectory-based policy iteration")
    sub.add_parser("sysid", parents=[common], help="policy iteration on an estimated model")
    sim = sub.add_parser("simulate", parents=[common], help="dump sample paths")
    sim.add_argument("--gain", choices=("initial", "optimal"), default="initial")
    rep = sub.add_parser("reproduce", parents=[common],
                         help="rerun the bundled benchmark problems")
    rep.add_argument("target", choices=("example1", "example2"))
    return parser


COMMANDS = dict(oracle=cmd_oracle, pi=cmd_pi, sysid=cmd_sysid,
                simulate=cmd_simulate, reproduce=cmd_reproduce)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StochLQError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
