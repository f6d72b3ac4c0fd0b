"""Command line entry point.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from .. import bounds as B
from ..dynamics import DynSystem, save_dataset, load_dataset, seed_sequence, simulate_trajectory
from ..estimator import FitConfig, FitError, empirical_moc_linear, fit_erm
from ..fourier import design_matrix, save_coeffs
from ..operators import Measure, operator_from_spec
from .config import Config, ConfigError, load_config
from .output import emit_outputs
from .sweep import Arm, ExprDrift, SweepConfig, SweepError, aligned_synthetic, rate_sweep
from .unicycle import UnicycleConfig, unicycle_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SYSTEM_KEYS = {"dx", "L", "sigma", "fstar", "x0", "initial"}
THEORY_KEYS = {"theta", "S", "rho_f_tilde", "C_c", "delta", "rho_f", "C_c_prime", "c_h_scale", "B", "lebesgue_X"}
FIT_KEYS = {"m", "s", "lambda_T", "lambda_sob", "operator", "measure", "measure_box", "measure_nodes", "tol"}
ARM_KEYS = {"reg_lambda_T", "reg_ridge_coef", "reg_ridge_power", "unreg_ridge_coef", "unreg_ridge_power"}


# --------------------------------------------------------------------------
# config helpers


def _system(cfg: Config) -> DynSystem:
    dx = cfg.int("dx", 1)
    if dx < 1:
        raise ConfigError("dx must be positive")
    if dx == 1:
        texts = [cfg.str("fstar", "0.5*x")]
    else:
        texts = [cfg.str(f"fstar_{j + 1}", f"0.5*x{j + 1}") for j in range(dx)]
    x0 = cfg.floats("x0", None)
    try:
        return DynSystem(ExprDrift(texts, dx), cfg.float("L", 1.0), cfg.float("sigma", 0.1), dx,
                         x0=tuple(x0) if x0 is not None else None, initial=cfg.str("initial", "dirac"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _measure(cfg: Config, L: float) -> Measure:
    kind = cfg.str("measure", "lebesgue_cube")
    box = cfg.floats("measure_box", None)
    if box is not None and len(box) != 2:
        raise ConfigError("measure_box needs two numbers: lo, hi")
    try:
        return Measure(kind, tuple(box) if box else None, cfg.int("measure_nodes", None))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _params(cfg: Config, s: int, dx: int, dy: int, sigma: float, L: float) -> B.ProblemParams:
    kw = {k: cfg.float(k) for k in sorted(THEORY_KEYS) if k in cfg}
    try:
        return B.ProblemParams(s=s, dx=dx, dy=dy, sigma_w=sigma, L=L, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check_keys(cfg: Config, allowed: set[str]):
    if "fstar" in allowed:
        allowed = allowed | {k for k, _ in cfg.items() if re.fullmatch(r"fstar_[1-9][0-9]*", k)}
    bad = sorted(k for k, _ in cfg.items() if k not in allowed | {"seed"})
    if bad:
        raise ConfigError(f"unknown config keys: {', '.join(bad)}")


def _arms(cfg: Config, reg: Arm, unreg: Arm) -> tuple[Arm, Arm]:
    r = Arm(reg.name, cfg.float("reg_lambda_T", reg.lambda_T), cfg.float("reg_ridge_coef", reg.ridge_coef),
            cfg.float("reg_ridge_power", reg.ridge_power))
    u = Arm(unreg.name, 0.0, cfg.float("unreg_ridge_coef", unreg.ridge_coef),
            cfg.float("unreg_ridge_power", unreg.ridge_power))
    return r, u


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: Config, args) -> int:
    _check_keys(cfg, SYSTEM_KEYS | {"T"})
    sys_ = _system(cfg)
    T = cfg.int("T", 1000)
    if T < 2:
        raise ConfigError("T must be at least 2")
    data = simulate_trajectory(sys_, T, seed_sequence(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(data, out / "dataset.csv")
    print(f"wrote {out / 'dataset.csv'} (T={T})")
    return EXIT_OK


def cmd_fit(cfg: Config, args) -> int:
    _check_keys(cfg, FIT_KEYS | {"data", "L"})
    path = cfg.str("data", None)
    if path is None:
        raise ConfigError("fit needs 'data = <dataset.csv>'")
    try:
        data = load_dataset(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    dx, dy = data.X.shape[1], data.Y.shape[1]
    L = cfg.float("L", 1.0)
    if np.any(np.abs(data.X) > L):
        raise ConfigError(f"dataset inputs leave the cube [-{L}, {L}]")
    lam_T = cfg.float("lambda_T", 0.0)
    try:
        op = operator_from_spec(cfg.str("operator", "laplacian"), dx, dy) if lam_T > 0 else None
        fc = FitConfig(m=cfg.int("m", 17), L=L, lambda_T=lam_T, lambda_sob=cfg.float("lambda_sob", 0.0),
                       s=cfg.float("s", 2.0), op=op, measure=_measure(cfg, L) if op else None,
                       tol=cfg.float("tol", 1e-8))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = fit_erm(data, fc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_coeffs(res.coeffs, out / "coeffs.csv")
    summary = {"T": data.T, "m": fc.m, "lambda_T": fc.lambda_T, "lambda_sob": fc.lambda_sob, "s": fc.s,
               "objective": res.objective, "residual_norm": res.residual_norm, "condition": res.condition,
               "grad_norm": res.grad_norm, "sobolev_sq": res.sobolev_sq, "penalty_value": res.penalty_value}
    (out / "fit.txt").write_text(cfg.echo() + "\n\n" + "\n".join(f"{k} = {v!r}" for k, v in summary.items()) + "\n")
    print(f"wrote {out / 'coeffs.csv'} (objective {res.objective:.6g})")
    return EXIT_OK


def cmd_sweep(cfg: Config, args) -> int:
    _check_keys(cfg, SYSTEM_KEYS | THEORY_KEYS | FIT_KEYS | ARM_KEYS
                | {"T_grid", "n_reps", "T_eval", "n_traj", "burn_in_frac", "burn_in_count", "R_overlay"})
    base = aligned_synthetic(seed=args.seed)
    try:
        system = _system(cfg) if SYSTEM_KEYS & {k for k, _ in cfg.items()} else base.system
        dx = system.dx
        L = system.L
        m = cfg.int("m", base.m)
        s = cfg.int("s", int(base.s))
        op = operator_from_spec(cfg.str("operator"), dx, dx) if "operator" in cfg else base.op
        measure = _measure(cfg, L) if "measure" in cfg else base.measure
        reg, unreg = _arms(cfg, base.regularized, base.unregularized)
        sc = SweepConfig(
            T_grid=tuple(cfg.ints("T_grid", list(base.T_grid))),
            n_reps=cfg.int("n_reps", base.n_reps),
            system=system, m=m, s=s, op=op, measure=measure, regularized=reg, unregularized=unreg,
            T_eval=cfg.int("T_eval", base.T_eval), n_traj=cfg.int("n_traj", base.n_traj), seed=args.seed,
            burn_in_frac=cfg.float("burn_in_frac", base.burn_in_frac),
            burn_in_count=cfg.int("burn_in_count", None),
            theory=_params(cfg, s, dx, dx, system.sigma, L),
            R_overlay=cfg.float("R_overlay", base.R_overlay),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = rate_sweep(sc, jobs=args.jobs)
    emit_outputs(report, args.out, cfg.echo())
    _print_slopes(report)
    return EXIT_OK


def cmd_unicycle(cfg: Config, args) -> int:
    keys = {"T_grid", "n_reps", "dt", "sigma", "m", "s", "pos_box", "theta_box", "input_box", "penalty_batch",
            "penalty_batches", "n_eval", "burn_in_frac", "R_overlay"}
    _check_keys(cfg, keys | ARM_KEYS)
    d = UnicycleConfig()
    try:
        reg, unreg = _arms(cfg, d.regularized, d.unregularized)
        boxes = {k: tuple(cfg.floats(k)) for k in ("pos_box", "theta_box", "input_box") if k in cfg}
        uc = UnicycleConfig(
            T_grid=tuple(cfg.ints("T_grid", list(d.T_grid))), n_reps=cfg.int("n_reps", d.n_reps),
            dt=cfg.float("dt", d.dt), sigma=cfg.float("sigma", d.sigma), m=cfg.int("m", d.m),
            s=cfg.float("s", d.s), penalty_batch=cfg.int("penalty_batch", d.penalty_batch),
            penalty_batches=cfg.int("penalty_batches", d.penalty_batches), n_eval=cfg.int("n_eval", d.n_eval),
            regularized=reg, unregularized=unreg, seed=args.seed,
            burn_in_frac=cfg.float("burn_in_frac", d.burn_in_frac), R_overlay=cfg.float("R_overlay", d.R_overlay),
            **boxes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = unicycle_experiment(uc, jobs=args.jobs)
    emit_outputs(report, args.out, cfg.echo())
    _print_slopes(report)
    return EXIT_OK


BOUND_COLUMNS = ["T", "R_fstar", "rate_prob", "lambda_min_prob", "burn_in_ok_prob", "rate_exp", "lambda_min_exp",
                 "burn_in_ok_exp", "noreg_prob", "noreg_exp", "moc_prob", "moc_exp", "lower_isometry_prob"]


def cmd_bounds(cfg: Config, args) -> int:
    _check_keys(cfg, THEORY_KEYS | {"s", "dx", "dy", "sigma", "L", "T_grid", "R_fstar", "r_grid"})
    s, dx = cfg.int("s", 2), cfg.int("dx", 1)
    p = _params(cfg, s, dx, cfg.int("dy", dx), cfg.float("sigma", 0.1), cfg.float("L", 1.0))
    T_grid = cfg.floats("T_grid", [2.0 ** k for k in range(7, 15)])
    R_list = cfg.floats("R_fstar", [1e-4, 1e-2, 1.0])
    r_grid = cfg.floats("r_grid", [0.05, 0.1, 0.2, 0.5, 1.0])
    try:
        rows = []
        for R in R_list:
            for T in T_grid:
                bp = B.rate_bound_prob(T, R, p)
                be = B.rate_bound_exp(T, R, p)
                li = B.lower_isometry_prob(math.sqrt(bp["r2"]), T, p)
                rows.append([T, R, bp.bound, bp["lambda_min"], int(bp["burn_in_ok"]), be.bound, be["lambda_min"],
                             int(be["burn_in_ok"]), B.noreg_rate(T, p, "prob").bound, B.noreg_rate(T, p, "exp").bound,
                             B.moc_bound_prob(T, 10 * R, p).bound, B.moc_bound_exp(T, 10 * R, p).bound, li["prob"]])
        cov = []
        for r in r_grid:
            c = B.covering_boundary(r, p)
            cov.append([r, c["log_covering"], c["m_r"], B.hyper_constant(r, p)])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    _write_csv(out / "bounds.csv", BOUND_COLUMNS, rows)
    _write_csv(out / "covering.csv", ["r", "log_covering", "m_r", "hyper_constant"], cov)
    audit = [f"# constants for s={p.s} dx={p.dx} dy={p.dy} sigma_w={p.sigma_w!r}",
             "# user-supplied constants: " + json.dumps({k: getattr(p, k) for k in
                                                         ("C_c", "C_c_prime", "c_h_scale", "B", "theta", "S",
                                                          "delta", "rho_f_tilde", "rho_f")}, sort_keys=True),
             f"# Lambda(X) = {p.volume!r}; proportionality constant between rho_tilde^2 and rho_f^2/kappa_u = 1"]
    audit += [f"{name} = {v!r}  # {formula}" for name, v, formula in B.audit_rows(p)]
    (out / "constants_audit.txt").write_text("\n".join(audit) + "\n")
    print(f"wrote {out / 'bounds.csv'}, {out / 'covering.csv'}, {out / 'constants_audit.txt'}")
    return EXIT_OK


def cmd_moc(cfg: Config, args) -> int:
    _check_keys(cfg, SYSTEM_KEYS | {"T", "m_list", "data"})
    sys_ = _system(cfg)
    if "data" in cfg:
        try:
            data = load_dataset(cfg.str("data"))
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        X, W = data.X, data.Y - sys_.drift(data.X)
    else:
        data = simulate_trajectory(sys_, cfg.int("T", 1000), seed_sequence(args.seed))
        X, W = data.X, data.W
    rows = []
    for m in cfg.ints("m_list", [1, 3, 5, 9, 17, 33]):
        if m < 1:
            raise ConfigError("m_list entries must be positive")
        rows.append([m, len(X), empirical_moc_linear(design_matrix(X, m, sys_.L), W)])
    _write_csv(Path(args.out) / "moc.csv", ["m", "T", "moc_linear"], rows)
    print(f"wrote {Path(args.out) / 'moc.csv'}")
    return EXIT_OK


def _print_slopes(report):
    for arm in report.arms:
        s = report.slopes[arm]
        print(f"{arm}: slope {s.slope:.4f} (95% CI {s.ci_95[0]:.4f} .. {s.ci_95[1]:.4f})")
    for f in report.findings:
        print(f"finding: {f}")


COMMANDS = {
    "simulate": (cmd_simulate, "simulate one trajectory and write dataset.csv"),
    "fit": (cmd_fit, "fit a dataset CSV and write coeffs.csv"),
    "sweep": (cmd_sweep, "synthetic rate sweep with and without the physics penalty"),
    "bounds": (cmd_bounds, "evaluate theoretical bounds on a grid and write a constants audit"),
    "moc": (cmd_moc, "empirical offset complexity of nested spans"),
    "unicycle": (cmd_unicycle, "unicycle rate experiment with the non-slip penalty"),
}


def _add_common(p: argparse.ArgumentParser, default):
    p.add_argument("--config", default=default, help="key = value configuration file")
    p.add_argument("--seed", type=int, default=default, help="master seed (default 0 or the config 'seed')")
    p.add_argument("--jobs", type=int, default=default, help="worker processes (default 1)")
    p.add_argument("--out", default=default, help="output directory (default ./out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="physreg",
                                     description="Physics-regularized least squares on trajectory data.")
    _add_common(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        # global flags may also follow the subcommand
        _add_common(sub.add_parser(name, help=help_), argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config else Config()
        if args.seed is None:
            args.seed = cfg.int("seed", 0)
        else:
            cfg.raw("seed")
        args.jobs = 1 if args.jobs is None else args.jobs
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        args.out = args.out or "out"
        return COMMANDS[args.command][0](cfg, args)
    except (FitError, SweepError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        # remaining ValueErrors come from argument validation
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
