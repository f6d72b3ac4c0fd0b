"""Rate sweeps: excess risk against sample size for a regularized and an unregularized arm."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..bounds import ProblemParams, audit_rows, noreg_rate, rate_bound_prob
from ..dynamics import DynSystem, seed_sequence, simulate_trajectory
from ..estimator import FitConfig, FitError, Moments, fit_from_moments
from ..fourier import design_matrix
from ..operators import LinearDiffOp, Measure, operator_gram, parse_expression

__all__ = [
    "Arm",
    "SweepError",
    "SlopeFit",
    "RateReport",
    "SystemProblem",
    "SweepConfig",
    "slope_fit",
    "rate_sweep",
    "run_problem",
    "LinearDrift",
    "ExprDrift",
    "summarize",
    "aligned_synthetic",
]

MAX_FAIL_FRACTION = 0.2


class SweepError(ArithmeticError):
    """Too many cells of a sweep failed numerically."""


@dataclass(frozen=True)
class Arm:
    """One estimator configuration; the ridge weight follows ``ridge_coef * T**ridge_power``."""

    name: str
    lambda_T: float = 0.0
    ridge_coef: float = 0.0
    ridge_power: float = -1.0

    def __post_init__(self):
        if self.lambda_T < 0 or self.ridge_coef < 0:
            raise ValueError(f"arm {self.name!r}: penalties must be nonnegative")

    def ridge(self, T: int) -> float:
        return self.ridge_coef * float(T) ** self.ridge_power


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci_95: tuple[float, float]
    n_points: int
    residual_ss: float


def slope_fit(points) -> SlopeFit:
    """Least-squares line through ``(log T, log risk)`` with a 95% t-interval on the slope."""
    pts = [(float(t), float(r)) for t, r in points]
    if len(pts) < 3:
        raise ValueError("slope fit needs at least three points")
    T = np.array([p[0] for p in pts])
    R = np.array([p[1] for p in pts])
    if np.any(T <= 0) or np.any(~np.isfinite(R)) or np.any(R <= 0):
        raise ValueError("slope fit needs positive T and positive finite risks")
    x, y = np.log(T), np.log(R)
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("slope fit needs at least two distinct T values")
    b = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    a = float(y.mean() - b * xm)
    rss = float(np.sum((y - a - b * x) ** 2))
    n = len(x)
    se = math.sqrt(rss / (n - 2) / sxx)
    h = float(stats.t.ppf(0.975, n - 2)) * se
    return SlopeFit(b, a, (b - h, b + h), n, rss)


@dataclass
class RateReport:
    """Per-T risk statistics for each arm, fitted slopes and theory overlays.

    ``risks`` has shape ``(n_arms, n_reps, n_T)`` with ``nan`` in failed cells.
    """

    T: np.ndarray
    arms: tuple[str, ...]
    risks: np.ndarray
    mean: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    slopes: dict
    bound: np.ndarray
    burn_in_index: int
    theory_burn_in_T: float
    failures: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    constants: list = field(default_factory=list)

    def arm(self, name: str) -> int:
        return self.arms.index(name)

    def slope(self, name: str) -> float:
        return self.slopes[name].slope


# --------------------------------------------------------------------------
# problems


class SystemProblem:
    """Identification of ``f*`` from one autonomous trajectory per repetition."""

    def __init__(self, system: DynSystem, m: int, s: float, op: LinearDiffOp | None,
                 measure: Measure | None, T_eval: int, n_traj: int, eval_seed):
        self.system = system
        self.m, self.s, self.L, self.dx = m, s, system.L, system.dx
        self.dy = system.dx
        self.T_eval, self.n_traj, self.eval_seed = T_eval, n_traj, eval_seed
        self.op, self.measure = op, measure
        self.penalty = operator_gram(op, m, system.L, measure) if op is not None else None
        self._eval = None

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_eval"] = None
        return d

    def simulate(self, ss, T: int):
        data = simulate_trajectory(self.system, T, ss)
        return data.X, data.Y

    def evaluation(self):
        """Evaluation design and truth values, built once per process."""
        if self._eval is None:
            Xs = [simulate_trajectory(self.system, self.T_eval, seed_sequence(self.eval_seed, j)).X
                  for j in range(self.n_traj)]
            X = np.vstack(Xs)
            self._eval = (design_matrix(X, self.m, self.L), self.system.drift(X))
        return self._eval


# --------------------------------------------------------------------------
# execution

_WORKER_PROBLEM = None


def _init_worker(problem):
    global _WORKER_PROBLEM
    _WORKER_PROBLEM = problem


def _rep_cells(problem, arms, T_grid, rep: int, seed):
    """Fit every arm at every prefix length of one repetition's trajectory."""
    T_grid = [int(t) for t in T_grid]
    X, Y = problem.simulate(seed_sequence(seed, rep), T_grid[-1])
    Phi_e, truth = problem.evaluation()
    m, dy = problem.m, Y.shape[1]
    G = np.zeros((m, m))
    B = np.zeros((m, dy))
    yy = 0.0
    prev = 0
    out = np.full((len(arms), len(T_grid)), np.nan)
    errors = []
    for j, T in enumerate(T_grid):
        Phi = design_matrix(X[prev:T], m, problem.L)
        G += Phi.T @ Phi
        B += Phi.T @ Y[prev:T]
        yy += float(np.sum(Y[prev:T] ** 2))
        prev = T
        mom = Moments(G / T, B / T, yy / T, T, problem.dx)
        row = []
        try:
            for arm in arms:
                use_pen = arm.lambda_T > 0
                cfg = FitConfig(m=m, L=problem.L, lambda_T=arm.lambda_T, lambda_sob=arm.ridge(T), s=problem.s,
                                penalty=problem.penalty if use_pen else None)
                fit = fit_from_moments(mom, cfg, problem.penalty if use_pen else None)
                pred = Phi_e @ fit.coeffs.z.T
                row.append(float(np.mean(np.sum((pred - truth) ** 2, axis=1))))
        except (FitError, ValueError, np.linalg.LinAlgError) as exc:
            errors.append((T, rep, f"{type(exc).__name__}: {exc}"))
            continue
        if not np.all(np.isfinite(row)):
            errors.append((T, rep, "non-finite risk"))
            continue
        out[:, j] = row
    return out, errors


def run_problem(problem, arms, T_grid, n_reps: int, seed, jobs: int = 1):
    """Risks of shape ``(n_arms, n_reps, n_T)`` and the list of failed cells."""
    arms = tuple(arms)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(problem,)) as ex:
            futs = [ex.submit(_pooled_rep, arms, T_grid, r, seed) for r in range(n_reps)]
            results = [f.result() for f in futs]
    else:
        results = [_rep_cells(problem, arms, T_grid, r, seed) for r in range(n_reps)]
    risks = np.stack([r[0] for r in results], axis=1)
    failures = [e for r in results for e in r[1]]
    return risks, failures


def _pooled_rep(arms, T_grid, rep, seed):
    return _rep_cells(_WORKER_PROBLEM, arms, T_grid, rep, seed)


def summarize(T_grid, arms, risks, failures, burn_in_frac: float = 0.25, burn_in_count: int | None = None,
              params: ProblemParams | None = None, R_overlay: float = 1e-8, regularized: str | None = None,
              meta: dict | None = None) -> RateReport:
    """Aggregate per-cell risks into means, 95% CIs, slopes and overlays."""
    T = np.asarray(T_grid, dtype=float)
    n_arms, n_reps, n_T = risks.shape
    n_cells = n_reps * n_T
    if len({(t, r) for t, r, _ in failures}) > MAX_FAIL_FRACTION * n_cells:
        raise SweepError(f"{len(failures)} of {n_cells} cells failed; first: {failures[0][2]}")
    count = np.sum(np.isfinite(risks), axis=1)
    if np.any(count < 2):
        raise SweepError("some grid point has fewer than two successful repetitions")
    mean = np.nanmean(risks, axis=1)
    sd = np.nanstd(risks, axis=1, ddof=1)
    half = 1.959963984540054 * sd / np.sqrt(count)
    k = burn_in_count if burn_in_count is not None else int(math.floor(burn_in_frac * n_T))
    if n_T - k < 3:
        raise ValueError("fewer than three grid points remain after burn-in")
    slopes = {a.name: slope_fit(zip(T[k:], mean[i, k:])) for i, a in enumerate(arms)}

    bound = np.full((n_arms, n_T), np.nan)
    burn_T = math.nan
    findings = []
    rows = []
    if params is not None:
        for i, a in enumerate(arms):
            for j, t in enumerate(T):
                if a.lambda_T > 0:
                    rep = rate_bound_prob(t, R_overlay, params)
                    if j == 0:
                        burn_T = rep["burn_in_T"]
                else:
                    rep = noreg_rate(t, params, "prob")
                bound[i, j] = rep.bound
                if j >= k and mean[i, j] > rep.bound:
                    findings.append(f"arm {a.name}, T={int(t)}: mean risk {mean[i, j]:.3e} exceeds bound {rep.bound:.3e}")
        rows = audit_rows(params)
    for i, a in enumerate(arms):
        d = np.diff(mean[i, k:])
        if np.any(d > 0):
            findings.append(f"arm {a.name}: mean risk increases between some post-burn-in grid points")
    if regularized is not None and len(arms) == 2:
        r = [a.name for a in arms].index(regularized)
        u = 1 - r
        worse = [int(t) for j, t in enumerate(T) if j >= k and mean[r, j] > mean[u, j]]
        if worse:
            findings.append(f"regularized mean risk above unregularized at T={worse}")
    return RateReport(T, tuple(a.name for a in arms), risks, mean, mean - half, mean + half, slopes, bound, k,
                      burn_T, list(failures), findings, dict(meta or {}), rows)


# --------------------------------------------------------------------------
# synthetic sweep


@dataclass(frozen=True)
class LinearDrift:
    """``x -> a x``; a picklable drift for worker processes."""

    a: float

    def __call__(self, x):
        return self.a * np.asarray(x, dtype=float)


class ExprDrift:
    """Drift given by one expression string per coordinate."""

    def __init__(self, texts, dx: int):
        self.texts = tuple(texts)
        if len(self.texts) != dx:
            raise ValueError(f"need {dx} drift expressions, got {len(self.texts)}")
        self.dx = dx
        self._fns = [parse_expression(t, dx) for t in self.texts]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([f(x) for f in self._fns], axis=1)

    def __repr__(self):
        return f"ExprDrift({list(self.texts)!r})"


@dataclass(frozen=True)
class SweepConfig:
    """Synthetic sweep settings. ``T_grid`` must be strictly increasing with at least four points."""

    T_grid: tuple
    n_reps: int
    system: DynSystem
    m: int
    s: float
    op: LinearDiffOp
    measure: Measure | None
    regularized: Arm
    unregularized: Arm
    T_eval: int = 200
    n_traj: int = 50
    seed: int = 0
    burn_in_frac: float = 0.25
    burn_in_count: int | None = None
    theory: ProblemParams | None = None
    R_overlay: float = 1e-8

    def __post_init__(self):
        T = [int(t) for t in self.T_grid]
        if len(T) < 4:
            raise ValueError("T grid needs at least four points")
        if any(b <= a for a, b in zip(T, T[1:])) or T[0] < 1:
            raise ValueError("T grid must be positive and strictly increasing")
        object.__setattr__(self, "T_grid", tuple(T))
        if self.n_reps < 5:
            raise ValueError("n_reps must be at least 5")
        if self.T_eval < 1 or self.n_traj < 2:
            raise ValueError("evaluation needs T_eval >= 1 and n_traj >= 2")
        if self.regularized.name == self.unregularized.name:
            raise ValueError("arm names must differ")
        if not 0 <= self.burn_in_frac < 1:
            raise ValueError("burn_in_frac must lie in [0, 1)")


def rate_sweep(cfg: SweepConfig, jobs: int = 1) -> RateReport:
    """Simulate, fit both arms at every prefix length, and aggregate."""
    problem = SystemProblem(cfg.system, cfg.m, cfg.s, cfg.op, cfg.measure, cfg.T_eval, cfg.n_traj,
                            seed_sequence(cfg.seed, 1 << 20))
    arms = (cfg.regularized, cfg.unregularized)
    risks, failures = run_problem(problem, arms, cfg.T_grid, cfg.n_reps, cfg.seed, jobs)
    meta = {
        "experiment": "synthetic",
        "seed": cfg.seed,
        "n_reps": cfg.n_reps,
        "m": cfg.m,
        "s": cfg.s,
        "L": cfg.system.L,
        "sigma": cfg.system.sigma,
        "x0": cfg.system.x0,
        "T_eval": cfg.T_eval,
        "n_traj": cfg.n_traj,
        "arms": [a.__dict__ for a in arms],
        "R_overlay": cfg.R_overlay,
    }
    return summarize(cfg.T_grid, arms, risks, failures, cfg.burn_in_frac, cfg.burn_in_count, cfg.theory,
                     cfg.R_overlay, cfg.regularized.name, meta)


def aligned_synthetic(n_reps: int = 20, seed: int = 0, T_grid=None) -> SweepConfig:
    """The default aligned case: ``f*(x) = x/2`` in the kernel of the second derivative."""
    system = DynSystem(LinearDrift(0.5), 1.0, 0.1, 1, x0=(0.5,))
    T_grid = tuple(2 ** np.arange(7, 15)) if T_grid is None else tuple(T_grid)
    return SweepConfig(
        T_grid=T_grid,
        n_reps=n_reps,
        system=system,
        m=33,
        s=2,
        op=LinearDiffOp.partial((2,)),
        measure=Measure("quadrature", box=(-1.0, 1.0), n_per_axis=200),
        regularized=Arm("regularized", lambda_T=10.0, ridge_coef=1e-6, ridge_power=-0.8),
        unregularized=Arm("unregularized", lambda_T=0.0, ridge_coef=0.1, ridge_power=-0.8),
        seed=seed,
        theory=ProblemParams(s=2, dx=1, dy=1, sigma_w=0.1),
    )
