"""Unicycle identification with a non-slip penalty.

State ``(x1, x2, theta)``, inputs ``(nu, omega)``, Euler step ``dt``::

    x1' = x1 + dt nu cos(theta)
    x2' = x2 + dt nu sin(theta)
    theta' = theta + dt omega

The predictor maps ``xi = (x1, x2, theta, nu, omega)`` to the increment
``s' - s`` through the Fourier basis on ``[-pi/2, pi/2]^5``. The penalty is the
mean square of the lateral velocity ``h2 cos(theta) - h1 sin(theta)`` over
uniform nodes in the sampling box, which is quadratic in the coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bounds import ProblemParams
from ..dynamics import seed_sequence
from ..fourier import design_matrix
from .sweep import Arm, RateReport, run_problem, summarize

__all__ = ["UnicycleConfig", "UnicycleProblem", "nonslip_penalty_matrix", "nonslip_penalty_estimate",
           "unicycle_truth", "unicycle_experiment"]

L_UNI = math.pi / 2


@dataclass(frozen=True)
class UnicycleConfig:
    T_grid: tuple = tuple(int(round(v)) for v in np.logspace(np.log10(300), 5, 8))
    n_reps: int = 20
    dt: float = 0.05
    sigma: float = 1.0
    m: int = 243
    s: float = 10.0
    pos_box: tuple = (-1.0, 1.0)
    theta_box: tuple = (0.0, math.pi / 2)
    input_box: tuple = (-1.0, 1.0)
    penalty_batch: int = 300
    penalty_batches: int = 20
    n_eval: int = 20000
    regularized: Arm = Arm("regularized", lambda_T=1000.0, ridge_coef=1.0, ridge_power=-0.8)
    unregularized: Arm = Arm("unregularized", lambda_T=0.0, ridge_coef=1.0, ridge_power=-0.8)
    seed: int = 0
    burn_in_frac: float = 0.25
    R_overlay: float = 1e-8

    def __post_init__(self):
        T = [int(t) for t in self.T_grid]
        if len(T) < 4 or any(b <= a for a, b in zip(T, T[1:])) or T[0] < 1:
            raise ValueError("T grid must be positive, strictly increasing, with at least four points")
        object.__setattr__(self, "T_grid", tuple(T))
        if self.n_reps < 5:
            raise ValueError("n_reps must be at least 5")
        for name in ("dt", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("pos_box", "theta_box", "input_box"):
            lo, hi = getattr(self, name)
            if not (-L_UNI <= lo < hi <= L_UNI):
                raise ValueError(f"{name} must be a nonempty interval inside [-pi/2, pi/2]")
        if self.penalty_batch < 2 or self.penalty_batches < 1:
            raise ValueError("penalty needs at least one batch of two nodes")

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.pos_box[0]] * 2 + [self.theta_box[0]] + [self.input_box[0]] * 2)

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.pos_box[1]] * 2 + [self.theta_box[1]] + [self.input_box[1]] * 2)


def unicycle_truth(xi: np.ndarray, dt: float) -> np.ndarray:
    """Exact increments ``s' - s`` for rows ``(x1, x2, theta, nu, omega)``."""
    xi = np.atleast_2d(xi)
    th, nu, om = xi[:, 2], xi[:, 3], xi[:, 4]
    return np.stack([dt * nu * np.cos(th), dt * nu * np.sin(th), dt * om], axis=1)


def _rollout(rng: np.random.Generator, T: int, cfg: UnicycleConfig) -> np.ndarray:
    """Visited ``(state, input)`` rows; the state restarts uniformly when it leaves the box."""
    lo, hi = cfg.lo, cfg.hi
    U = rng.uniform(lo[3:], hi[3:], (T, 2))
    restarts = rng.uniform(lo[:3], hi[:3], (T + 1, 3))
    xi = np.empty((T, 5))
    x1, x2, th = restarts[T]
    l0, l1, l2 = lo[:3]
    h0, h1, h2 = hi[:3]
    dt = cfg.dt
    cos, sin = math.cos, math.sin
    for t in range(T):
        nu, om = U[t]
        xi[t, 0], xi[t, 1], xi[t, 2] = x1, x2, th
        x1 += dt * nu * cos(th)
        x2 += dt * nu * sin(th)
        th += dt * om
        if not (l0 <= x1 <= h0 and l1 <= x2 <= h1 and l2 <= th <= h2):
            x1, x2, th = restarts[t]
    xi[:, 3:] = U
    return xi


def _nodes(cfg: UnicycleConfig, n: int, ss) -> np.ndarray:
    return np.random.default_rng(ss).uniform(cfg.lo, cfg.hi, (n, 5))


def _lateral_rows(xi: np.ndarray, m: int) -> np.ndarray:
    """Rows ``a`` with ``a . z = h2 cos(theta) - h1 sin(theta)`` for output-major stacked ``z``."""
    Phi = design_matrix(xi, m, L_UNI)
    c, s = np.cos(xi[:, 2:3]), np.sin(xi[:, 2:3])
    return np.hstack([-s * Phi, c * Phi, np.zeros_like(Phi)])


def nonslip_penalty_matrix(cfg: UnicycleConfig, ss=None) -> np.ndarray:
    """Monte Carlo Gram of the lateral-velocity residual, accumulated in batches."""
    ss = seed_sequence(cfg.seed, 2 << 20) if ss is None else ss
    vol = float(np.prod(cfg.hi - cfg.lo))
    n = cfg.m * 3
    P = np.zeros((n, n))
    for b in range(cfg.penalty_batches):
        A = _lateral_rows(_nodes(cfg, cfg.penalty_batch, seed_sequence(ss, b)), cfg.m)
        P += A.T @ A
    P *= vol / (cfg.penalty_batch * cfg.penalty_batches)
    return 0.5 * (P + P.T)


def nonslip_penalty_estimate(predict, cfg: UnicycleConfig, n_nodes: int, seed) -> tuple[float, float]:
    """Monte Carlo estimate of the penalty at ``predict`` with its standard error.

    ``predict`` maps ``(n, 5)`` rows to ``(n, 3)`` increments.
    """
    xi = _nodes(cfg, n_nodes, seed_sequence(seed))
    h = np.asarray(predict(xi), dtype=float)
    q2 = (h[:, 1] * np.cos(xi[:, 2]) - h[:, 0] * np.sin(xi[:, 2])) ** 2
    vol = float(np.prod(cfg.hi - cfg.lo))
    return vol * float(q2.mean()), vol * float(q2.std(ddof=1)) / math.sqrt(n_nodes)


class UnicycleProblem:
    def __init__(self, cfg: UnicycleConfig):
        self.cfg = cfg
        self.m, self.s, self.L, self.dx, self.dy = cfg.m, cfg.s, L_UNI, 5, 3
        self.penalty = nonslip_penalty_matrix(cfg)
        self._eval = None

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_eval"] = None
        return d

    def simulate(self, ss, T: int):
        rng = np.random.default_rng(ss)
        xi = _rollout(rng, T, self.cfg)
        Y = unicycle_truth(xi, self.cfg.dt) + self.cfg.sigma * rng.standard_normal((T, 3))
        return xi, Y

    def evaluation(self):
        if self._eval is None:
            rng = np.random.default_rng(seed_sequence(self.cfg.seed, 3 << 20))
            xi = _rollout(rng, self.cfg.n_eval, self.cfg)
            self._eval = (design_matrix(xi, self.m, L_UNI), unicycle_truth(xi, self.cfg.dt))
        return self._eval


def unicycle_experiment(cfg: UnicycleConfig, jobs: int = 1) -> RateReport:
    """Run both arms over the grid and report per-arm slopes."""
    problem = UnicycleProblem(cfg)
    arms = (cfg.regularized, cfg.unregularized)
    risks, failures = run_problem(problem, arms, cfg.T_grid, cfg.n_reps, cfg.seed, jobs)
    theory = ProblemParams(s=int(cfg.s), dx=5, dy=3, sigma_w=cfg.sigma, L=L_UNI,
                           lebesgue_X=float(np.prod(cfg.hi - cfg.lo)))
    meta = {
        "experiment": "unicycle",
        "seed": cfg.seed,
        "n_reps": cfg.n_reps,
        "dt": cfg.dt,
        "sigma": cfg.sigma,
        "m": cfg.m,
        "s": cfg.s,
        "boxes": {"position": cfg.pos_box, "theta": cfg.theta_box, "inputs": cfg.input_box},
        "input_law": "uniform on the input box, independent across steps",
        "restart": "state redrawn uniformly in its box when it leaves the box",
        "target": "increment s' - s plus Gaussian noise",
        "penalty_nodes": f"{cfg.penalty_batches} batches of {cfg.penalty_batch} uniform nodes",
        "arms": [a.__dict__ for a in arms],
        "R_overlay": cfg.R_overlay,
    }
    return summarize(cfg.T_grid, arms, risks, failures, cfg.burn_in_frac, None, theory, cfg.R_overlay,
                     cfg.regularized.name, meta)
