"""Trajectory generation and dependence diagnostics.

Trajectories follow ``X_{t+1} = f*(X_t) + W_t`` on the cube ``[-L, L]^dx``.
The noise is a centered Gaussian truncated to a symmetric box whose radius
shrinks near the boundary, which keeps the state inside the cube without
giving up the zero conditional mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri

from .fourier import FourierCoeffs

__all__ = [
    "DynSystem",
    "TrajectoryDataset",
    "FiniteChain",
    "simulate_trajectory",
    "sample_inputs",
    "dependence_matrix_finite",
    "persistence_probe",
    "small_ball_probe",
    "save_dataset",
    "load_dataset",
    "seed_sequence",
]

TRUNC_MULT = 4.0


def seed_sequence(seed, *path: int) -> np.random.SeedSequence:
    """Seed sequence for the stream addressed by ``(seed, *path)``.

    Streams with different paths are statistically independent and do not
    depend on the order in which they are requested.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(path))
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(seed_sequence(seed))


@dataclass(frozen=True)
class DynSystem:
    """Autonomous system ``X_{t+1} = f*(X_t) + W_t`` with truncated Gaussian noise.

    Parameters
    ----------
    fstar : FourierCoeffs or callable
        Drift. A callable maps ``(n, dx)`` to ``(n, dx)``.
    L : float
        Cube half-width.
    sigma : float
        Standard deviation of the untruncated Gaussian.
    dx : int
    x0 : array_like, optional
        Initial point; default is the origin. Ignored when ``initial="uniform"``.
    initial : {"dirac", "uniform"}
    """

    fstar: object
    L: float
    sigma: float
    dx: int = 1
    x0: tuple | None = None
    initial: str = "dirac"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("noise scale must be positive")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.initial not in ("dirac", "uniform"):
            raise ValueError(f"unknown initial law {self.initial!r}")
        x0 = np.zeros(self.dx) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        if x0.shape != (self.dx,) or np.any(np.abs(x0) > self.L):
            raise ValueError("initial point must lie in the cube")
        object.__setattr__(self, "x0", tuple(float(v) for v in x0))
        if isinstance(self.fstar, FourierCoeffs) and (self.fstar.dx, self.fstar.dy) != (self.dx, self.dx):
            raise ValueError("drift must map the cube to itself (dy = dx)")
        self._check_margin()

    def drift(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if isinstance(self.fstar, FourierCoeffs):
            return self.fstar.evaluate(x)
        return np.asarray(self.fstar(x), dtype=float).reshape(len(x), self.dx)

    def _check_margin(self):
        n = max(2, int(round(4096 ** (1.0 / self.dx))))
        axis = np.linspace(-self.L, self.L, n)
        grid = np.stack(np.meshgrid(*(axis,) * self.dx, indexing="ij"), -1).reshape(-1, self.dx)
        rng = np.random.default_rng(12345)
        pts = np.vstack([grid, rng.uniform(-self.L, self.L, (2048, self.dx))])
        vals = self.drift(pts)
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) >= self.L:
            raise ValueError("drift does not map the cube strictly into its interior")


@dataclass(frozen=True)
class TrajectoryDataset:
    """Inputs ``X`` (T x dx), targets ``Y`` (T x dy) and the noise that produced them."""

    X: np.ndarray
    Y: np.ndarray
    W: np.ndarray | None = None
    seed: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def T(self) -> int:
        return self.X.shape[0]


def _truncated_normal(u: np.ndarray, sigma: float, r: np.ndarray | float) -> np.ndarray:
    """Inverse-CDF draw from N(0, sigma^2) truncated to [-r, r]."""
    a = ndtr(-np.asarray(r) / sigma)
    return sigma * ndtri(a + u * (1.0 - 2.0 * a))


def simulate_trajectory(sys: DynSystem, T: int, seed) -> TrajectoryDataset:
    """Simulate ``T`` transitions; ``Y_t = X_{t+1}``."""
    if T < 1:
        raise ValueError("T must be positive")
    rng = _rng(seed)
    L, sig, dx = sys.L, sys.sigma, sys.dx
    if sys.initial == "uniform":
        x = rng.uniform(-L, L, dx)
    else:
        x = np.array(sys.x0)
    u = rng.random((T, dx))
    r_max = TRUNC_MULT * sig
    noise = _truncated_normal(u, sig, r_max)
    X = np.empty((T + 1, dx))
    X[0] = x
    W = np.empty((T, dx))
    for t in range(T):
        fx = sys.drift(X[t])[0]
        dist = L - np.max(np.abs(fx))
        w = noise[t] if dist >= r_max else _truncated_normal(u[t], sig, dist)
        W[t] = w
        X[t + 1] = fx + w
    meta = {"sigma": sig, "L": L, "truncation": f"min({TRUNC_MULT:g}*sigma, boundary distance)"}
    return TrajectoryDataset(X[:T].copy(), X[1:].copy(), W, seed, meta)


def sample_inputs(sys: DynSystem, T: int, n: int, seed) -> np.ndarray:
    """``n`` independent input sequences, shape ``(n, T, dx)``."""
    return np.stack([simulate_trajectory(sys, T, seed_sequence(seed, j)).X for j in range(n)])


def save_dataset(data: TrajectoryDataset, path) -> None:
    dx, dy = data.X.shape[1], data.Y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{j + 1}" for j in range(dx)] + [f"y_{j + 1}" for j in range(dy)])
        for t in range(data.T):
            w.writerow([t] + [f"{v:.17g}" for v in data.X[t]] + [f"{v:.17g}" for v in data.Y[t]])


def load_dataset(path) -> TrajectoryDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    head = rows[0]
    xcols = [j for j, h in enumerate(head) if h.startswith("x_")]
    ycols = [j for j, h in enumerate(head) if h.startswith("y_")]
    if not xcols or not ycols:
        raise ValueError(f"{path}: header needs x_ and y_ columns")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry") from exc
    if body.size == 0:
        raise ValueError(f"{path}: no data rows")
    return TrajectoryDataset(body[:, xcols], body[:, ycols], meta={"source": str(path)})


# --------------------------------------------------------------------------
# finite chains


@dataclass(frozen=True)
class FiniteChain:
    initial: np.ndarray
    P: np.ndarray
    T: int

    def __post_init__(self):
        mu = np.asarray(self.initial, dtype=float).ravel()
        P = np.asarray(self.P, dtype=float)
        n = len(mu)
        if P.shape != (n, n):
            raise ValueError("transition matrix must be n x n")
        if np.any(P < 0) or np.any(mu < 0):
            raise ValueError("probabilities must be nonnegative")
        if np.any(np.abs(P.sum(1) - 1) > 1e-12) or abs(mu.sum() - 1) > 1e-12:
            raise ValueError("rows must sum to one")
        if self.T < 1:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "initial", mu)
        object.__setattr__(self, "P", P)

    @property
    def n_states(self) -> int:
        return len(self.initial)

    def path_law(self) -> np.ndarray:
        """Joint law of ``(X_0, ..., X_{T-1})`` as an ``n^T`` tensor."""
        p = self.initial.copy()
        for _ in range(1, self.T):
            p = p[..., None] * self.P[(None,) * (p.ndim - 1)]
        return p


def dependence_matrix_finite(chain: FiniteChain, max_paths: int = 10 ** 6):
    """Exact dependence matrix of a finite chain.

    Entry ``(b, a)`` with ``b > a`` is ``sqrt(2 sup_x TV(law(X_{b:}) | X_{0:a} = x, law(X_{b:})))``,
    the supremum running over prefixes of positive probability. Returns
    ``(Gamma, spectral_norm)``.
    """
    n, T = chain.n_states, chain.T
    if n ** T > max_paths:
        raise ValueError(f"{n}^{T} paths exceed the enumeration limit; reduce T or the state count")
    joint = chain.path_law()
    G = np.eye(T)
    for a in range(T):
        for b in range(a + 1, T):
            middle = tuple(range(a + 1, b))
            J = joint.sum(axis=middle) if middle else joint
            J = J.reshape(n ** (a + 1), n ** (T - b))
            pref = J.sum(axis=1)
            suffix = J.sum(axis=0)
            live = pref > 0
            cond = J[live] / pref[live, None]
            tv = 0.5 * np.abs(cond - suffix).sum(axis=1).max()
            # below the rounding error of the summed path probabilities; sqrt would inflate it to ~1e-8
            if tv <= 8 * np.finfo(float).eps * J.shape[1]:
                tv = 0.0
            G[b, a] = np.sqrt(2.0 * tv)
    return G, float(np.linalg.norm(G, 2))


# --------------------------------------------------------------------------
# probes


def _inputs(sys, T, n_mc, seed, sampler):
    if sampler is not None:
        rng = _rng(seed)
        return np.stack([np.asarray(sampler(rng, T), dtype=float).reshape(T, -1) for _ in range(n_mc)])
    return sample_inputs(sys, T, n_mc, seed)


@dataclass(frozen=True)
class PersistenceReport:
    holds_at: list  # (xi, lhs, rhs, lhs_se)

    @property
    def all_hold(self) -> bool:
        return all(lhs <= rhs + 3 * se for _, lhs, rhs, se in self.holds_at)


def persistence_probe(f: FourierCoeffs, sys: DynSystem | None, T: int, n_mc: int, S_candidate: float,
                      xi_grid: Sequence[float], seed=0, sampler: Callable | None = None) -> PersistenceReport:
    """Monte Carlo comparison of the persistence inequality at each ``xi``.

    ``sampler(rng, T)`` may replace the system to draw input sequences directly.
    """
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    X = _inputs(sys, T, n_mc, seed, sampler)
    sq = np.sum(f.evaluate(X.reshape(-1, X.shape[-1])) ** 2, axis=1).reshape(n_mc, T)
    total = sq.sum(axis=1)
    m2 = sq.mean(axis=0).sum()
    m4 = (sq ** 2).mean(axis=0).sum()
    out = []
    for xi in xi_grid:
        vals = np.exp(-xi * total)
        lhs = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(n_mc))
        rhs = float(np.exp(-xi * m2 + 0.5 * xi * xi * S_candidate * m4))
        out.append((float(xi), lhs, rhs, se))
    return PersistenceReport(out)


@dataclass(frozen=True)
class SmallBallReport:
    u: np.ndarray
    freq: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    bound: np.ndarray


def small_ball_probe(f: FourierCoeffs, h: FourierCoeffs, sys: DynSystem | None, T: int, n_mc: int,
                     u_grid: Sequence[float], C: float, seed=0,
                     sampler: Callable | None = None) -> SmallBallReport:
    """Frequency of ``mean_t |f-h|(X_t) >= u ||f-h||`` against ``(1-u^2)^2 / C``.

    Confidence intervals are Clopper-Pearson at 95%.
    """
    diff = f - h
    if not np.any(diff.z):
        raise ValueError("f and h coincide; the normalized event is undefined")
    X = _inputs(sys, T, n_mc, seed, sampler)
    norms = np.linalg.norm(diff.evaluate(X.reshape(-1, X.shape[-1])), axis=1).reshape(n_mc, T)
    l2 = np.sqrt(np.mean(norms ** 2))
    emp = norms.mean(axis=1)
    u = np.asarray(u_grid, dtype=float)
    hits = np.array([np.sum(emp >= ui * l2 * (1 - 1e-12)) for ui in u])
    freq = hits / n_mc
    lo = np.where(hits > 0, stats.beta.ppf(0.025, hits, n_mc - hits + 1), 0.0)
    hi = np.where(hits < n_mc, stats.beta.ppf(0.975, hits + 1, n_mc - hits), 1.0)
    bound = (1 - u ** 2) ** 2 / C
    return SmallBallReport(u, freq, lo, hi, bound)
