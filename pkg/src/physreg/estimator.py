"""Penalized least squares in the truncated basis, excess risk and offset complexity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dynamics import DynSystem, TrajectoryDataset, sample_inputs
from .fourier import FourierCoeffs, design_matrix, sobolev_norm_sq, sobolev_weights
from .operators import LinearDiffOp, Measure, OperatorGram, operator_from_spec, operator_gram

__all__ = [
    "FitConfig",
    "FitResult",
    "FitError",
    "fit_erm",
    "fit_from_moments",
    "Moments",
    "excess_risk",
    "empirical_moc_linear",
    "empirical_moc_cover",
    "basic_inequality_terms",
    "FourierFeatures",
    "PhysicsRegularizedRegressor",
]

COND_LIMIT = 1e12


class FitError(ArithmeticError):
    """The penalized normal equations could not be solved."""


@dataclass(frozen=True)
class FitConfig:
    """Settings for one penalized fit.

    ``penalty`` overrides ``op``: either an :class:`OperatorGram` or a dense
    matrix on the output-major stacked coefficients (for penalties that couple
    outputs).
    """

    m: int
    L: float = 1.0
    lambda_T: float = 0.0
    lambda_sob: float = 0.0
    s: float = 2.0
    op: LinearDiffOp | None = None
    measure: Measure | None = None
    penalty: object = None
    tol: float = 1e-8

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        for name in ("lambda_T", "lambda_sob"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.lambda_T > 0 and self.op is None and self.penalty is None:
            raise ValueError("a physics penalty weight needs an operator or a penalty matrix")

    def penalty_matrix(self, dx: int, dy: int):
        """The physics penalty as an OperatorGram or a dense stacked matrix (``None`` if unused)."""
        if self.penalty is not None:
            return self.penalty
        if self.op is None:
            return None
        return operator_gram(self.op, self.m, self.L, self.measure)


@dataclass(frozen=True)
class FitResult:
    coeffs: FourierCoeffs
    objective: float
    residual_norm: float
    condition: float
    grad_norm: float
    sobolev_sq: float
    penalty_value: float


@dataclass(frozen=True)
class Moments:
    """Sufficient statistics of a dataset for the fit: ``G = Phi'Phi/T``, ``B = Phi'Y/T``, ``yy = |Y|^2/T``."""

    G: np.ndarray
    B: np.ndarray
    yy: float
    T: int
    dx: int

    @classmethod
    def from_data(cls, X, Y, m: int, L: float, chunk: int = 20000) -> "Moments":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
        G = np.zeros((m, m))
        B = np.zeros((m, Y.shape[1]))
        for a in range(0, len(X), chunk):
            Phi = design_matrix(X[a:a + chunk], m, L)
            G += Phi.T @ Phi
            B += Phi.T @ Y[a:a + chunk]
        T = len(X)
        return cls(G / T, B / T, float(np.sum(Y ** 2)) / T, T, X.shape[1])


def _penalty_blocks(P, dy: int, m: int):
    if P is None:
        return None, None
    if isinstance(P, OperatorGram):
        if P.dy != dy or P.m != m:
            raise ValueError("penalty Gram does not match the fit dimensions")
        return list(P.blocks), None
    P = np.asarray(P, dtype=float)
    if P.shape != (dy * m, dy * m):
        raise ValueError(f"penalty matrix must be {dy * m} x {dy * m}")
    return None, 0.5 * (P + P.T)


def _spd_solve(A: np.ndarray, b: np.ndarray, unpenalized: bool, T: int):
    n = A.shape[0]
    if unpenalized:
        cond = np.linalg.cond(A)
        if T < n or not np.isfinite(cond) or cond > COND_LIMIT:
            raise FitError(
                "identifiability guard: no penalty and a rank-deficient design "
                f"(T={T}, unknowns={n}, condition={cond:.3g})")
    try:
        c = cho_factor(A, lower=True, check_finite=True)
    except LinAlgError:
        jitter = 1e-12 * np.trace(A) / n
        try:
            c = cho_factor(A + jitter * np.eye(n), lower=True)
        except LinAlgError as exc:
            raise FitError("normal equations are not positive definite") from exc
    d = np.abs(np.diag(c[0]))
    cond_est = float((d.max() / d.min()) ** 2) if d.min() > 0 else np.inf
    return cho_solve(c, b), cond_est


def fit_from_moments(mom: Moments, cfg: FitConfig, P=None) -> FitResult:
    """Solve the penalized normal equations from precomputed moments.

    ``P`` is the physics penalty (see :meth:`FitConfig.penalty_matrix`); it is
    built from ``cfg`` when omitted.
    """
    m, dy = cfg.m, mom.B.shape[1]
    if mom.G.shape != (m, m):
        raise ValueError("moments were computed for a different truncation")
    if P is None and cfg.lambda_T > 0:
        P = cfg.penalty_matrix(mom.dx, dy)
    blocks, dense = _penalty_blocks(P if cfg.lambda_T > 0 else None, dy, m)
    Ws = sobolev_weights(m, cfg.s, mom.dx)
    base = mom.G + cfg.lambda_sob * np.diag(Ws)
    unpen = cfg.lambda_T == 0 and cfg.lambda_sob == 0
    conds = []
    if dense is None:
        Z = np.zeros((dy, m))
        for i in range(dy):
            A = base + cfg.lambda_T * blocks[i] if blocks is not None else base
            Z[i], c = _spd_solve(A, mom.B[:, i], unpen, mom.T)
            conds.append(c)
        grad = []
        for i in range(dy):
            A = base + cfg.lambda_T * blocks[i] if blocks is not None else base
            grad.append(2 * (A @ Z[i] - mom.B[:, i]))
        grad = np.concatenate(grad)
        pen = sum(Z[i] @ blocks[i] @ Z[i] for i in range(dy)) if blocks is not None else 0.0
    else:
        A = np.kron(np.eye(dy), base) + cfg.lambda_T * dense
        b = mom.B.T.ravel()
        zvec, c = _spd_solve(A, b, unpen, mom.T)
        conds.append(c)
        Z = zvec.reshape(dy, m)
        grad = 2 * (A @ zvec - b)
        pen = float(zvec @ dense @ zvec)
    fit_sq = mom.yy - 2 * np.sum(Z * mom.B.T) + np.einsum("im,mn,in->", Z, mom.G, Z)
    sob = float(np.sum(Z ** 2 * Ws))
    obj = float(fit_sq + cfg.lambda_sob * sob + cfg.lambda_T * pen)
    return FitResult(
        coeffs=FourierCoeffs(Z, cfg.L, mom.dx),
        objective=obj,
        residual_norm=float(np.sqrt(max(fit_sq, 0.0))),
        condition=max(conds),
        grad_norm=float(np.linalg.norm(grad)),
        sobolev_sq=sob,
        penalty_value=float(pen),
    )


def fit_erm(data: TrajectoryDataset, cfg: FitConfig) -> FitResult:
    """Minimize ``mean_t |Y_t - f(X_t)|^2 + lambda_sob * Sob(f) + lambda_T * R(f)`` over the span."""
    if data.T < 1:
        raise ValueError("empty dataset")
    mom = Moments.from_data(data.X, data.Y, cfg.m, cfg.L)
    res = fit_from_moments(mom, cfg)
    # recompute the data term from residuals; the moment form loses digits near a perfect fit
    r = data.Y - res.coeffs.evaluate(data.X)
    fit_sq = float(np.mean(np.sum(r ** 2, axis=1)))
    obj = fit_sq + cfg.lambda_sob * res.sobolev_sq + cfg.lambda_T * res.penalty_value
    return FitResult(res.coeffs, obj, float(np.sqrt(fit_sq)), res.condition, res.grad_norm,
                     res.sobolev_sq, res.penalty_value)


# --------------------------------------------------------------------------
# risk and complexity


def _evaluate(f, X):
    if isinstance(f, FourierCoeffs):
        return f.evaluate(X)
    return np.asarray(f(X), dtype=float).reshape(len(X), -1)


def excess_risk(fhat, fstar, sys: DynSystem | None, T_eval: int, n_traj: int, seed,
                sampler: Callable | None = None) -> tuple[float, float]:
    """Monte Carlo trajectory distance between ``fhat`` and ``fstar``.

    Returns ``(estimate, standard_error)``. Each of ``n_traj`` fresh input
    sequences of length ``T_eval`` contributes its time-averaged squared error.
    ``sampler(rng, T)`` may replace the system as the input source.
    """
    if n_traj < 2:
        raise ValueError("need at least two trajectories for a standard error")
    if sampler is not None:
        rng = np.random.default_rng(seed)
        X = np.stack([np.asarray(sampler(rng, T_eval), dtype=float).reshape(T_eval, -1)
                      for _ in range(n_traj)])
    else:
        X = sample_inputs(sys, T_eval, n_traj, seed)
    flat = X.reshape(-1, X.shape[-1])
    err = np.sum((_evaluate(fhat, flat) - _evaluate(fstar, flat)) ** 2, axis=1)
    per = err.reshape(n_traj, T_eval).mean(axis=1)
    return float(per.mean()), float(per.std(ddof=1) / np.sqrt(n_traj))


def empirical_moc_linear(Phi: np.ndarray, W: np.ndarray) -> float:
    """Offset complexity of the full linear span of the columns of ``Phi``.

    Equals ``(4/T) sum_j a_j' G^+ a_j`` with ``a_j = Phi' W[:, j]``, computed as
    the squared norm of the projection of ``W`` onto the column space.
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    W = np.asarray(W, dtype=float).reshape(Phi.shape[0], -1)
    T = Phi.shape[0]
    U, sv, _ = np.linalg.svd(Phi, full_matrices=False)
    if sv.size == 0 or sv[0] == 0:
        return 0.0
    rank = int(np.sum(sv > sv[0] * max(Phi.shape) * np.finfo(float).eps))
    proj = U[:, :rank].T @ W
    return float(4.0 / T * np.sum(proj ** 2))


def empirical_moc_cover(cover, X, W) -> float:
    """Largest offset value over a finite class, floored at zero."""
    cover = list(cover)
    if not cover:
        raise ValueError("cover is empty")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W = np.asarray(W, dtype=float).reshape(len(X), -1)
    best = 0.0
    for f in cover:
        F = _evaluate(f, X)
        best = max(best, float(np.mean(4 * np.sum(W * F, axis=1) - np.sum(F ** 2, axis=1))))
    return best


def basic_inequality_terms(fit: FitResult, fstar: FourierCoeffs, data: TrajectoryDataset,
                           cfg: FitConfig, P=None) -> dict:
    """Both sides of the basic inequality for a fit whose truth lies in the span.

    The right side is ``MOC + 2 lambda_T R(f*) + 2 lambda_sob Sob(f*)``; the ridge
    term vanishes when no Sobolev penalty is used.
    """
    if data.W is None:
        raise ValueError("dataset carries no noise record")
    Phi = design_matrix(data.X, cfg.m, cfg.L)
    lhs = float(np.mean(np.sum((Phi @ (fit.coeffs.z - fstar.z).T) ** 2, axis=1)))
    moc = empirical_moc_linear(Phi, data.W)
    if P is None and cfg.lambda_T > 0:
        P = cfg.penalty_matrix(data.X.shape[1], fstar.dy)
    if cfg.lambda_T > 0:
        R = P.quad_form(fstar) if isinstance(P, OperatorGram) else float(fstar.z.ravel() @ P @ fstar.z.ravel())
    else:
        R = 0.0
    sob = sobolev_norm_sq(fstar, cfg.s) if cfg.lambda_sob > 0 else 0.0
    rhs = moc + 2 * cfg.lambda_T * R + 2 * cfg.lambda_sob * sob
    return {"excess": lhs, "moc": moc, "R_fstar": R, "rhs": rhs, "holds": lhs <= rhs * (1 + 1e-9) + 1e-14}


# --------------------------------------------------------------------------
# estimator API


class FourierFeatures(TransformerMixin, BaseEstimator):
    """Evaluate the first ``m`` basis functions on the cube of half-width ``L``."""

    def __init__(self, m: int = 17, L: float = 1.0):
        self.m = m
        self.L = L

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("feature count changed since fit")
        return design_matrix(X, self.m, self.L)


class PhysicsRegularizedRegressor(RegressorMixin, BaseEstimator):
    """Least squares in a truncated Fourier basis with Sobolev and physics penalties.

    Parameters
    ----------
    m : int
        Number of basis functions.
    L : float
        Cube half-width; inputs must lie in ``[-L, L]^dx``.
    lambda_T : float
        Weight of the penalty ``||D f||^2``.
    lambda_sob : float
        Weight of the Sobolev ridge.
    s : float
        Smoothness in the Sobolev weights.
    operator : str or LinearDiffOp
        ``"laplacian"``, ``"identity"``, a JSON term list, or an operator.
    measure : {"lebesgue_cube", "quadrature"}
        Where the penalty is integrated; ``"quadrature"`` uses the cube itself.
    """

    def __init__(self, m: int = 17, L: float = 1.0, lambda_T: float = 0.0, lambda_sob: float = 0.0,
                 s: float = 2.0, operator="laplacian", measure: str = "lebesgue_cube"):
        self.m = m
        self.L = L
        self.lambda_T = lambda_T
        self.lambda_sob = lambda_sob
        self.s = s
        self.operator = operator
        self.measure = measure

    def _config(self, dx: int, dy: int) -> FitConfig:
        op = self.operator
        if not isinstance(op, LinearDiffOp):
            op = operator_from_spec(op, dx, dy)
        return FitConfig(m=self.m, L=self.L, lambda_T=self.lambda_T, lambda_sob=self.lambda_sob,
                         s=self.s, op=op, measure=Measure(self.measure))

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single_output = y.ndim == 1
        Y = y.reshape(len(y), -1)
        cfg = self._config(X.shape[1], Y.shape[1])
        self.fit_result_ = fit_erm(TrajectoryDataset(X, Y), cfg)
        self.coeffs_ = self.fit_result_.coeffs
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coeffs_")
        X = check_array(X)
        out = self.coeffs_.evaluate(X)
        return out[:, 0] if self._single_output else out
