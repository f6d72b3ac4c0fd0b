"""Closed-form rates, covering numbers, hypercontractivity constants and excess-risk bounds.

Everything here is a pure function of :class:`ProblemParams` and a handful of
scalars. Each report echoes the constants it used so they can be audited.
Quantities that overflow come back as ``inf`` with ``overflow=True``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

__all__ = [
    "ProblemParams",
    "BoundReport",
    "sobolev_rates",
    "m_eps",
    "covering_constants",
    "covering_claim",
    "covering_boundary",
    "covering_effective_class",
    "hyper_constant_eps",
    "hyper_constant",
    "lower_isometry_prob",
    "prob_constants",
    "exp_constants",
    "moc_bound_prob",
    "moc_bound_exp",
    "rate_bound_prob",
    "rate_bound_exp",
    "noreg_rate",
    "burn_in_threshold",
    "FORMULAS",
]


@dataclass(frozen=True)
class ProblemParams:
    """Inputs shared by every bound.

    ``C_c``, ``C_c_prime``, ``c_h_scale`` and ``B`` stand for constants that are
    only known to exist; they default to 1. ``lebesgue_X`` defaults to the
    volume of ``[-L, L]^dx``.
    """

    s: int
    dx: int
    dy: int
    sigma_w: float
    theta: float = 9.0
    S: float = 1.0
    rho_f_tilde: float = 1.0
    C_c: float = 1.0
    delta: float = 0.05
    L: float = 1.0
    rho_f: float = 1.0
    C_c_prime: float = 1.0
    c_h_scale: float = 1.0
    B: float = 1.0
    lebesgue_X: float | None = None

    def __post_init__(self):
        if min(self.s, self.dx, self.dy) < 1:
            raise ValueError("s, dx, dy must be positive integers")
        if self.s < 2 * self.dx:
            raise ValueError(f"smoothness s={self.s} must be at least 2*dx={2 * self.dx}")
        if not self.theta > 8:
            raise ValueError("theta must exceed 8")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.S >= 1:
            raise ValueError("S must be at least 1")
        for name in ("sigma_w", "rho_f_tilde", "C_c", "L", "rho_f", "C_c_prime", "c_h_scale", "B"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lebesgue_X is not None and not self.lebesgue_X > 0:
            raise ValueError("lebesgue_X must be positive")

    @property
    def volume(self) -> float:
        return self.lebesgue_X if self.lebesgue_X is not None else (2.0 * self.L) ** self.dx

    def with_(self, **kw) -> "ProblemParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class BoundReport:
    """Named outputs plus the constant set they were computed from."""

    values: dict
    constants: dict
    overflow: bool = False

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        return self.constants[key]

    @property
    def bound(self) -> float:
        return self.values["bound"]


def _safe(fn):
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            v = float(fn())
        except OverflowError:
            return math.inf, True
    if math.isnan(v):
        return math.inf, True
    return v, math.isinf(v)


def _pw(x, e):
    try:
        return x ** e
    except OverflowError:
        return math.inf


# --------------------------------------------------------------------------
# rates and covering numbers


def sobolev_rates(s: float, dx: int) -> tuple[float, float]:
    """Minimax exponent ``d = 2s/(2s+dx)`` and ``d' = 2dx/(2s+dx)``."""
    if s < 1 or dx < 1:
        raise ValueError("s and dx must be at least 1")
    return 2.0 * s / (2 * s + dx), 2.0 * dx / (2 * s + dx)


def m_eps(rho_f_tilde: float, s: int, dx: int, eps: float) -> int:
    """Smallest integer ``m >= 1`` with ``m >= (16 rho^2 dx / ((2s-dx) eps^2))^(dx/(2s-dx))``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    val = (16.0 * rho_f_tilde ** 2 * dx / ((2 * s - dx) * eps ** 2)) ** (dx / (2.0 * s - dx))
    if not math.isfinite(val):
        raise OverflowError("m_eps is not representable")
    m = math.ceil(val)
    # ceil of a value within roundoff of an integer
    if m - val > 1 - 1e-12:
        m -= 1
    return max(1, m)


def covering_constants(p: ProblemParams) -> dict:
    """``C_m``, ``C_M = C_m dy``, ``C_L`` and ``C_h``."""
    s, dx = p.s, p.dx
    C_m = (16.0 * p.rho_f_tilde ** 2 * dx * p.theta / (2 * s - dx)) ** (dx / (2.0 * s - dx))
    C_L = 8.0 * p.rho_f_tilde * p.dy * math.sqrt(p.theta) * C_m ** (s / dx)
    lam = p.volume
    C_h = p.c_h_scale * (lam / 32.0 + 8.0 * lam * (lam / 8.0 + 2.0) ** 2 * C_m ** 2)
    return {"C_m": C_m, "C_M": C_m * p.dy, "C_L": C_L, "C_h": C_h}


def covering_claim(m: float, eps: float, p: ProblemParams) -> float:
    """``log N <= m dy log(8 rho m^(s/dx) dy / eps + 1)`` for the truncated ball."""
    return m * p.dy * math.log(8.0 * p.rho_f_tilde * m ** (p.s / p.dx) * p.dy / eps + 1.0)


def covering_boundary(r: float, p: ProblemParams) -> BoundReport:
    """Log covering bound of the sphere of radius ``r`` at scale ``r / sqrt(theta)``."""
    if not r > 0:
        raise ValueError("r must be positive")
    c = covering_constants(p)
    s, dx = p.s, p.dx
    a = 2.0 * dx / (2 * s - dx)
    b = (4.0 * s - dx) / (2 * s - dx)
    m_cont = c["C_m"] * (1.0 / r) ** a
    val, of = _safe(lambda: p.dy * m_cont * math.log1p(c["C_L"] * (1.0 / r) ** b))
    m_int = m_eps(p.rho_f_tilde, s, dx, r / math.sqrt(p.theta))
    return BoundReport({"log_covering": val, "m_r": m_int, "m_r_continuous": m_cont}, c, of)


def covering_effective_class(rho: float, eps: float, p: ProblemParams) -> float:
    """``C_c dy^((2s+dx)/(2s)) (sqrt(rho)/eps)^(dx/s)``."""
    if not (rho > 0 and eps > 0):
        raise ValueError("rho and eps must be positive")
    return p.C_c * p.dy ** ((2.0 * p.s + p.dx) / (2 * p.s)) * (math.sqrt(rho) / eps) ** (p.dx / p.s)


def hyper_constant_eps(lebesgue_X: float, m: float) -> float:
    """Hypercontractivity constant at truncation ``m`` for a domain of volume ``lebesgue_X``."""
    lam = lebesgue_X
    return lam / 32.0 + 8.0 * lam * m ** 2 * (lam / 8.0 + 2.0) ** 2


def hyper_constant(r: float, p: ProblemParams) -> float:
    """``C(r) = C_h (1/r)^(4dx/(2s-dx))``."""
    if not r > 0:
        raise ValueError("r must be positive")
    C_h = covering_constants(p)["C_h"]
    return C_h * (1.0 / r) ** (4.0 * p.dx / (2 * p.s - p.dx))


def lower_isometry_prob(r: float, T: float, p: ProblemParams) -> BoundReport:
    """Failure probability of the lower isometry at radius ``r``; clamped and raw."""
    if not r > 0:
        raise ValueError("r must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    c = covering_constants(p)
    s, dx = p.s, p.dx
    log_cover = p.dy * c["C_m"] * (1.0 / r) ** (2.0 * dx / (2 * s - dx)) * math.log1p(
        c["C_L"] * (1.0 / r) ** ((4.0 * s - dx) / (2 * s - dx)))
    log_raw = log_cover - 8.0 * T * r ** (4.0 * dx / (2 * s - dx)) / (p.theta ** 2 * c["C_h"] * p.S)
    raw = math.exp(log_raw) if log_raw < 709 else math.inf
    return BoundReport({"prob": min(1.0, raw), "raw": raw, "log_raw": log_raw}, c, math.isinf(raw))


# --------------------------------------------------------------------------
# offset complexity bounds


def prob_constants(p: ProblemParams) -> dict:
    s, dx, dy = p.s, p.dx, p.dy
    d, _ = sobolev_rates(s, dx)
    K = 8.0 * p.C_c * dy ** (1.0 / d)
    return {
        "C_I": 8.0 * (1.0 + math.sqrt(2.0 * math.log(1.0 / p.delta))) * K ** (d / 2.0),
        "C_II": (2.0 * s / (2 * s - dx)) * 8.0 * math.sqrt(p.C_c * dy ** (1.0 / d))
        * K ** ((2.0 * s - dx) / (2.0 * (2 * s + dx))),
        "C_III": 64.0,
        "C_IV": 8.0 * K ** d,
    }


def exp_constants(p: ProblemParams) -> dict:
    s, dx, dy = p.s, p.dx, p.dy
    d, _ = sobolev_rates(s, dx)
    K = 8.0 * p.C_c * dy ** (1.0 / d)
    return {
        "C_I": 8.0 * math.sqrt(p.C_c * dy ** d) / (1.0 - dx / (2.0 * s))
        * K ** ((2.0 * s - dx) / (2.0 * (2 * s + dx))),
        "C_II": 8.0 * K ** d,
    }


def moc_bound_prob(T: float, rho: float, p: ProblemParams) -> BoundReport:
    """High-probability bound on the offset complexity of the effective class."""
    if T < 1 or not rho > 0:
        raise ValueError("need T >= 1 and rho > 0")
    d, dp = sobolev_rates(p.s, p.dx)
    c = prob_constants(p)
    sig, lg = p.sigma_w, math.log(1.0 / p.delta)
    terms = {
        "term_I": c["C_I"] * _pw(sig, 1 + d) * T ** (-(1 + d) / 2) * _pw(math.sqrt(rho), dp / 2),
        "term_II_IV": (c["C_II"] + c["C_IV"]) * _pw(sig, 2 * d) * T ** (-d) * _pw(math.sqrt(rho), dp),
        "term_III": c["C_III"] * sig * lg / T,
    }
    val, of = _safe(lambda: sum(terms.values()))
    return BoundReport({"bound": val, **terms}, c, of)


def moc_bound_exp(T: float, rho: float, p: ProblemParams) -> BoundReport:
    """Bound on the expected offset complexity of the effective class."""
    if T < 1 or not rho > 0:
        raise ValueError("need T >= 1 and rho > 0")
    d, dp = sobolev_rates(p.s, p.dx)
    c = exp_constants(p)
    val, of = _safe(lambda: (c["C_I"] + c["C_II"]) * _pw(p.sigma_w / T, d) * _pw(math.sqrt(rho), dp))
    return BoundReport({"bound": val}, c, of)


# --------------------------------------------------------------------------
# burn-in


def _burn_in_rhs_prob(T, r2, p, c):
    s, dx = p.s, p.dx
    inv_r = 1.0 / math.sqrt(r2)
    k = 2.0 * s - dx
    return p.theta ** 2 * c["C_h"] * p.S / 8.0 * (
        c["C_M"] * _pw(inv_r, 6.0 * dx / k) * math.log1p(c["C_L"] * _pw(inv_r, (4.0 * s - dx) / k))
        + _pw(inv_r, 4.0 * dx / k) * math.log(1.0 / p.delta))


def _burn_in_rhs_exp(T, r2, p, c):
    s, dx = p.s, p.dx
    inv_r = 1.0 / math.sqrt(r2)
    k = 2.0 * s - dx
    inner = (c["C_M"] * _pw(inv_r, 2.0 * dx / k)
             * math.log(4.0 * p.B ** 2 * (1.0 + c["C_L"] * _pw(inv_r, (4.0 * s - dx) / k)))
             + math.log(p.sigma_w / T))
    return p.theta ** 2 * c["C_h"] * p.S / 8.0 * _pw(inv_r, 4.0 * dx / k) * inner


def burn_in_threshold(gap, lo: float = 1.0, hi: float = 1e300, iters: int = 200) -> float:
    """Smallest ``T`` in ``[lo, hi]`` with ``gap(T) >= 0``, by bisection on ``log T``.

    ``gap`` is assumed to change sign at most once. Returns ``inf`` if even
    ``hi`` fails.
    """
    if gap(lo) >= 0:
        return lo
    if gap(hi) < 0:
        return math.inf
    a, b = math.log(lo), math.log(hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if gap(math.exp(mid)) >= 0:
            b = mid
        else:
            a = mid
        if b - a < 1e-12:
            break
    return math.exp(b)


# --------------------------------------------------------------------------
# rate bounds


def _check_R(R_fstar):
    if not R_fstar > 0:
        raise ValueError(
            "R(f*) must be positive: the admissible physics weight scales like 1/R(f*) "
            "and is undefined at exact alignment")


def _lambda_min_prob(T, R, p, c, d, dp):
    sig, lg = p.sigma_w, math.log(1.0 / p.delta)
    return 4.0 / (3.0 * T ** d) * (
        c["C_I"] * sig ** (1 + d) / R ** (1 - dp / 4)
        + (c["C_II"] + c["C_IV"]) * sig ** (2 * d) / R ** (1 - dp / 2)
        + c["C_III"] * sig * lg / R)


def rate_bound_prob(T: float, R_fstar: float, p: ProblemParams, lambda_T: float | None = None) -> BoundReport:
    """High-probability excess-risk bound with physics penalty.

    ``lambda_T`` defaults to the smallest admissible weight at this ``T``.
    """
    _check_R(R_fstar)
    if T < 1:
        raise ValueError("T must be at least 1")
    d, dp = sobolev_rates(p.s, p.dx)
    c = prob_constants(p)
    cov = covering_constants(p)
    sig, lg, th = p.sigma_w, math.log(1.0 / p.delta), p.theta
    C_slow = (th + 4) * (c["C_I"] * 10 ** (dp / 4) * sig ** (1 + d)
                         + c["C_II"] * 10 ** (dp / 2) * sig ** (2 * d)
                         + c["C_IV"] * sig ** (2 * d) * 10 ** (dp / 2))
    C_fast = (th + 4) * c["C_III"] + 1
    R = R_fstar
    slow = C_slow * max(R ** (dp / 4), R ** (dp / 2)) / T ** d
    fast = C_fast * sig * lg / T
    lam_min = _lambda_min_prob(T, R, p, c, d, dp)
    lam = lam_min if lambda_T is None else lambda_T

    def rhs(t):
        lt = _lambda_min_prob(t, R, p, c, d, dp) if lambda_T is None else lambda_T
        return _burn_in_rhs_prob(t, lt * R + sig / t, p, cov)

    r2 = lam * R + sig / T
    burn_rhs, _ = _safe(lambda: rhs(T))
    thr = burn_in_threshold(lambda t: t - _safe(lambda: rhs(t))[0])
    val, of = _safe(lambda: slow + fast)
    values = {"bound": val, "slow": slow, "fast": fast, "lambda_min": lam_min, "lambda_T": lam,
              "rho": 10.0 * R, "r2": r2, "burn_in_rhs": burn_rhs, "burn_in_ok": T >= burn_rhs,
              "burn_in_T": thr}
    return BoundReport(values, {**c, "C_slow": C_slow, "C_fast": C_fast, **cov}, of)


def rate_bound_exp(T: float, R_fstar: float, p: ProblemParams, lambda_T: float | None = None) -> BoundReport:
    """Excess-risk bound in expectation with physics penalty."""
    _check_R(R_fstar)
    if T < 1:
        raise ValueError("T must be at least 1")
    d, dp = sobolev_rates(p.s, p.dx)
    c = exp_constants(p)
    cov = covering_constants(p)
    sig, th = p.sigma_w, p.theta
    C_slow = (th + 4) * 10 ** (dp / 2) * (c["C_I"] + c["C_II"]) * sig ** d
    C_fast = 2.0
    R = R_fstar
    slow = C_slow * R ** (dp / 2) / T ** d
    fast = C_fast * sig / T

    def lam_min_at(t):
        return 4.0 * (c["C_I"] + c["C_II"]) * sig ** d / (3.0 * t ** d * R ** (1 - dp / 2))

    def rhs(t):
        lt = lam_min_at(t) if lambda_T is None else lambda_T
        return _burn_in_rhs_exp(t, 2.0 * lt * R + sig / t, p, cov)

    lam = lam_min_at(T) if lambda_T is None else lambda_T
    burn_rhs, _ = _safe(lambda: rhs(T))
    thr = burn_in_threshold(lambda t: t - _safe(lambda: rhs(t))[0])
    val, of = _safe(lambda: slow + fast)
    values = {"bound": val, "slow": slow, "fast": fast, "lambda_min": lam_min_at(T), "lambda_T": lam,
              "rho": 10.0 * R, "r2": 2.0 * lam * R + sig / T, "burn_in_rhs": burn_rhs,
              "burn_in_ok": T >= burn_rhs, "burn_in_T": thr}
    return BoundReport(values, {**c, "C_slow": C_slow, "C_fast": C_fast, **cov}, of)


def noreg_constants(p: ProblemParams, mode: str = "prob") -> dict:
    s, dx, dy, rf, Cc = p.s, p.dx, p.dy, p.rho_f, p.C_c_prime
    d, _ = sobolev_rates(s, dx)
    e = (2.0 * s + dx) / (2.0 * s)
    K = 8.0 * Cc * dy ** e
    shrink = 1.0 - dx / (2.0 * s)
    if mode == "prob":
        return {
            "C_I": 8.0 * K ** (s / (2.0 * s + dx)) * (1.0 + math.sqrt(2.0 * math.log(1.0 / p.delta)))
            * rf ** (dx / (2.0 * s + dx)),
            "C_II": 8.0 * math.sqrt(Cc * dy ** e) / shrink * K ** ((2.0 * s - dx) / (2.0 * (2 * s + dx)))
            * rf ** (2.0 * dx / (2 * s + dx)),
            "C_III": 64.0,
            "C_IV": 8.0 * K ** (2.0 * s / (2 * s + dx)) * rf ** (2.0 * dx / (2 * s + dx)),
        }
    if mode == "exp":
        A = K * rf ** (dx / s)
        return {
            "C_I": 8.0 * math.sqrt(Cc * dy ** e) / shrink * A ** (s / (2.0 * s + dx))
            * rf ** (dx / s + dx / (2.0 * s + dx)),
            "C_II": 8.0 * A ** (2.0 * s / (2 * s + dx)),
        }
    raise ValueError("mode must be 'prob' or 'exp'")


def noreg_rate(T: float, p: ProblemParams, mode: str = "prob") -> BoundReport:
    """Excess-risk bound without a physics penalty; ``mode`` is ``"prob"`` or ``"exp"``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    d, _ = sobolev_rates(p.s, p.dx)
    c = noreg_constants(p, mode)
    sig, th = p.sigma_w, p.theta
    if mode == "prob":
        C_slow = th * (c["C_I"] + c["C_II"] + c["C_IV"]) * max(sig ** (1 + d), sig ** (2 * d))
        C_fast = 1.0 + th * c["C_III"]
        fast = C_fast * sig * math.log(1.0 / p.delta) / T
    else:
        C_slow = th * (c["C_I"] + c["C_II"]) * sig ** d
        C_fast = 2.0
        fast = C_fast * sig / T
    slow = C_slow / T ** d
    val, of = _safe(lambda: slow + fast)
    return BoundReport({"bound": val, "slow": slow, "fast": fast},
                       {**c, "C_slow_prime": C_slow, "C_fast_prime": C_fast}, of)


# --------------------------------------------------------------------------
# formula strings for audit files

FORMULAS = {
    "d": "2s/(2s+dx)",
    "d_prime": "2dx/(2s+dx)",
    "C_m": "(16 rho_tilde^2 dx theta/(2s-dx))^(dx/(2s-dx))",
    "C_M": "C_m * dy",
    "C_L": "8 rho_tilde dy sqrt(theta) C_m^(s/dx)",
    "C_h": "c_h_scale * (Lambda/32 + 8 Lambda (Lambda/8+2)^2 C_m^2)",
    "prob.C_I": "8 (1+sqrt(2 log(1/delta))) (8 C_c dy^(1/d))^(d/2)",
    "prob.C_II": "(2s/(2s-dx)) 8 sqrt(C_c dy^(1/d)) (8 C_c dy^(1/d))^((2s-dx)/(2(2s+dx)))",
    "prob.C_III": "64",
    "prob.C_IV": "8 (8 C_c dy^(1/d))^d",
    "prob.C_slow": "(theta+4)(C_I 10^(d'/4) sigma^(1+d) + C_II 10^(d'/2) sigma^(2d) + C_IV sigma^(2d) 10^(d'/2))",
    "prob.C_fast": "(theta+4) C_III + 1",
    "exp.C_I": "8 sqrt(C_c dy^d)/(1-dx/(2s)) (8 C_c dy^(1/d))^((2s-dx)/(2(2s+dx)))",
    "exp.C_II": "8 (8 C_c dy^(1/d))^d",
    "exp.C_slow": "(theta+4) 10^(d'/2) (C_I+C_II) sigma^d",
    "exp.C_fast": "2",
    "noreg.prob.C_I": "8 (8 C'_c dy^((2s+dx)/(2s)))^(s/(2s+dx)) (1+sqrt(2 log(1/delta))) rho_f^(dx/(2s+dx))",
    "noreg.prob.C_II": "8 sqrt(C'_c dy^((2s+dx)/(2s)))/(1-dx/(2s)) (8 C'_c dy^((2s+dx)/(2s)))^((2s-dx)/(2(2s+dx))) rho_f^(2dx/(2s+dx))",
    "noreg.prob.C_III": "64",
    "noreg.prob.C_IV": "8 (8 C'_c dy^((2s+dx)/(2s)))^(2s/(2s+dx)) rho_f^(2dx/(2s+dx))",
    "noreg.prob.C_slow_prime": "theta (C_I'+C_II'+C_IV') max(sigma^(1+d), sigma^(2d))",
    "noreg.prob.C_fast_prime": "1 + theta C_III'",
    "noreg.exp.C_I": "8 sqrt(C'_c dy^((2s+dx)/(2s)))/(1-dx/(2s)) (8 C'_c dy^((2s+dx)/(2s)) rho_f^(dx/s))^(s/(2s+dx)) rho_f^(dx/s + dx/(2s+dx))",
    "noreg.exp.C_II": "8 (8 C'_c dy^((2s+dx)/(2s)) rho_f^(dx/s))^(2s/(2s+dx))",
    "noreg.exp.C_slow_prime": "theta (C_I'+C_II') sigma^d",
    "noreg.exp.C_fast_prime": "2",
}


def audit_rows(p: ProblemParams) -> list[tuple[str, float, str]]:
    """``(name, value, formula)`` for every constant derived from ``p``."""
    d, dp = sobolev_rates(p.s, p.dx)
    rows = [("d", d, FORMULAS["d"]), ("d_prime", dp, FORMULAS["d_prime"])]
    for k, v in covering_constants(p).items():
        rows.append((k, v, FORMULAS[k]))
    pr = rate_bound_prob(1.0, 1.0, p).constants
    for k in ("C_I", "C_II", "C_III", "C_IV", "C_slow", "C_fast"):
        rows.append((f"prob.{k}", pr[k], FORMULAS[f"prob.{k}"]))
    ex = rate_bound_exp(1.0, 1.0, p).constants
    for k in ("C_I", "C_II", "C_slow", "C_fast"):
        rows.append((f"exp.{k}", ex[k], FORMULAS[f"exp.{k}"]))
    for mode in ("prob", "exp"):
        nc = noreg_rate(1.0, p, mode).constants
        for k, v in nc.items():
            rows.append((f"noreg.{mode}.{k}", v, FORMULAS[f"noreg.{mode}.{k}"]))
    return rows
