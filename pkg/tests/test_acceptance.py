"""Acceptance criteria. Each test records one pass/fail line shown in the terminal summary."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from physreg.bounds import ProblemParams, audit_rows, lower_isometry_prob, moc_bound_prob, rate_bound_exp
from physreg.dynamics import DynSystem, FiniteChain, dependence_matrix_finite, simulate_trajectory
from physreg.estimator import FitConfig, basic_inequality_terms, empirical_moc_linear, fit_erm
from physreg.fourier import FourierCoeffs, design_matrix, l2_norm_sq_lebesgue
from physreg.harness.sweep import aligned_synthetic, rate_sweep
from physreg.harness.unicycle import UnicycleConfig, unicycle_experiment
from physreg.operators import LinearDiffOp, Measure, apply_operator, proper_regularizer_probe, regularizer_value
from physreg.quadrature import tensor_gauss_legendre
from test_bounds import AUDIT_CASES, _ref_constants, monotonicity_failures
from test_estimator import _grid_moc
from test_operators import _fd


def record(name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


def test_rate_separation_synthetic():
    t0 = time.perf_counter()
    rep = rate_sweep(aligned_synthetic(n_reps=20, seed=0), jobs=1)
    elapsed = time.perf_counter() - t0
    reg, unreg = rep.slope("regularized"), rep.slope("unregularized")
    ok = (-1.3 <= reg <= -0.75 and -1.0 <= unreg <= -0.55 and reg <= unreg - 0.1 and elapsed <= 300)
    record("synthetic rate separation", ok,
           f"regularized {reg:.3f}, unregularized {unreg:.3f}, gap {unreg - reg:.3f}, {elapsed:.1f}s")


def test_unicycle_directional():
    rep = unicycle_experiment(UnicycleConfig())
    reg, unreg = rep.slope("regularized"), rep.slope("unregularized")
    k = rep.burn_in_index
    mono = all(np.all(np.diff(rep.mean[i, k:]) <= 0) for i in range(2))
    ok = reg <= unreg - 0.2 and mono
    record("unicycle directional replication", ok,
           f"regularized {reg:.3f}, unregularized {unreg:.3f}, gap {unreg - reg:.3f}, "
           f"monotone after burn-in {mono}")


def test_parseval_quadrature():
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(100):
        dx = int(rng.integers(1, 3))
        m = int(rng.integers(1, 65))
        L = float(rng.uniform(0.5, 2.0))
        f = FourierCoeffs(rng.normal(size=(1, m)), L, dx)
        n = 64 + 2 * m if dx == 1 else 40
        nodes, w = tensor_gauss_legendre(n, -2 * L, 2 * L, dx)
        quad = float(np.sum(w[:, None] * f.evaluate(nodes, check_domain=False) ** 2))
        worst = max(worst, abs(l2_norm_sq_lebesgue(f) - quad) / quad)
    record("Parseval vs quadrature", worst <= 1e-8, f"worst relative gap {worst:.2e} over 100 sets")


def test_operator_correctness():
    rng = np.random.default_rng(101)
    fd_worst = 0.0
    for alpha in [(0,), (1,), (2,), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
        dx = len(alpha)
        m = 9 if dx == 1 else 25
        f = FourierCoeffs(rng.normal(size=(1, m)), 1.0, dx)
        g = apply_operator(LinearDiffOp.partial(alpha), f)
        x = rng.uniform(-0.9, 0.9, (50, dx))
        exact = g.evaluate(x)[:, 0]
        fd_worst = max(fd_worst, np.linalg.norm(exact - _fd(f, x, alpha)) / np.linalg.norm(exact))
    path_worst = 0.0
    for dx, m, n in [(1, 8, 160), (1, 32, 160), (2, 8, 48), (2, 25, 48)]:
        f = FourierCoeffs(rng.normal(size=(1, m)), 1.0, dx)
        op = LinearDiffOp.laplacian(dx)
        closed = regularizer_value(op, f)
        quad = regularizer_value(op, f, Measure("quadrature", box=(-2.0, 2.0), n_per_axis=n))
        path_worst = max(path_worst, abs(closed - quad) / closed)
    ok = fd_worst <= 1e-4 and path_worst <= 1e-8
    record("operator correctness", ok, f"finite differences {fd_worst:.2e}, regularizer paths {path_worst:.2e}")


def test_moc_oracle():
    rng = np.random.default_rng(102)
    worst_excess, worst_gap = 0.0, 0.0
    for _ in range(50):
        X = rng.uniform(-1, 1, (5, 1))
        Phi = design_matrix(X, 3, 1.0)
        W = rng.normal(size=(5, 1))
        # scale the noise so the maximizer sits inside the search box
        zs = np.linalg.lstsq(Phi, 2 * W[:, 0], rcond=None)[0]
        W *= min(1.0, 4.0 / np.abs(zs).max())
        closed = empirical_moc_linear(Phi, W)
        grid = _grid_moc(Phi, W)
        tol = np.linalg.eigvalsh(Phi.T @ Phi / 5).max() * 3 * 0.005 ** 2
        worst_excess = max(worst_excess, grid - closed)
        worst_gap = max(worst_gap, (closed - grid) / tol)
    zero = empirical_moc_linear(Phi, np.zeros((5, 1)))
    ok = worst_excess <= 1e-12 and worst_gap <= 1.0 and zero == 0.0
    record("MOC grid oracle", ok,
           f"grid never above closed form (max excess {worst_excess:.1e}), "
           f"worst gap {worst_gap:.2f} of resolution, W=0 gives {zero}")


def test_basic_inequality_runs():
    rng = np.random.default_rng(103)
    violations = 0
    for run in range(200):
        dx = 1 if run % 2 == 0 else 2
        dy = dx
        m = 5 if dx == 1 else 9
        z = rng.normal(size=(dy, m)) * 0.15 / math.sqrt(m)
        fstar = FourierCoeffs(z, 1.0, dx)
        sys_ = DynSystem(fstar, 1.0, float(rng.uniform(0.05, 0.3)), dx, x0=tuple(rng.uniform(-0.5, 0.5, dx)))
        data = simulate_trajectory(sys_, int(rng.integers(20, 120)), run)
        cfg = FitConfig(m=m, lambda_T=float(rng.choice([0.0, 1e-3, 0.1, 10.0])),
                        lambda_sob=float(rng.choice([0.0, 1e-4, 1e-2])), s=2.0 * dx,
                        op=LinearDiffOp.laplacian(dx, dy=dy),
                        measure=Measure("quadrature", n_per_axis=40 if dx == 1 else 16))
        if cfg.lambda_T == 0:
            cfg = FitConfig(m=m, lambda_sob=cfg.lambda_sob, s=2.0 * dx)
        t = basic_inequality_terms(fit_erm(data, cfg), fstar, data, cfg)
        violations += not t["holds"]
    record("basic inequality", violations == 0, f"{violations} violations over 200 runs")


def test_dependence_matrix():
    ok_iid = True
    for T in (1, 2, 3, 4):
        G, norm = dependence_matrix_finite(FiniteChain([0.3, 0.7], [[0.3, 0.7], [0.3, 0.7]], T))
        ok_iid &= bool(np.array_equal(G, np.eye(T))) and norm == 1.0
    _, copy_norm = dependence_matrix_finite(FiniteChain([0.5, 0.5], np.eye(2), 4))
    iid = np.full((2, 2), 0.5)
    norms = [dependence_matrix_finite(FiniteChain([0.5, 0.5], (1 - t) * iid + t * np.eye(2), 4))[1]
             for t in np.linspace(0, 1, 21)]
    mono = all(b >= a - 1e-12 for a, b in zip(norms, norms[1:]))
    ok = ok_iid and copy_norm > 1 and mono
    record("dependence matrix", ok, f"iid identity {ok_iid}, copy-chain norm {copy_norm:.4f}, monotone {mono}")


def test_constant_audit():
    worst = 0.0
    fixed_ok = True
    for kw in AUDIT_CASES:
        p = ProblemParams(**kw)
        ref = _ref_constants(p.s, p.dx, p.dy, p.theta, p.rho_f_tilde, p.C_c, p.delta, p.volume, p.sigma_w,
                             p.rho_f, p.C_c_prime)
        for name, val, _ in audit_rows(p):
            worst = max(worst, abs(val - ref[name]) / abs(ref[name]))
        for T in (1.0, 1e3, 1e9):
            fixed_ok &= moc_bound_prob(T, 1.0, p).constants["C_III"] == 64.0
            fixed_ok &= rate_bound_exp(T, 0.1, p)["C_fast"] == 2.0
    ok = worst <= 1e-12 and fixed_ok
    record("constant audit", ok, f"worst relative deviation {worst:.1e}, fixed constants {fixed_ok}")


def test_proper_regularizer_fuzz():
    rng = np.random.default_rng(104)
    bad = 0
    for _ in range(1000):
        dx = int(rng.integers(1, 3))
        m = int(rng.integers(1, 26))
        f = FourierCoeffs(rng.normal(size=(1, m)) * rng.uniform(0.01, 10), 1.0, dx)
        h = FourierCoeffs(rng.normal(size=(1, m)) * rng.uniform(0.01, 10), 1.0, dx)
        a = float(rng.uniform(0, 1))
        bad += not proper_regularizer_probe(LinearDiffOp.laplacian(dx), f, h, a, slack=1e-10).all_ok
    record("2-proper fuzz", bad == 0, f"{bad} violations over 1000 draws")


def test_monotonicity_suite():
    bad = monotonicity_failures()
    P = ProblemParams(s=2, dx=1, dy=1, sigma_w=0.1)
    for r in (0.1, 0.5, 1.0):
        probs = [lower_isometry_prob(r, T, P) for T in np.logspace(0, 40, 81)]
        if not all(0 <= q["prob"] <= 1 for q in probs):
            bad.append(f"isometry range r={r}")
        if not all(b["log_raw"] < a["log_raw"] for a, b in zip(probs, probs[1:])):
            bad.append(f"isometry decrease r={r}")
    record("bound monotonicity", not bad, "zero violations" if not bad else ", ".join(bad))
