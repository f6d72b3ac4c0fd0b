import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physreg.fourier import FourierCoeffs, design_matrix, frequency_index, l2_norm_sq_lebesgue, normalization
from physreg.operators import (
    LinearDiffOp,
    Measure,
    apply_operator,
    ellipticity_check,
    operator_from_spec,
    operator_gram,
    parse_expression,
    proper_regularizer_probe,
    regularizer_value,
)

QUAD_CUBE = Measure("quadrature", box=(-2.0, 2.0), n_per_axis=96)


def rand_f(rng, m, dx=1, dy=1, L=1.0):
    return FourierCoeffs(rng.normal(size=(dy, m)) / np.arange(1, m + 1), L, dx)


# ---------------------------------------------------------------- apply

def test_identity_returns_input():
    rng = np.random.default_rng(0)
    f = rand_f(rng, 9, dx=2)
    g = apply_operator(LinearDiffOp.identity(2), f)
    assert np.array_equal(g.z, f.z)


def test_first_derivative_of_cosine():
    L = 0.8
    f = FourierCoeffs.unit(2, 3, L, 1)
    g = apply_operator(LinearDiffOp.partial((1,)), f)
    expected = np.zeros((1, 3))
    expected[0, 2] = -math.pi / (2 * L)
    assert np.allclose(g.z, expected, atol=1e-15)


def test_derivative_would_drop_partner():
    with pytest.raises(ValueError):
        apply_operator(LinearDiffOp.partial((1,)), FourierCoeffs.unit(2, 2, 1.0, 1))


def test_laplacian_multiplier_dx2():
    L = 1.1
    lap = LinearDiffOp.laplacian(2)
    m = 25
    for ell in range(1, m + 1):
        g = apply_operator(lap, FourierCoeffs.unit(ell, m, L, 2))
        k = frequency_index(ell, 2)
        mult = -(math.pi / (2 * L)) ** 2 * float(k @ k)
        assert np.allclose(g.z[0], mult * np.eye(m)[ell - 1], atol=1e-13)


def test_variable_coefficient_rejected():
    op = LinearDiffOp(1, ((((2,), parse_expression("1 + x**2", 1)),),), 2)
    with pytest.raises(NotImplementedError, match="operator_gram"):
        apply_operator(op, FourierCoeffs.unit(1, 3, 1.0, 1))


@given(st.integers(0, 2 ** 31), st.floats(-3, 3), st.floats(-3, 3))
def test_apply_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    op = LinearDiffOp(2, ((((2, 0), 1.0), ((0, 2), 0.5), ((1, 0), -2.0)),), 2)
    f, h = rand_f(rng, 17, dx=2), rand_f(rng, 17, dx=2)
    lhs = apply_operator(op, a * f + b * h).z
    rhs = a * apply_operator(op, f).z + b * apply_operator(op, h).z
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


def _fd(f, x, alpha, step=1e-3):
    """Central differences of order alpha (|alpha| <= 2)."""
    x = np.atleast_2d(x)
    dx = x.shape[1]
    idx = [j for j, a in enumerate(alpha) for _ in range(a)]
    ev = lambda y: f.evaluate(y, check_domain=False)[:, 0]  # noqa: E731
    if not idx:
        return ev(x)
    if len(idx) == 1:
        e = np.eye(dx)[idx[0]] * step
        return (ev(x + e) - ev(x - e)) / (2 * step)
    i, j = idx
    if i == j:
        e = np.eye(dx)[i] * step
        return (ev(x + e) - 2 * ev(x) + ev(x - e)) / step ** 2
    ei, ej = np.eye(dx)[i] * step, np.eye(dx)[j] * step
    return (ev(x + ei + ej) - ev(x + ei - ej) - ev(x - ei + ej) + ev(x - ei - ej)) / (4 * step * step)


@pytest.mark.parametrize("alpha", [(0,), (1,), (2,), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
def test_finite_difference_oracle(alpha):
    rng = np.random.default_rng(7)
    dx = len(alpha)
    # odd truncations end on a complete cos/sin pair, so odd orders stay in the span
    m = 9 if dx == 1 else 25
    f = rand_f(rng, m, dx=dx)
    op = LinearDiffOp.partial(alpha)
    g = apply_operator(op, f)
    x = rng.uniform(-0.9, 0.9, (50, dx))
    exact = g.evaluate(x)[:, 0]
    approx = _fd(f, x, alpha)
    assert np.linalg.norm(exact - approx) <= 1e-4 * np.linalg.norm(exact)


# ---------------------------------------------------------------- regularizer

def test_kernel_element_has_zero_penalty():
    f = FourierCoeffs(np.array([[0.7, 0, 0, 0, 0]]), 1.0, 1)
    assert regularizer_value(LinearDiffOp.partial((2,)), f) == 0.0
    q = Measure("quadrature", box=(-1.0, 1.0), n_per_axis=40)
    assert regularizer_value(LinearDiffOp.partial((2,)), f, q) == 0.0


def test_identity_regularizer_is_l2():
    rng = np.random.default_rng(8)
    f = rand_f(rng, 12, dx=1)
    assert regularizer_value(LinearDiffOp.identity(1), f) == pytest.approx(l2_norm_sq_lebesgue(f), rel=1e-14)


@pytest.mark.parametrize("dx,m", [(1, 8), (1, 32), (2, 8), (2, 25)])
def test_parseval_vs_quadrature_path(dx, m):
    rng = np.random.default_rng(9)
    f = rand_f(rng, m, dx=dx)
    op = LinearDiffOp.laplacian(dx)
    closed = regularizer_value(op, f)
    quad = regularizer_value(op, f, Measure("quadrature", box=(-2.0, 2.0), n_per_axis=160 if dx == 1 else 48))
    assert abs(closed - quad) <= 1e-8 * closed


# ---------------------------------------------------------------- Gram

def test_identity_gram_is_normalization():
    G = operator_gram(LinearDiffOp.identity(2), 13, 0.9)
    assert np.allclose(G.blocks[0], np.diag(normalization(13, 2, 0.9)), atol=0)


def test_second_derivative_gram_diagonal():
    L = 1.0
    G = operator_gram(LinearDiffOp.partial((2,)), 4, L).blocks[0]
    k = np.array([abs(frequency_index(ell, 1)[0]) for ell in range(1, 5)], dtype=float)
    expected = (math.pi / (2 * L)) ** 4 * k ** 4 * normalization(4, 1, L)
    # an even truncation ends on a cosine; the second derivative keeps it in the span
    assert np.allclose(G, np.diag(expected), rtol=1e-14, atol=1e-12)


@pytest.mark.parametrize("measure", [None, Measure("quadrature", box=(-1.0, 1.0), n_per_axis=80)])
def test_gram_matches_regularizer(measure):
    rng = np.random.default_rng(10)
    op = LinearDiffOp(1, ((((2,), 1.0), ((1,), 0.3), ((0,), -1.0)),), 2)
    G = operator_gram(op, 15, 1.0, measure)
    for _ in range(5):
        f = rand_f(rng, 15)
        assert abs(G.quad_form(f) - regularizer_value(op, f, measure)) <= 1e-8 * max(1.0, G.quad_form(f))


def test_variable_coefficient_gram():
    rng = np.random.default_rng(11)
    op = operator_from_spec('[{"output": 1, "alpha": [2], "coeff": "1 + 0.5*sin(x)"}]', 1, 1)
    assert not op.constant
    meas = Measure("quadrature", box=(-1.0, 1.0), n_per_axis=120)
    G = operator_gram(op, 11, 1.0, meas)
    f = rand_f(rng, 11)
    nodes, w = np.polynomial.legendre.leggauss(120)
    d2 = design_matrix(nodes[:, None], 11, 1.0, alpha=(2,)) @ f.z[0]
    direct = float(np.sum(w * ((1 + 0.5 * np.sin(nodes)) * d2) ** 2))
    assert G.quad_form(f) == pytest.approx(direct, rel=1e-10)


def test_insufficient_nodes():
    with pytest.raises(ValueError, match="too few"):
        operator_gram(LinearDiffOp.partial((2,)), 40, 1.0, Measure("quadrature", n_per_axis=10))


@pytest.mark.parametrize("op", [
    LinearDiffOp.laplacian(1), LinearDiffOp.laplacian(2), LinearDiffOp.identity(2),
    LinearDiffOp.partial((1, 1)), LinearDiffOp(1, ((((1,), 1.0), ((0,), 2.0)),), 1),
])
def test_gram_symmetric_psd(op):
    for measure in (None, Measure("quadrature", n_per_axis=80 if op.dx == 1 else 24)):
        Q = operator_gram(op, 17 if op.dx == 1 else 25, 1.0, measure).full()
        assert np.max(np.abs(Q - Q.T)) <= 1e-12 * max(1.0, np.abs(Q).max())
        assert np.linalg.eigvalsh(Q).min() >= -1e-10 * max(1.0, np.abs(Q).max())


# ---------------------------------------------------------------- ellipticity

def test_laplacian_is_elliptic():
    rep = ellipticity_check(LinearDiffOp.laplacian(2), 200, seed=0)
    assert rep.elliptic and rep.min_abs_symbol == pytest.approx(1.0)


def test_mixed_derivative_not_elliptic():
    rep = ellipticity_check(LinearDiffOp.partial((1, 1)), 200, seed=0)
    assert not rep.elliptic and rep.min_abs_symbol < 1e-9


def test_empty_top_order_not_elliptic():
    op = LinearDiffOp(1, ((((1,), 1.0),),), 2)
    assert not ellipticity_check(op, 10).elliptic


def test_variable_coefficient_ellipticity():
    good = operator_from_spec('[{"output": 1, "alpha": [2], "coeff": "2 + sin(x)"}]', 1, 1)
    bad = operator_from_spec('[{"output": 1, "alpha": [2], "coeff": "x"}]', 1, 1)
    assert ellipticity_check(good, 64).elliptic
    assert not ellipticity_check(bad, 4096).elliptic


# ---------------------------------------------------------------- 2-proper

def test_proper_at_zero():
    z = FourierCoeffs.zeros(1, 5, 1.0, 1)
    rep = proper_regularizer_probe(LinearDiffOp.laplacian(1), z, z, 0.3)
    assert rep.all_ok
    assert regularizer_value(LinearDiffOp.laplacian(1), z) == 0


def test_proper_scaling_equality_at_one():
    rng = np.random.default_rng(12)
    f = rand_f(rng, 9)
    assert proper_regularizer_probe(LinearDiffOp.laplacian(1), f, f, 1.0).scaling_ok


@given(st.integers(0, 2 ** 31), st.floats(0, 1))
def test_proper_property(seed, a):
    rng = np.random.default_rng(seed)
    f, h = rand_f(rng, 9, dx=2), rand_f(rng, 9, dx=2)
    assert proper_regularizer_probe(LinearDiffOp.laplacian(2), f, h, a).all_ok


# ---------------------------------------------------------------- config parsing

def test_operator_presets_and_json():
    assert operator_from_spec("identity", 2, 1).order == 0
    assert operator_from_spec("laplacian", 2, 2).dy == 2
    op = operator_from_spec('[{"output": 2, "alpha": [1, 0], "coeff": 3}]', 2, 2)
    assert op.terms[0] == () and op.terms[1][0][0] == (1, 0)


@pytest.mark.parametrize("spec", ["nonsense", "[]", '[{"output": 3, "alpha": [1]}]', '[{"alpha": [1]}]'])
def test_operator_spec_errors(spec):
    with pytest.raises(ValueError):
        operator_from_spec(spec, 1, 1)


def test_expression_grammar():
    f = parse_expression("2*x1 - cos(pi*x2)**2 / 4 + e", 2)
    x = np.array([[0.5, 0.25]])
    assert f(x)[0] == pytest.approx(1.0 - math.cos(math.pi / 4) ** 2 / 4 + math.e)
    for bad in ("__import__('os')", "x3", "abs(x1)", "x1 if x1 else 0", "'a'"):
        with pytest.raises(ValueError):
            parse_expression(bad, 2)
