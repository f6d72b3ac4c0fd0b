import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physreg.fourier import (
    FourierCoeffs,
    basis_eval,
    design_matrix,
    frequency_index,
    index_of,
    l2_norm_sq_lebesgue,
    l2_norm_sq_trajectory,
    load_coeffs,
    normalization,
    project_function,
    save_coeffs,
    sobolev_norm_sq,
)
from physreg.quadrature import tensor_gauss_legendre


def coeffs(draw_z, L=1.0, dx=1):
    return FourierCoeffs(np.atleast_2d(draw_z), L, dx)


# ---------------------------------------------------------------- index map

def test_zero_frequency_first():
    assert tuple(frequency_index(1, 2)) == (0, 0)


def test_first_shell_dx1():
    assert tuple(frequency_index(2, 1)) == (1,)
    assert tuple(frequency_index(3, 1)) == (-1,)


@pytest.mark.parametrize("dx", [1, 2, 3])
def test_round_trip_first_thousand(dx):
    for ell in range(1, 1001):
        assert index_of(frequency_index(ell, dx)) == ell


@pytest.mark.parametrize("dx", [1, 2, 3])
def test_bijective_and_shell_monotone(dx):
    seen = set()
    prev = 0
    for ell in range(1, 10_001):
        k = tuple(int(v) for v in frequency_index(ell, dx))
        assert k not in seen
        seen.add(k)
        shell = max((abs(c) for c in k), default=0)
        assert shell >= prev
        prev = shell
        assert index_of(k) == ell


def test_pairs_are_adjacent():
    for ell in range(2, 200, 2):
        k = frequency_index(ell, 2)
        assert np.array_equal(frequency_index(ell + 1, 2), -k)


# ---------------------------------------------------------------- evaluation

def test_constant_basis_is_one():
    x = np.random.default_rng(0).uniform(-1, 1, (7, 2))
    assert np.all(basis_eval(1, x, 1.0) == 1.0)


def test_cosine_member_at_origin():
    assert basis_eval(2, np.array([0.0]), 1.0) == pytest.approx(1.0)


def test_outside_cube_rejected():
    with pytest.raises(ValueError):
        basis_eval(2, np.array([1.5]), 1.0)


@pytest.mark.parametrize("dx,m", [(1, 12), (2, 25)])
def test_orthogonality_on_medium_cube(dx, m):
    L = 0.7
    nodes, w = tensor_gauss_legendre(40, -2 * L, 2 * L, dx)
    Phi = design_matrix(nodes, m, L, check_domain=False)
    gram = Phi.T @ (w[:, None] * Phi)
    assert np.allclose(gram, np.diag(normalization(m, dx, L)), atol=1e-10)


def test_superposition():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 9))
    x = rng.uniform(-1, 1, 11)
    fa, fb = coeffs(a), coeffs(b)
    lhs = (2.0 * fa + fb * -3.0).evaluate(x)
    assert np.allclose(lhs, 2 * fa.evaluate(x) - 3 * fb.evaluate(x))


def test_invalid_coefficients():
    with pytest.raises(ValueError):
        FourierCoeffs(np.array([[np.nan]]), 1.0, 1)
    with pytest.raises(ValueError):
        FourierCoeffs(np.ones((1, 3)), -1.0, 1)


# ---------------------------------------------------------------- norms

def test_sobolev_examples():
    assert sobolev_norm_sq(FourierCoeffs.unit(1, 5, 1.0, 1), 2) == 1.0
    assert sobolev_norm_sq(FourierCoeffs.zeros(1, 5, 1.0, 1), 2) == 0.0
    assert sobolev_norm_sq(FourierCoeffs.unit(2, 5, 1.0, 1), 2) == 16.0


def test_sobolev_warns_below_threshold():
    with pytest.warns(UserWarning):
        sobolev_norm_sq(FourierCoeffs.unit(1, 5, 1.0, 2), 3)


def test_lebesgue_examples():
    L = 0.5
    assert l2_norm_sq_lebesgue(FourierCoeffs.zeros(1, 4, L, 1)) == 0.0
    norm = normalization(4, 1, L)
    for ell in range(1, 5):
        assert l2_norm_sq_lebesgue(FourierCoeffs.unit(ell, 4, L, 1)) == norm[ell - 1]


def test_parseval_m16_dx1():
    rng = np.random.default_rng(2)
    f = coeffs(rng.normal(size=16))
    nodes, w = tensor_gauss_legendre(64, -2.0, 2.0, 1)
    quad = float(np.sum(w * f.evaluate(nodes, check_domain=False)[:, 0] ** 2))
    assert abs(l2_norm_sq_lebesgue(f) - quad) <= 1e-10 * quad


@given(st.integers(1, 64), st.integers(1, 2), st.integers(0, 2 ** 31))
def test_parseval_property(m, dx, seed):
    rng = np.random.default_rng(seed)
    L = 1.3
    f = FourierCoeffs(rng.normal(size=(2, m)), L, dx)
    # the oracle must resolve products up to frequency m/2 in each axis
    n = 64 + 2 * m if dx == 1 else 40
    nodes, w = tensor_gauss_legendre(n, -2 * L, 2 * L, dx)
    quad = float(np.sum(w[:, None] * f.evaluate(nodes, check_domain=False) ** 2))
    assert abs(l2_norm_sq_lebesgue(f) - quad) <= 1e-8 * quad


@given(st.integers(1, 40), st.integers(1, 3), st.floats(0.1, 10), st.integers(0, 2 ** 31))
def test_norm_nesting_and_homogeneity(m, dx, a, seed):
    rng = np.random.default_rng(seed)
    f = FourierCoeffs(rng.normal(size=(2, m)), 1.0, dx)
    s = 2 * dx
    vol = (4.0 ** dx)
    assert l2_norm_sq_lebesgue(f) <= sobolev_norm_sq(f, s) * vol * (1 + 1e-12)
    assert l2_norm_sq_lebesgue(a * f) == pytest.approx(a * a * l2_norm_sq_lebesgue(f), rel=1e-12)
    assert sobolev_norm_sq(a * f, s) == pytest.approx(a * a * sobolev_norm_sq(f, s), rel=1e-12)


@given(st.integers(1, 30), st.integers(2, 4), st.integers(0, 2 ** 31))
def test_direct_sum_additivity(m, dy, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(dy, m))
    f = FourierCoeffs(z, 1.0, 1)
    parts = [FourierCoeffs(z[i:i + 1], 1.0, 1) for i in range(dy)]
    assert l2_norm_sq_lebesgue(f) == pytest.approx(sum(map(l2_norm_sq_lebesgue, parts)), rel=1e-12)
    assert sobolev_norm_sq(f, 2) == pytest.approx(sum(sobolev_norm_sq(p, 2) for p in parts), rel=1e-12)


def test_trajectory_norm_examples():
    rng = np.random.default_rng(3)
    f = coeffs(rng.normal(size=7))
    trajs = [rng.uniform(-1, 1, (10, 1)) for _ in range(4)]
    assert l2_norm_sq_trajectory(f, f, trajs) == 0.0
    g = FourierCoeffs(f.z - np.array([[0.3, 0, 0, 0, 0, 0, 0]]), 1.0, 1)
    assert l2_norm_sq_trajectory(f, g, trajs) == pytest.approx(0.09, rel=1e-12)
    with pytest.raises(ValueError):
        l2_norm_sq_trajectory(f, g, [])


def test_trajectory_norm_uniform_cosine():
    # cos(pi x / 2)^2 has mean 1/2 under the uniform law on [-1, 1]
    rng = np.random.default_rng(4)
    f = FourierCoeffs.unit(2, 3, 1.0, 1)
    g = FourierCoeffs.zeros(1, 3, 1.0, 1)
    n, T = 400, 50
    trajs = [rng.uniform(-1, 1, (T, 1)) for _ in range(n)]
    est = l2_norm_sq_trajectory(f, g, trajs)
    vals = np.cos(np.pi * np.vstack(trajs)[:, 0] / 2) ** 2
    se = vals.std() / math.sqrt(vals.size)
    assert abs(est - 0.5) <= 3 * se


# ---------------------------------------------------------------- projection

def test_projection_of_basis_element():
    f = project_function(lambda x: basis_eval(3, x, 1.0), 6, 1.0, 1)
    assert np.allclose(f.z, np.eye(6)[2:3], atol=1e-12)


@pytest.mark.parametrize("dx", [1, 2])
def test_projection_recovers_every_basis_function(dx):
    m = 9
    for ell in range(1, m + 1):
        f = project_function(lambda x: basis_eval(ell, x, 1.0), m, 1.0, dx)
        assert np.allclose(f.z[0], np.eye(m)[ell - 1], atol=1e-10)


def test_projection_of_zero_and_odd_function():
    assert np.all(project_function(lambda x: np.zeros(len(x)), 5, 1.0, 1).z == 0)
    f = project_function(lambda x: 0.5 * x[:, 0], 1, 1.0, 1)
    assert abs(f.z[0, 0]) < 1e-15


def test_projection_singular_gram():
    with pytest.raises(ValueError):
        project_function(lambda x: x[:, 0], 20, 1.0, 1, n_per_axis=10)


# ---------------------------------------------------------------- CSV

def test_coefficient_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    f = FourierCoeffs(rng.normal(size=(2, 5)), 0.75, 2)
    p = tmp_path / "c.csv"
    save_coeffs(f, p)
    g = load_coeffs(p)
    assert np.array_equal(f.z, g.z) and (g.L, g.dx) == (0.75, 2)
    assert p.read_text().splitlines()[0] == "2,5,2,0.75"


def test_coefficient_csv_malformed(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,3,1,1.0\n1,2\n")
    with pytest.raises(ValueError):
        load_coeffs(p)
