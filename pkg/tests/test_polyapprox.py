from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import chebyshev as C
from scipy.special import ive

from tmrelax.errors import SpectrumOutOfRange
from tmrelax.polyapprox import (
    certification_grid,
    constant_one,
    degree_ratio_gauss,
    degree_ratio_sqrt,
    evaluate,
    exp_tail_bound,
    export_polynomial,
    gaussian_poly,
    identity_poly,
    import_polynomial,
    matrix_apply,
    rescale_half,
    sqrt_poly,
    sqrt_tail_bound,
    sup_bound,
    unscale,
)


def random_hermitian(n, seed, radius=1.0):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    M = M + M.conj().T
    return radius * M / np.linalg.norm(M, 2)


@settings(max_examples=40, deadline=None)
@given(eps=st.floats(1e-9, 0.5), sign=st.sampled_from([1, -1]))
def test_sqrt_poly_certified(eps, sign):
    p = sqrt_poly(eps, sign)
    x = np.linspace(-1, 1, 3001)
    assert np.abs(p(x) - np.sqrt(1 + sign * x / 2)).max() <= eps
    assert p.grid_error <= eps


@settings(max_examples=40, deadline=None)
@given(w=st.floats(0.1, 3.0), eps=st.floats(1e-8, 0.5))
def test_gaussian_poly_certified(w, eps):
    p = gaussian_poly(w, eps)
    x = np.linspace(-1, 1, 3001)
    assert np.abs(p(x) - np.exp(-np.pi * x**2 / (2 * w**2))).max() <= eps
    # even target, so only even Chebyshev terms
    assert np.all(p.coefficients[1::2] == 0)


@pytest.mark.parametrize("w", [1.0, 0.5, 0.25])
def test_gaussian_coefficients_match_interpolation(w):
    # independent oracle: high-degree Chebyshev interpolation of the target
    p = gaussian_poly(w, 1e-6)
    ref = C.chebinterpolate(lambda x: np.exp(-np.pi * x**2 / (2 * w**2)), 120)
    assert np.abs(p.coefficients - ref[: p.degree + 1]).max() <= 1e-12


def test_sqrt_coefficients_match_interpolation():
    p = sqrt_poly(1e-6)
    ref = C.chebinterpolate(lambda x: np.sqrt(1 + x / 2), 80)
    # truncating the monomial series differs from truncating the Chebyshev one by the tail
    assert np.abs(p.coefficients - ref[: p.degree + 1]).max() <= sqrt_tail_bound(p.params["K"])


@pytest.mark.parametrize("K", [0, 1, 3, 8, 15])
def test_sqrt_tail_bound_holds(K):
    x = np.linspace(-1, 1, 2001)
    mono = np.array([comb(2 * k, k) / (1 - 2 * k) * (-1 / 8) ** k for k in range(K + 1)])
    err = np.abs(np.polynomial.polynomial.polyval(x, mono) - np.sqrt(1 + x / 2)).max()
    assert err <= sqrt_tail_bound(K)


@pytest.mark.parametrize("z", [0.1, 1.0, 6.0, 25.0])
@pytest.mark.parametrize("K", [0, 2, 10])
def test_exp_tail_bound_dominates_bessel_tail(z, K):
    k = np.arange(K + 1, K + 400)
    tail = 2 * ive(k, z).sum()
    assert tail <= exp_tail_bound(z, K) * (1 + 1e-12)


def test_degree_grows_as_eps_shrinks():
    sq = [sqrt_poly(e).degree for e in (1e-2, 1e-4, 1e-6)]
    assert sq == sorted(sq) and sq[0] < sq[-1]
    degs = [gaussian_poly(0.5, e).degree for e in (1e-2, 1e-3, 1e-4)]
    assert degs == sorted(degs) and degs[0] < degs[-1]
    assert gaussian_poly(0.25, 1e-3).degree > gaussian_poly(1.0, 1e-3).degree


def test_degree_ratios_frozen():
    for e in (1e-2, 1e-4, 1e-6):
        assert degree_ratio_sqrt(sqrt_poly(e)) <= 1.5
    for w in (1.0, 0.5, 0.25):
        for e in (1e-2, 1e-3, 1e-4):
            assert degree_ratio_gauss(gaussian_poly(w, e)) <= 5.0


def test_bad_arguments():
    for bad in (0.0, 0.6, -1.0):
        with pytest.raises(ValueError):
            sqrt_poly(bad)
    with pytest.raises(ValueError):
        gaussian_poly(0.0, 0.1)
    with pytest.raises(ValueError):
        gaussian_poly(1.0, 2.0)


@pytest.mark.parametrize("make", [lambda: sqrt_poly(1e-4), lambda: gaussian_poly(0.3, 1e-4)])
def test_sup_bound_dominates_fine_grid(make):
    p = make()
    fine = np.abs(evaluate(p, np.linspace(-1, 1, 400_001))).max()
    assert sup_bound(p) >= fine


def test_rescale_half_and_unscale():
    p = sqrt_poly(1e-4)
    q = rescale_half(p)
    assert sup_bound(q) <= 0.5 + 1e-15
    x = certification_grid()
    assert np.abs(q(x) - q.target_value(x)).max() <= q.eps
    back = unscale(q)
    assert np.allclose(back.coefficients, p.coefficients, atol=1e-15) and back.scale == 1.0
    with pytest.raises(ValueError):
        rescale_half(p, scale=1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
def test_matrix_apply_recurrence_matches_eigen(seed, n):
    M = random_hermitian(n, seed, 0.95)
    for p in (sqrt_poly(1e-5), gaussian_poly(0.4, 1e-5), identity_poly(), constant_one()):
        a = matrix_apply(p, M)
        b = matrix_apply(p, M, method="eigen")
        assert np.abs(a - b).max() <= 1e-10
    assert np.allclose(matrix_apply(identity_poly(), M), M, atol=1e-14)


def test_matrix_apply_approximates_matrix_function():
    M = random_hermitian(5, 7, 1.0)
    lam, V = np.linalg.eigh(M)
    exact = (V * np.sqrt(1 + lam / 2)) @ V.conj().T
    assert np.linalg.norm(matrix_apply(sqrt_poly(1e-6), M) - exact, 2) <= 1e-6


def test_matrix_apply_rejects_bad_input():
    with pytest.raises(SpectrumOutOfRange):
        matrix_apply(sqrt_poly(0.1), 2 * np.eye(2))
    with pytest.raises(ValueError):
        matrix_apply(sqrt_poly(0.1), np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        matrix_apply(sqrt_poly(0.1), np.eye(2), method="magic")


@pytest.mark.parametrize("make", [lambda: rescale_half(sqrt_poly(1e-3, -1)), lambda: gaussian_poly(0.5, 1e-3)])
def test_export_round_trip(make):
    p = make()
    q = import_polynomial(export_polynomial(p))
    assert np.array_equal(q.coefficients, p.coefficients)
    assert (q.target, q.eps, q.grid_error, q.scale) == (p.target, p.eps, p.grid_error, p.scale)
    assert q.params == p.params
