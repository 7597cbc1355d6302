from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmrelax import toys
from tmrelax.errors import DimensionMismatch, WrongOrbitKind
from tmrelax.hamiltonian import dense_eigensystem, effective_hamiltonian, eigensystem, eigensystem_path
from tmrelax.observables import (
    AverageMethod,
    AverageReport,
    IntensiveObservable,
    SiteObservable,
    a2_projector,
    closed_form_halting,
    closed_form_halting_padded,
    finite_time_average,
    finite_time_bound,
    infinite_time_average_spectral,
    infinite_time_average_structural,
    orbit_observable_matrix,
    path_weight_matrix,
    reports_to_csv,
    tuned_site_observable,
)
from tmrelax.tm_model import build_composite_machine, build_padded_machine, initial_configuration, orbit


def instance(name, N=8, alpha="1/2", padded=False):
    prog = {**toys.HALTING, **toys.LOOPING}[name]()
    tm = build_padded_machine(prog) if padded else build_composite_machine(prog)
    orb = orbit(tm, initial_configuration(tm, "", N, alpha))
    return tm, orb, IntensiveObservable(a2_projector(tm), N)


def spectral(orb, A):
    return infinite_time_average_spectral(eigensystem(effective_hamiltonian(orb)), orbit_observable_matrix(orb, A))


def test_site_observable_must_be_hermitian():
    with pytest.raises(ValueError):
        SiteObservable(np.array([[0, 1], [0, 0]]), ("a", "b"))
    with pytest.raises(DimensionMismatch):
        SiteObservable(np.eye(3), ("a", "b"))


def test_tuned_site_observable_norm():
    tm = build_composite_machine(toys.two_state())
    s = tuned_site_observable(tm, 0.7, 0.5)
    assert np.linalg.norm(s.matrix, 2) <= max(0.7, 0.5, 1) + 1e-15
    assert s.d == 2 * tm.d
    assert s.entry("a2", "a2") == 0.7 and s.entry("a2'", "a2'") == 0.5


def test_intensive_dense_matches_elements():
    tm = toys.flipper()
    rng = np.random.default_rng(3)
    M = rng.normal(size=(4, 4))
    A = IntensiveObservable(SiteObservable(M + M.T, tm.alphabet), 3)
    dense = A.dense()
    basis = [(x, y, z) for x in tm.alphabet for y in tm.alphabet for z in tm.alphabet]
    for i in rng.integers(0, 64, 20):
        for j in rng.integers(0, 64, 20):
            assert dense[i, j] == pytest.approx(A.element(basis[i], basis[j]), abs=1e-14)


@pytest.mark.parametrize("name", sorted(toys.LOOPING))
def test_looping_average_is_exactly_zero(name):
    _, orb, A = instance(name)
    assert spectral(orb, A) == 0.0
    sd = eigensystem(effective_hamiltonian(orb))
    for tau in (1.0, 37.5, 1e4):
        assert finite_time_average(sd, orbit_observable_matrix(orb, A), tau) == 0.0


@pytest.mark.parametrize("T", [1, 2, 7, 40])
def test_identity_observable_averages_to_one(T):
    sd = eigensystem_path(T)
    assert infinite_time_average_spectral(sd, np.eye(T)) == pytest.approx(1.0, abs=1e-12)


def test_spectral_dimension_check():
    with pytest.raises(DimensionMismatch):
        infinite_time_average_spectral(eigensystem_path(4), np.eye(3))


@pytest.mark.parametrize("name", sorted(toys.HALTING))
@pytest.mark.parametrize("padded", [False, True])
def test_structural_equals_spectral(name, padded):
    _, orb, A = instance(name, padded=padded)
    assert infinite_time_average_structural(orb, A) == pytest.approx(spectral(orb, A), abs=1e-10)


def test_structural_cross_terms_vanish_for_a2_observable():
    _, orb, A = instance("marker_walk")
    M = orbit_observable_matrix(orb, A)
    assert np.count_nonzero(M - np.diag(np.diag(M))) == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), name=st.sampled_from(sorted(toys.HALTING)))
def test_structural_equals_spectral_with_cross_terms(seed, name):
    tm, orb, _ = instance(name, N=6)
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(tm.d, tm.d))
    A = IntensiveObservable(SiteObservable(M + M.T, tm.alphabet), 6)
    assert infinite_time_average_structural(orb, A) == pytest.approx(spectral(orb, A), abs=1e-10)


def test_structural_constant_diagonal():
    tm, orb, _ = instance("two_state")
    A = IntensiveObservable(SiteObservable(0.3 * np.eye(tm.d), tm.alphabet), 8)
    assert infinite_time_average_structural(orb, A) == pytest.approx(0.3, abs=1e-12)


def test_weights_with_constant_cross_terms_do_not_sum_to_one():
    # the +-2 cross weights are negative, so a constant matrix is not reproduced
    T = 7
    W = path_weight_matrix(T)
    assert np.trace(W) == pytest.approx(1.0, abs=1e-12)
    assert W.sum() == pytest.approx(3 / 8, abs=1e-12)
    expect = np.zeros((T, T))
    expect[np.diag_indices(T)] = 1 / (T + 1)
    expect[0, 0] = expect[-1, -1] = 3 / (2 * (T + 1))
    k = np.arange(T - 2)
    expect[k, k + 2] = expect[k + 2, k] = -1 / (2 * (T + 1))
    assert np.allclose(W, expect, atol=1e-12)


def test_structural_needs_path():
    _, orb, A = instance("toggler")
    with pytest.raises(WrongOrbitKind):
        infinite_time_average_structural(orb, A)


def test_closed_form_values():
    assert closed_form_halting(Fraction(1, 2), 10, 9) == pytest.approx(7 / 30, abs=1e-15)
    assert closed_form_halting(1, 5, 8) == 0.0
    assert closed_form_halting("1/4", 10**9, 8) == pytest.approx(3 / 8, abs=1e-8)
    with pytest.raises(ValueError):
        closed_form_halting("1/2", 0, 8)


@settings(max_examples=200, deadline=None)
@given(T_h=st.integers(1, 10_000), N=st.integers(2, 400), k=st.sampled_from([1, 2, 4]))
def test_padded_delta_bounds(T_h, N, k):
    alpha = Fraction(1, k)
    value, delta = closed_form_halting_padded(alpha, T_h, N)
    assert 0 < delta <= 2 / N
    assert value == pytest.approx((1 - float(alpha)) * (1 - delta))
    assert closed_form_halting_padded(1, T_h, N)[0] == 0.0


@settings(max_examples=100, deadline=None)
@given(T_h=st.integers(1, 10_000), N=st.integers(2, 400), k=st.sampled_from([2, 4, 8]))
def test_halting_value_separated_from_zero(T_h, N, k):
    a = 1 / k
    assert closed_form_halting(Fraction(1, k), T_h, N) >= (1 - a) / 2 * (1 - 2 / (N + 3)) - 1e-15 > 0


def test_finite_time_converges_to_infinite():
    _, orb, A = instance("two_state")
    sd = eigensystem(effective_hamiltonian(orb))
    M = orbit_observable_matrix(orb, A)
    tau = 1e6 * orb.T**2
    assert finite_time_average(sd, M, tau) == pytest.approx(infinite_time_average_spectral(sd, M), abs=1e-6)


def test_finite_time_independent_of_tau_when_diagonal_in_eigenbasis():
    sd = eigensystem_path(9)
    V = sd.eigenvectors
    M = V @ np.diag(np.linspace(0, 1, 9)) @ V.conj().T
    vals = [finite_time_average(sd, M, tau) for tau in (0.1, 3.0, 1e5)]
    assert np.ptp(vals) <= 1e-12


@pytest.mark.parametrize("name", sorted(toys.HALTING))
def test_finite_time_deviation_below_bound(name):
    _, orb, A = instance(name)
    sd = eigensystem(effective_hamiltonian(orb))
    M = orbit_observable_matrix(orb, A)
    exact = infinite_time_average_spectral(sd, M)
    norm = float(np.linalg.norm(M, 2))
    for tau in np.geomspace(1, 1e6, 25):
        assert abs(finite_time_average(sd, M, tau) - exact) <= finite_time_bound(orb.T, tau, norm)


def test_finite_time_bound_scaling():
    assert finite_time_bound(10, np.inf, 1.0) == 0.0
    assert finite_time_bound(10, 2.0, 1.0) == pytest.approx(finite_time_bound(10, 1.0, 1.0) / 2)
    with pytest.raises(ValueError):
        finite_time_bound(10, 0.0, 1.0)


def test_dense_and_analytic_spectra_give_same_average():
    _, orb, A = instance("marker_walk")
    M = orbit_observable_matrix(orb, A)
    a = infinite_time_average_spectral(eigensystem(effective_hamiltonian(orb)), M)
    b = infinite_time_average_spectral(dense_eigensystem(effective_hamiltonian(orb).matrix), M)
    assert a == pytest.approx(b, abs=1e-10)


def test_report_csv():
    text = reports_to_csv([AverageReport(0.25, AverageMethod.FINITE_TIME, 1e-3, 10.0, "x")])
    assert text.splitlines() == ["instance,method,tau,value,bound", "x,finite_time,10.0,0.25,0.001"]
