import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from tmrelax import toys
from tmrelax.errors import BudgetExceeded, DimensionMismatch
from tmrelax.hamiltonian import (
    LocalHamiltonian,
    apply_to_basis_state,
    build_tuned_hamiltonian,
    compile_hamiltonian,
    cycle_adjacency,
    dense_eigensystem,
    dense_hamiltonian,
    effective_hamiltonian,
    eigensystem_cycle,
    eigensystem_path,
    export_hamiltonian,
    global_swap,
    import_hamiltonian,
    leakage_from_orbit,
    min_gap_path,
    path_adjacency,
    path_gaps,
    primed_projector,
    restrict_to_orbit,
    sparse_hamiltonian,
    swap_operator,
)
from tmrelax.tm_model import (
    OrbitKind,
    ReversibleTM,
    build_composite_machine,
    build_padded_machine,
    compile_program,
    initial_configuration,
    make_config,
    orbit,
)


def small_machines():
    return [toys.flipper(), toys.right_mover(), compile_program(toys.toggler())]


def test_empty_rule_set_gives_zero_hamiltonian():
    tm = ReversibleTM(("q",), ("0",), (), (), "q", "0")
    H = sparse_hamiltonian(compile_hamiltonian(tm, 3))
    assert H.nnz == 0


def test_ring_of_one_site_is_rejected():
    with pytest.raises(ValueError):
        compile_hamiltonian(toys.flipper(), 1)


def test_dense_budget():
    h = compile_hamiltonian(build_composite_machine(toys.two_state()), 4)
    with pytest.raises(BudgetExceeded):
        dense_hamiltonian(h)
    assert dense_hamiltonian(compile_hamiltonian(toys.flipper(), 4)).shape == (256, 256)


def test_local_hamiltonian_checks_shapes():
    with pytest.raises(DimensionMismatch):
        LocalHamiltonian(2, 3, (((0, 1), sp.identity(4, format="csr")),))


def start_config(tm, N):
    if tm.a_symbols:
        return initial_configuration(tm, "", N, "1/2")
    return make_config(tm, [tm.initial] + [tm.blank] * (N - 1))


@pytest.mark.parametrize("tm", small_machines(), ids=lambda t: t.name or "compiled")
def test_dense_matches_orbit_restriction(tm):
    N = 4
    h = compile_hamiltonian(tm, N)
    H = dense_hamiltonian(h)
    orb = orbit(tm, start_config(tm, N))
    idx = [h.index(c.sites) for c in orb.configs]
    eff = effective_hamiltonian(orb).matrix
    assert np.array_equal(H[np.ix_(idx, idx)].real, eff)
    assert np.array_equal(restrict_to_orbit(h, orb).real, eff)
    assert leakage_from_orbit(h, orb) == 0


def test_h_moves_interior_orbit_states_to_neighbours():
    tm = build_composite_machine(toys.marker_walk())
    N = 8
    h = compile_hamiltonian(tm, N)
    orb = orbit(tm, initial_configuration(tm, "", N, "1/2"))
    for k in range(1, orb.T - 1):
        out = apply_to_basis_state(h, orb.configs[k].sites)
        assert out == {orb.configs[k - 1].sites: 1, orb.configs[k + 1].sites: 1}


def test_cyclic_shift_is_a_symmetry():
    h = compile_hamiltonian(toys.flipper(), 4)
    H = dense_hamiltonian(h)
    d, N = h.d, h.N
    perm = np.zeros(d**N, dtype=int)
    for idx in range(d**N):
        digs = [int(x) for x in np.base_repr(idx, d).zfill(N)]
        rolled = digs[1:] + digs[:1]
        perm[idx] = int("".join(map(str, rolled)), d)
    P = np.eye(d**N)[perm]
    assert np.array_equal(P @ H @ P.T, H)


def test_effective_small_cases():
    from tmrelax.tm_model import Orbit, TMConfig

    cfg = lambda k: TMConfig((str(k),), 0)
    path = effective_hamiltonian(Orbit((cfg(0), cfg(1)), OrbitKind.PATH))
    assert np.array_equal(path.matrix, [[0, 1], [1, 0]])
    cyc = effective_hamiltonian(Orbit((cfg(0), cfg(1), cfg(2)), OrbitKind.CYCLE))
    assert np.array_equal(cyc.matrix, np.ones((3, 3)) - np.eye(3))


def test_path_spectrum_small():
    assert np.allclose(eigensystem_path(3).eigenvalues, [-np.sqrt(2), 0, np.sqrt(2)], atol=1e-15)
    assert np.allclose(eigensystem_path(1).eigenvalues, [0.0], atol=1e-15)


def test_cycle_spectrum_small():
    assert np.allclose(np.sort(eigensystem_cycle(4).eigenvalues), [-2, 0, 0, 2], atol=1e-15)
    assert np.allclose(np.sort(eigensystem_cycle(3).eigenvalues), [-1, -1, 2], atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(T=st.integers(1, 300))
def test_path_eigenpairs(T):
    sd = eigensystem_path(T)
    A = path_adjacency(T)
    V = sd.eigenvectors
    assert np.abs(A @ V - V * sd.eigenvalues).max() <= 1e-10
    assert np.abs(V.conj().T @ V - np.eye(T)).max() <= 1e-12
    assert abs(np.sum(np.abs(sd.coefficients) ** 2) - 1) <= 1e-12
    assert np.all(np.diff(sd.eigenvalues) > 0)


@settings(max_examples=40, deadline=None)
@given(T=st.integers(3, 300))
def test_cycle_eigenpairs(T):
    sd = eigensystem_cycle(T)
    A = cycle_adjacency(T)
    V = sd.eigenvectors
    assert np.abs(A @ V - V * sd.eigenvalues).max() <= 1e-10
    assert np.abs(V.conj().T @ V - np.eye(T)).max() <= 1e-12
    for g in sd.groups:
        assert len(g) <= 2
        assert np.ptp(sd.eigenvalues[list(g)]) <= 1e-9


@pytest.mark.parametrize("T", [50, 60])
def test_analytic_vs_dense(T):
    assert np.abs(eigensystem_path(T).eigenvalues - np.linalg.eigvalsh(path_adjacency(T))).max() <= 1e-10
    assert np.abs(np.sort(eigensystem_cycle(T).eigenvalues) - np.linalg.eigvalsh(cycle_adjacency(T))).max() <= 1e-10


def test_min_gap_t3():
    assert min_gap_path(3) == pytest.approx(np.sqrt(2), abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(T=st.integers(2, 3000))
def test_min_gap_bound(T):
    assert min_gap_path(T) >= np.pi**2 / (4 * (T + 1) ** 2)


def test_min_gap_brute_force_t1000():
    lam = np.sort(eigensystem_path(1000).eigenvalues)
    assert min_gap_path(1000) == pytest.approx(np.diff(lam).min(), rel=1e-9)
    assert np.allclose(path_gaps(1000), np.abs(np.diff(lam[::-1])), atol=1e-12)


def test_dense_eigensystem_phase_convention():
    sd = dense_eigensystem(path_adjacency(6))
    V = sd.eigenvectors
    for c in range(6):
        first = V[np.flatnonzero(np.abs(V[:, c]) > 1e-12)[0], c]
        assert abs(first.imag) < 1e-15 and first.real > 0
    assert np.all(np.diff(sd.eigenvalues) >= 0)


def test_swap_and_primed_projector():
    F = swap_operator(3)
    assert np.array_equal(F @ F, np.eye(6))
    P = primed_projector(3)
    assert np.array_equal(F @ P @ F, np.eye(6) - P)


@pytest.mark.parametrize("tm", [toys.flipper(), toys.right_mover()], ids=["flipper", "right_mover"])
def test_tuned_hamiltonian_commutes_and_holds_two_copies(tm):
    N = 3
    h = compile_hamiltonian(tm, N)
    tu = build_tuned_hamiltonian(h)
    H = sparse_hamiltonian(tu.doubled)
    F = global_swap(N, h.d)
    comm = (F @ H - H @ F).toarray()
    assert np.abs(comm).max() <= 1e-12
    assert np.array_equal((F @ F).toarray(), np.eye(F.shape[0]))
    # the all-unprimed and all-primed sectors each carry an exact copy of H
    base = dense_hamiltonian(h)
    digits = np.indices((h.d,) * N).reshape(N, -1).T
    D = 2 * h.d
    plain = (digits * D ** np.arange(N)[::-1]).sum(axis=1)
    primed = ((digits + h.d) * D ** np.arange(N)[::-1]).sum(axis=1)
    Hd = H.toarray()
    assert np.array_equal(Hd[np.ix_(plain, plain)], base)
    assert np.array_equal(Hd[np.ix_(primed, primed)], base)
    lam = np.linalg.eigvalsh(Hd)
    for v in np.linalg.eigvalsh(base):
        assert np.sum(np.abs(lam - v) < 1e-9) >= 2 * np.sum(np.abs(np.linalg.eigvalsh(base) - v) < 1e-9)


def test_tuned_from_zero_base():
    tm = ReversibleTM(("q",), ("0",), (), (), "q", "0")
    tu = build_tuned_hamiltonian(compile_hamiltonian(tm, 2))
    assert sparse_hamiltonian(tu.doubled).nnz == 0
    assert np.array_equal(tu.F_local @ tu.F_local.conj().T, np.eye(tu.d))


def test_padded_leakage_is_zero():
    tm = build_padded_machine(toys.two_state())
    h = compile_hamiltonian(tm, 6)
    orb = orbit(tm, initial_configuration(tm, "", 6, "1/2"))
    assert leakage_from_orbit(h, orb) == 0
    assert np.array_equal(restrict_to_orbit(h, orb).real, effective_hamiltonian(orb).matrix)


def test_export_round_trip():
    h = compile_hamiltonian(build_composite_machine(toys.two_state()), 5)
    back = import_hamiltonian(export_hamiltonian(h))
    assert back.N == h.N and back.d == h.d and back.basis == h.basis
    assert (sparse_hamiltonian(back) != sparse_hamiltonian(h)).nnz == 0
