"""Ring Hamiltonians compiled from machines, plus path/cycle spectra.

Each rule ``(a, b) -> (c, d)`` contributes ``|cd><ab| + |ab><cd|`` on every
ordered neighbour pair ``(i, i+1 mod N)``.  Basis states of the ring are
indexed with site 0 as the most significant digit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BudgetExceeded, DimensionMismatch, NotReversible
from .tm_model import Orbit, OrbitKind, ReversibleTM, validate_reversibility

DEFAULT_BUDGET = 20_000
TOL_CONSTRUCTION = 1e-12
TOL_NUMERIC = 1e-10
TOL_PHYSICS = 1e-8


@dataclass(frozen=True)
class LocalHamiltonian:
    N: int
    d: int
    terms: tuple[tuple[tuple[int, int], sp.csr_matrix], ...]
    basis: tuple[str, ...] = ()
    translation_invariant: bool = True

    def __post_init__(self):
        for (i, j), m in self.terms:
            if m.shape != (self.d**2, self.d**2):
                raise DimensionMismatch(f"term on {(i, j)} has shape {m.shape}")
            diff = m - m.getH()
            if diff.nnz and abs(diff).max() > TOL_CONSTRUCTION:
                raise ValueError(f"term on {(i, j)} is not Hermitian")
        if self.translation_invariant and self.terms:
            first = self.terms[0][1]
            for _, m in self.terms[1:]:
                if (first != m).nnz:
                    raise ValueError("terms differ although translation invariance is flagged")

    def index(self, sites) -> int:
        """Basis index of a configuration given by site names or digits."""
        lookup = {name: k for k, name in enumerate(self.basis)}
        idx = 0
        for s in sites:
            idx = idx * self.d + (lookup[s] if isinstance(s, str) else int(s))
        return idx


@dataclass(frozen=True)
class EffectiveHamiltonian:
    T: int
    kind: OrbitKind
    matrix: np.ndarray


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    coefficients: np.ndarray
    groups: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class TunedHamiltonian:
    base: LocalHamiltonian
    doubled: LocalHamiltonian
    F_local: np.ndarray

    @property
    def d(self) -> int:
        return self.doubled.d


# ---------------------------------------------------------------- compilation


def two_site_term(tm: ReversibleTM) -> sp.csr_matrix:
    """The d^2 x d^2 operator sum over rules of U + U^dagger."""
    d = tm.d
    pos = {x: k for k, x in enumerate(tm.alphabet)}
    rows, cols = [], []
    for r in tm.rules:
        src = pos[r.lhs[0]] * d + pos[r.lhs[1]]
        dst = pos[r.rhs[0]] * d + pos[r.rhs[1]]
        rows += [dst, src]
        cols += [src, dst]
    m = sp.coo_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(d * d, d * d))
    return m.tocsr()


def compile_hamiltonian(tm: ReversibleTM, N: int) -> LocalHamiltonian:
    diags = validate_reversibility(tm)
    if diags:
        raise NotReversible("; ".join(diags[:5]))
    if N < 2:
        raise ValueError("a 2-local ring needs N >= 2")
    term = two_site_term(tm)
    pairs = [(i, (i + 1) % N) for i in range(N)]
    return LocalHamiltonian(N, tm.d, tuple((p, term) for p in pairs), tm.alphabet, True)


def local_dimension(tm: ReversibleTM) -> int:
    """Number of local basis states the compiled machine actually uses."""
    return tm.d


# ---------------------------------------------------------------- assembly


def _digits(N: int, d: int) -> np.ndarray:
    idx = np.arange(d**N)
    out = np.empty((d**N, N), dtype=np.int64)
    for k in range(N - 1, -1, -1):
        out[:, k] = idx % d
        idx = idx // d
    return out


def sparse_hamiltonian(h: LocalHamiltonian, budget: int | None = None) -> sp.csr_matrix:
    if h.N < 2:
        raise ValueError("a 2-local ring needs N >= 2")
    dim = h.d**h.N
    if budget is not None and dim > budget:
        raise BudgetExceeded(f"d^N = {dim} exceeds budget {budget}")
    digits = _digits(h.N, h.d)
    weights = h.d ** np.arange(h.N - 1, -1, -1)
    base = np.arange(dim)
    rows, cols, vals = [], [], []
    for (i, j), term in h.terms:
        t = _csc(term)
        code = digits[:, i] * h.d + digits[:, j]
        start, count = t.indptr[code], np.diff(t.indptr)[code]
        src = np.repeat(base, count)
        ptr = np.repeat(start - np.cumsum(count) + count, count) + np.arange(count.sum())
        x, y = np.divmod(t.indices[ptr], h.d)
        a, b = np.divmod(code[src], h.d)
        rows.append(src + (x - a) * weights[i] + (y - b) * weights[j])
        cols.append(src)
        vals.append(t.data[ptr])
    if not rows:
        return sp.csr_matrix((dim, dim), dtype=complex)
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    return m.tocsr()


def dense_hamiltonian(h: LocalHamiltonian, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Full matrix for brute-force checks; refuses d^N above ``budget``."""
    m = sparse_hamiltonian(h, budget).toarray()
    assert np.abs(m - m.conj().T).max() <= TOL_CONSTRUCTION
    return m


_CSC_CACHE: dict[int, tuple] = {}


def _csc(term: sp.csr_matrix) -> sp.csc_matrix:
    key = id(term)
    hit = _CSC_CACHE.get(key)
    if hit is None or hit[0] is not term:
        hit = (term, term.tocsc())
        _CSC_CACHE[key] = hit
    return hit[1]


def apply_to_basis_state(h: LocalHamiltonian, sites) -> dict[tuple, complex]:
    """H|sites> as a dictionary over basis configurations (no d^N storage)."""
    pos = {x: k for k, x in enumerate(h.basis)}
    digs = [pos[s] if isinstance(s, str) else int(s) for s in sites]
    out: dict[tuple, complex] = {}
    for (i, j), term in h.terms:
        col = digs[i] * h.d + digs[j]
        csc = _csc(term)
        for ptr in range(csc.indptr[col], csc.indptr[col + 1]):
            r = csc.indices[ptr]
            new = list(digs)
            new[i], new[j] = divmod(int(r), h.d)
            key = tuple(h.basis[k] for k in new) if h.basis else tuple(new)
            out[key] = out.get(key, 0) + csc.data[ptr]
    return {k: v for k, v in out.items() if v != 0}


def restrict_to_orbit(h: LocalHamiltonian, orb: Orbit) -> np.ndarray:
    """Matrix of H in the orbit basis {|w_k>}."""
    where = {c.sites: k for k, c in enumerate(orb.configs)}
    out = np.zeros((orb.T, orb.T), dtype=complex)
    for k, c in enumerate(orb.configs):
        for key, amp in apply_to_basis_state(h, c.sites).items():
            if key in where:
                out[where[key], k] += amp
    return out


def leakage_from_orbit(h: LocalHamiltonian, orb: Orbit) -> float:
    """Total amplitude H sends outside span{|w_k>}; zero for a closed orbit."""
    where = {c.sites for c in orb.configs}
    leak = 0.0
    for c in orb.configs:
        for key, amp in apply_to_basis_state(h, c.sites).items():
            if key not in where:
                leak += abs(amp)
    return leak


# ---------------------------------------------------------------- orbits


def effective_hamiltonian(orb: Orbit) -> EffectiveHamiltonian:
    T = orb.T
    shift = np.zeros((T, T))
    for k in range(T - 1):
        shift[k + 1, k] = 1.0
    if orb.kind is OrbitKind.CYCLE:
        shift[0, T - 1] += 1.0
    return EffectiveHamiltonian(T, orb.kind, shift + shift.T)


def path_adjacency(T: int) -> np.ndarray:
    m = np.zeros((T, T))
    k = np.arange(T - 1)
    m[k, k + 1] = m[k + 1, k] = 1.0
    return m


def cycle_adjacency(T: int) -> np.ndarray:
    m = path_adjacency(T)
    m[0, T - 1] += 1.0
    m[T - 1, 0] += 1.0
    return m


def _group(values: np.ndarray, tol: float) -> tuple[tuple[int, ...], ...]:
    groups: list[list[int]] = []
    for k, v in enumerate(values):
        if groups and abs(values[groups[-1][0]] - v) <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    return tuple(tuple(g) for g in groups)


def path_energies(T: int) -> np.ndarray:
    """2 cos(j pi/(T+1)), j = T..1, i.e. ascending."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return 2 * np.cos(np.arange(T, 0, -1) * np.pi / (T + 1))


def cycle_energies(T: int) -> np.ndarray:
    """2 cos(2 pi j/T) for j = 0..T-1, unsorted."""
    if T < 3:
        raise ValueError("T must be >= 3")
    return 2 * np.cos(2 * np.pi * np.arange(T) / T)


def eigensystem_path(T: int) -> SpectralDecomposition:
    """Analytic eigenpairs of the T-vertex path, sorted by ascending energy."""
    lam = path_energies(T)
    j = np.arange(T)[::-1]  # ascending energy
    k = np.arange(T)
    vecs = np.sqrt(2 / (T + 1)) * np.sin(np.outer(k + 1, j + 1) * np.pi / (T + 1))
    coeff = vecs[0].astype(complex)
    groups = tuple((i,) for i in range(T))
    return SpectralDecomposition(lam, vecs.astype(complex), coeff, groups)


def eigensystem_cycle(T: int) -> SpectralDecomposition:
    """Fourier modes of the T-cycle; the +-j modes share an eigenvalue."""
    lam = cycle_energies(T)
    j = np.arange(T)
    order = np.lexsort((j, np.round(lam, 12)))
    lam = lam[order]
    k = np.arange(T)
    vecs = np.exp(2j * np.pi * np.outer(k, j[order]) / T) / np.sqrt(T)
    coeff = np.conj(vecs[0])
    return SpectralDecomposition(lam, vecs, coeff, _group(lam, 1e-9 * 2))


def _fix_phases(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    out = vecs.astype(complex, copy=True)
    for c in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, c]) > tol)
        if nz.size:
            z = out[nz[0], c]
            out[:, c] *= np.conj(z) / abs(z)
    return out


def dense_eigensystem(matrix: np.ndarray, psi0: np.ndarray | None = None) -> SpectralDecomposition:
    """Numerical decomposition with ascending eigenvalues and fixed phases."""
    m = np.asarray(matrix)
    lam, vecs = np.linalg.eigh(m)
    vecs = _fix_phases(vecs)
    if psi0 is None:
        psi0 = np.zeros(m.shape[0])
        psi0[0] = 1.0
    coeff = vecs.conj().T @ np.asarray(psi0, dtype=complex)
    scale = max(1.0, float(np.abs(lam).max())) if lam.size else 1.0
    return SpectralDecomposition(lam, vecs, coeff, _group(lam, 1e-9 * scale))


def eigensystem(eff: EffectiveHamiltonian) -> SpectralDecomposition:
    if eff.kind is OrbitKind.PATH:
        return eigensystem_path(eff.T)
    if eff.T >= 3:
        return eigensystem_cycle(eff.T)
    return dense_eigensystem(eff.matrix)


def path_gaps(T: int) -> np.ndarray:
    """|lambda_{j+1} - lambda_j| via 4 sin(pi/(2(T+1))) sin((2j+3) pi/(2(T+1)))."""
    j = np.arange(T - 1)
    return 4 * np.abs(np.sin(np.pi / (2 * (T + 1))) * np.sin((2 * j + 3) * np.pi / (2 * (T + 1))))


def min_gap_path(T: int) -> float:
    if T < 2:
        raise ValueError("T must be >= 2")
    gap = float(path_gaps(T).min())
    bound = np.pi**2 / (4 * (T + 1) ** 2)
    if gap < bound:
        raise AssertionError(f"gap {gap} below pi^2/(4(T+1)^2) = {bound}")
    return gap


# ---------------------------------------------------------------- doubling


def doubled_term(term: sp.csr_matrix, d: int) -> sp.csr_matrix:
    """Embed a 2-site term twice: on unprimed pairs and on primed pairs."""
    t = term.tocoo()
    D = 2 * d
    rows, cols, vals = [], [], []
    for r, c, v in zip(t.row, t.col, t.data):
        x, y = divmod(int(r), d)
        a, b = divmod(int(c), d)
        for off in (0, d):
            rows.append((x + off) * D + (y + off))
            cols.append((a + off) * D + (b + off))
            vals.append(v)
    return sp.coo_matrix((vals, (rows, cols)), shape=(D * D, D * D), dtype=complex).tocsr()


def swap_operator(d: int) -> np.ndarray:
    """Single-site F = sum_a |a'><a| + h.c. on the doubled local space."""
    f = np.zeros((2 * d, 2 * d))
    f[d:, :d] = np.eye(d)
    f[:d, d:] = np.eye(d)
    return f


def primed_projector(d: int) -> np.ndarray:
    p = np.zeros((2 * d, 2 * d))
    p[d:, d:] = np.eye(d)
    return p


def build_tuned_hamiltonian(h: LocalHamiltonian) -> TunedHamiltonian:
    basis = tuple(h.basis) + tuple(b + "'" for b in h.basis) if h.basis else ()
    terms = tuple((p, doubled_term(t, h.d)) for p, t in h.terms)
    doubled = LocalHamiltonian(h.N, 2 * h.d, terms, basis, h.translation_invariant)
    F = swap_operator(h.d)
    FF = sp.csr_matrix(np.kron(F, F))
    for _, t in terms:
        comm = FF @ t - t @ FF
        if comm.nnz and abs(comm).max() > TOL_CONSTRUCTION:
            raise AssertionError("doubled term does not commute with F (x) F")
    return TunedHamiltonian(h, doubled, F)


def global_swap(N: int, d: int) -> sp.csr_matrix:
    """F^{(x) N} on the doubled ring as a sparse permutation."""
    F = sp.csr_matrix(swap_operator(d))
    out = sp.csr_matrix(np.ones((1, 1)))
    for _ in range(N):
        out = sp.kron(out, F, format="csr")
    return out


def site_operator(op: np.ndarray, site: int, N: int) -> sp.csr_matrix:
    d = op.shape[0]
    left = sp.identity(d**site, format="csr")
    right = sp.identity(d ** (N - site - 1), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


# ---------------------------------------------------------------- export


def export_hamiltonian(h: LocalHamiltonian) -> str:
    """Text form: header lines then, per term, its sparse (row, col, re, im) triplets."""
    lines = ["# tmrelax local hamiltonian v1", f"N {h.N}", f"d {h.d}"]
    if h.basis:
        lines.append("basis " + " ".join(h.basis))
    lines.append(f"translation_invariant {int(h.translation_invariant)}")
    for (i, j), t in h.terms:
        c = t.tocoo()
        lines.append(f"term {i} {j} {c.nnz}")
        for r, col, v in zip(c.row, c.col, c.data):
            lines.append(f"{r} {col} {float(v.real)!r} {float(v.imag)!r}")
    return "\n".join(lines) + "\n"


def import_hamiltonian(text: str) -> LocalHamiltonian:
    it = iter(l for l in text.splitlines() if l.strip() and not l.startswith("#"))
    N = d = None
    basis: tuple[str, ...] = ()
    ti = True
    terms = []
    for line in it:
        tok = line.split()
        if tok[0] == "N":
            N = int(tok[1])
        elif tok[0] == "d":
            d = int(tok[1])
        elif tok[0] == "basis":
            basis = tuple(tok[1:])
        elif tok[0] == "translation_invariant":
            ti = bool(int(tok[1]))
        elif tok[0] == "term":
            i, j, nnz = int(tok[1]), int(tok[2]), int(tok[3])
            rows, cols, vals = [], [], []
            for _ in range(nnz):
                r, c, re, im = next(it).split()
                rows.append(int(r))
                cols.append(int(c))
                vals.append(complex(float(re), float(im)))
            m = sp.coo_matrix((vals, (rows, cols)), shape=(d * d, d * d), dtype=complex).tocsr()
            terms.append(((i, j), m))
        else:
            raise ValueError(f"unrecognised line {line!r}")
    return LocalHamiltonian(N, d, tuple(terms), basis, ti)
