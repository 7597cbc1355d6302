"""Microcanonical and Gibbs ensembles from spectral data, plus p-tuning."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    BetaOverflow,
    DegenerateDenominator,
    DimensionMismatch,
    EnergyOutOfRange,
    SymmetryViolation,
)
from .hamiltonian import (
    TOL_NUMERIC,
    TOL_PHYSICS,
    SpectralDecomposition,
    TunedHamiltonian,
    _digits,
    global_swap,
    sparse_hamiltonian,
)
from .tm_model import A2

BETA_CAP = 1e6


@dataclass(frozen=True)
class MicrocanonicalParams:
    E: float
    w: float

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("window width w must be positive")


@dataclass(frozen=True)
class GibbsParams:
    beta: float

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise ValueError("beta must be finite")


@dataclass(frozen=True)
class EnsembleWeights:
    weights: np.ndarray
    log_norm: float

    @property
    def norm(self) -> float:
        return float(np.exp(self.log_norm))


@dataclass(frozen=True)
class TuningResult:
    p: float
    q: float
    A_hat: float
    residual: float
    delta: float = 0.0
    source: str = "exact"


def _normalize(logw: np.ndarray) -> EnsembleWeights:
    # shift by the max before exponentiating; large |logw| would otherwise eat digits
    m = float(np.max(logw))
    w = np.exp(logw - m)
    s = w.sum()
    return EnsembleWeights(w / s, m + float(np.log(s)))


def microcanonical_weights(eigs, mc: MicrocanonicalParams) -> EnsembleWeights:
    lam = np.asarray(eigs, dtype=float)
    return _normalize(-np.pi * ((lam - mc.E) / mc.w) ** 2)


def gibbs_weights(eigs, g: GibbsParams) -> EnsembleWeights:
    lam = np.asarray(eigs, dtype=float)
    return _normalize(-g.beta * lam)


def ensemble_weights(eigs, ens) -> EnsembleWeights:
    if isinstance(ens, MicrocanonicalParams):
        return microcanonical_weights(eigs, ens)
    if isinstance(ens, GibbsParams):
        return gibbs_weights(eigs, ens)
    raise TypeError(f"unknown ensemble {ens!r}")


def eigen_diagonal(sd: SpectralDecomposition, A) -> np.ndarray:
    """<l_i|A|l_i> for every eigenvector; A is a matrix or a basis diagonal."""
    V = sd.eigenvectors
    dim = V.shape[0]
    A = A if sp.issparse(A) else np.asarray(A)
    if A.ndim == 1:
        if A.shape[0] != dim:
            raise DimensionMismatch(f"observable diagonal of length {A.shape[0]} vs {dim}")
        absq = V.multiply(V.conj()).real if sp.issparse(V) else np.abs(V) ** 2
        return np.asarray(absq.T @ A).ravel().real
    if A.shape != (dim, dim):
        raise DimensionMismatch(f"observable {A.shape} vs spectrum of size {dim}")
    if sp.issparse(V):
        AV = sp.csr_matrix(A @ V)
        return np.asarray(V.conj().multiply(AV).sum(axis=0)).ravel().real
    return np.einsum("ki,ki->i", V.conj(), A @ V).real


def expectation(sd: SpectralDecomposition, A, ens) -> float:
    rho = ensemble_weights(sd.eigenvalues, ens).weights
    return float(rho @ eigen_diagonal(sd, A))


def mc_expectation(sd: SpectralDecomposition, A, mc: MicrocanonicalParams) -> float:
    return expectation(sd, A, mc)


def gibbs_energy(eigs, beta: float) -> float:
    lam = np.asarray(eigs, dtype=float)
    return float(gibbs_weights(lam, GibbsParams(beta)).weights @ lam)


def solve_beta(eigs, E: float, tol: float = 1e-12) -> float:
    """Bisection on the decreasing map beta -> tr(H rho_G(beta))."""
    lam = np.asarray(eigs, dtype=float)
    lo_e, hi_e = float(lam.min()), float(lam.max())
    if not lo_e < E < hi_e:
        raise EnergyOutOfRange(f"E = {E} not inside ({lo_e}, {hi_e})")
    f = lambda b: gibbs_energy(lam, b) - E
    lo, hi = -1.0, 1.0
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > BETA_CAP:
            raise BetaOverflow(f"|beta| would exceed {BETA_CAP:g} for E = {E}")
    while f(lo) < 0:
        hi, lo = lo, 2 * lo
        if lo < -BETA_CAP:
            raise BetaOverflow(f"|beta| would exceed {BETA_CAP:g} for E = {E}")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 1e-15 * max(1.0, abs(mid)):
            return mid
        if fm > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- block spectra


def block_eigensystem(H: sp.spmatrix) -> SpectralDecomposition:
    """Exact spectrum of a sparse Hermitian matrix via its connected components.

    Eigenvectors come back as a sparse matrix, one column per eigenvalue;
    each column lives inside a single component.  Components of equal size
    are diagonalized together.
    """
    H = sp.csr_matrix(H)
    dim = H.shape[0]
    pattern = sp.csr_matrix((np.ones(H.nnz), H.indices, H.indptr), shape=H.shape)
    n_comp, label = connected_components(pattern, directed=False)
    order = np.argsort(label, kind="stable")
    sizes = np.bincount(label, minlength=n_comp)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    pos = np.empty(dim, dtype=np.int64)
    pos[order] = np.arange(dim) - starts[label[order]]
    coo = H.tocoo()
    lam_parts, rows, cols, vals = [], [], [], []
    col_base = 0
    for s in np.unique(sizes):
        comps = np.flatnonzero(sizes == s)
        slot = np.full(n_comp, -1, dtype=np.int64)
        slot[comps] = np.arange(comps.size)
        blocks = np.zeros((comps.size, s, s), dtype=complex)
        sel = slot[label[coo.row]] >= 0
        r, c, v = coo.row[sel], coo.col[sel], coo.data[sel]
        np.add.at(blocks, (slot[label[r]], pos[r], pos[c]), v)
        lam, vec = np.linalg.eigh(blocks)
        members = order[(starts[comps][:, None] + np.arange(s)[None, :])]  # (n, s)
        node = np.broadcast_to(members[:, :, None], vec.shape)
        eig_col = col_base + np.arange(comps.size * s).reshape(comps.size, 1, s)
        eig_col = np.broadcast_to(eig_col, vec.shape)
        keep = np.abs(vec) > 1e-14
        rows.append(node[keep])
        cols.append(eig_col[keep])
        vals.append(vec[keep])
        lam_parts.append(lam.ravel())
        col_base += comps.size * s
    lam = np.concatenate(lam_parts)
    V = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    perm = np.argsort(lam, kind="stable")
    V = V[:, perm]
    return SpectralDecomposition(lam[perm], V, np.zeros(dim, dtype=complex), ())


# ---------------------------------------------------------------- tuned ensembles


@dataclass(frozen=True)
class TunedExpectation:
    value: float
    direct: float
    primed_weight: float
    a2_weight: float
    symmetry_error: float


def site_diagonal(N: int, d: int, site: int, levels) -> np.ndarray:
    """Basis diagonal of a projector onto ``levels`` at one site."""
    digits = _digits(N, d)[:, site]
    return np.isin(digits, np.asarray(list(levels))).astype(float)


def tuned_ensemble_expectation(
    tuned: TunedHamiltonian,
    sd: SpectralDecomposition,
    p: float,
    q: float,
    ens,
    H: sp.spmatrix | None = None,
    symbol: str = A2,
) -> TunedExpectation:
    """q/2 + p tr(|a2><a2|_1 rho), with the symmetry that makes it exact checked."""
    h = tuned.doubled
    N, D = h.N, h.d
    d = D // 2
    if sd.dim != D**N:
        raise DimensionMismatch(f"spectrum of size {sd.dim} vs doubled space {D**N}")
    if H is None:
        H = sparse_hamiltonian(h)
    F = global_swap(N, d)
    comm = F @ H - H @ F
    sym_err = float(abs(comm).max()) if comm.nnz else 0.0
    if sym_err > TOL_NUMERIC:
        raise SymmetryViolation(f"||[F, H]|| = {sym_err}")
    rho = ensemble_weights(sd.eigenvalues, ens).weights
    k = tuned.base.basis.index(symbol) if tuned.base.basis else None
    if k is None:
        raise ValueError("tuned Hamiltonian carries no basis labels")
    primed = float(rho @ eigen_diagonal(sd, site_diagonal(N, D, 0, range(d, D))))
    if abs(primed - 0.5) > TOL_PHYSICS:
        raise SymmetryViolation(f"tr(Pi'_1 rho) = {primed}, expected 1/2")
    a2 = float(rho @ eigen_diagonal(sd, site_diagonal(N, D, 0, [k])))
    local = np.zeros(D)
    local[d:] = q
    local[k] += p
    digits = _digits(N, D)
    diag = local[digits].mean(axis=1)
    direct = float(rho @ eigen_diagonal(sd, diag))
    return TunedExpectation(q / 2 + p * a2, direct, primed, a2, sym_err)


def tune_p(A_hat: float, alpha, delta: float = 0.0, source: str = "exact") -> TuningResult:
    """p = 1/(4(1-alpha) - 2 A_hat) with q = 1/2 and the leftover mismatch."""
    a = float(Fraction(alpha))
    den = 4 * (1 - a) - 2 * A_hat
    if abs(den) < 0.5:
        raise DegenerateDenominator(f"4(1-alpha) - 2A = {den} is too close to 0")
    p, q = 1 / den, 0.5
    residual = abs((1 - a) * (1 - delta) * p - (q / 2 + p * A_hat))
    return TuningResult(p, q, A_hat, residual, delta, source)


def tuning_constraint(alpha, delta: float, q: float = 0.5) -> bool:
    """q/2 <= (1-alpha)(1-delta) - 1/4, the room the crossing argument needs."""
    a = float(Fraction(alpha))
    return q / 2 <= (1 - a) * (1 - delta) - 0.25


# ---------------------------------------------------------------- conjecture probe


def probe_conjecture(eigs, eps: float, N: int, E_grid, tol: float = 1e-12) -> dict:
    """Solved beta along an energy grid kept eps*N away from the spectral edges."""
    lam = np.asarray(eigs, dtype=float)
    lo, hi = lam.min() + eps * N, lam.max() - eps * N
    rows = []
    for E in E_grid:
        E = float(E)
        if E < lo - 1e-12 or E > hi + 1e-12:
            continue
        E = min(max(E, lo), hi)
        try:
            beta = solve_beta(lam, E, tol)
        except (EnergyOutOfRange, BetaOverflow):
            beta = float("nan")
        rows.append({"N": N, "E": E, "beta": beta})
    finite = [abs(r["beta"]) for r in rows if np.isfinite(r["beta"])]
    return {"N": N, "eps": eps, "rows": rows, "max_abs_beta": max(finite) if finite else float("nan")}


def probe_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=("N", "E", "beta"), lineterminator="\n")
    w.writeheader()
    for rep in reports:
        for r in rep["rows"]:
            w.writerow({"N": r["N"], "E": repr(r["E"]), "beta": repr(r["beta"])})
    return buf.getvalue()


def weights_to_csv(eigs, weights: EnsembleWeights) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("lambda", "rho"))
    for l, r in zip(np.asarray(eigs, dtype=float), weights.weights):
        w.writerow((repr(float(l)), repr(float(r))))
    return buf.getvalue()
