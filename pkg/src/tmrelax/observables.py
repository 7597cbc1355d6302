"""Intensive a2-counting observables and their long-time averages."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatch, WrongOrbitKind
from .hamiltonian import TOL_NUMERIC, SpectralDecomposition, primed_projector
from .tm_model import A2, Orbit, OrbitKind, ReversibleTM


@dataclass(frozen=True)
class SiteObservable:
    """A d x d Hermitian matrix over the local basis ``basis``."""

    matrix: np.ndarray
    basis: tuple[str, ...]
    p: float = 1.0
    q: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.shape != (len(self.basis), len(self.basis)):
            raise DimensionMismatch(f"matrix {m.shape} vs basis of size {len(self.basis)}")
        if not np.allclose(m, m.conj().T, atol=1e-14):
            raise ValueError("site observable must be Hermitian")

    @property
    def d(self) -> int:
        return len(self.basis)

    def entry(self, x: str, y: str) -> complex:
        idx = self.index
        return self.matrix[idx[x], idx[y]]

    @property
    def index(self) -> dict[str, int]:
        return {b: k for k, b in enumerate(self.basis)}


def a2_projector(tm: ReversibleTM, symbol: str = A2) -> SiteObservable:
    basis = tm.alphabet
    m = np.zeros((len(basis), len(basis)))
    m[basis.index(symbol), basis.index(symbol)] = 1.0
    return SiteObservable(m, basis)


def tuned_site_observable(tm: ReversibleTM, p: float, q: float, symbol: str = A2) -> SiteObservable:
    """p |a2><a2| on the unprimed copy plus q times the primed-copy projector."""
    basis = tuple(tm.alphabet) + tuple(b + "'" for b in tm.alphabet)
    d = tm.d
    m = q * primed_projector(d)
    k = tm.alphabet.index(symbol)
    m[k, k] += p
    return SiteObservable(m, basis, p, q)


@dataclass(frozen=True)
class IntensiveObservable:
    """(1/N) times the sum of one site observable over every ring site."""

    site: SiteObservable
    N: int

    def diagonal_value(self, sites) -> float:
        idx = self.site.index
        m = self.site.matrix
        return float(np.real(sum(m[idx[s], idx[s]] for s in sites))) / self.N

    def element(self, left, right) -> complex:
        """<left| A_N |right> for two product basis states."""
        if len(left) != self.N or len(right) != self.N:
            raise DimensionMismatch("configuration length differs from N")
        diff = [i for i in range(self.N) if left[i] != right[i]]
        if not diff:
            return self.diagonal_value(left)
        if len(diff) > 1:
            return 0.0
        i = diff[0]
        return self.site.entry(left[i], right[i]) / self.N

    def dense(self) -> np.ndarray:
        """Full d^N matrix (small rings only)."""
        from .hamiltonian import site_operator

        out = 0
        for i in range(self.N):
            out = out + site_operator(np.asarray(self.site.matrix), i, self.N)
        return (out / self.N).toarray()


def orbit_observable_matrix(orb: Orbit, A: IntensiveObservable) -> np.ndarray:
    """<w_j| A_N |w_k> over the orbit basis, cross terms included."""
    sites = [c.sites for c in orb.configs]
    T = len(sites)
    out = np.zeros((T, T), dtype=complex)
    for j in range(T):
        out[j, j] = A.diagonal_value(sites[j])
    if np.count_nonzero(A.site.matrix - np.diag(np.diag(A.site.matrix))):
        for j in range(T):
            for k in range(j + 1, T):
                v = A.element(sites[j], sites[k])
                out[j, k] = v
                out[k, j] = np.conj(v)
    return out


# ---------------------------------------------------------------- averages


class AverageMethod(str, Enum):
    SPECTRAL = "spectral"
    STRUCTURAL = "structural"
    CLOSED_FORM = "closed_form"
    FINITE_TIME = "finite_time"


@dataclass(frozen=True)
class AverageReport:
    value: float
    method: AverageMethod
    bound: float = 0.0
    tau: float | None = None
    instance: str = ""

    CSV_FIELDS = ("instance", "method", "tau", "value", "bound")

    def row(self) -> dict:
        return {
            "instance": self.instance,
            "method": self.method.value,
            "tau": "" if self.tau is None else repr(float(self.tau)),
            "value": repr(float(self.value)),
            "bound": repr(float(self.bound)),
        }


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=AverageReport.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def _eigen_matrix(sd: SpectralDecomposition, A_orbit: np.ndarray) -> np.ndarray:
    A = np.asarray(A_orbit)
    if A.shape != (sd.dim, sd.dim) or sd.eigenvectors.shape[0] != sd.dim:
        raise DimensionMismatch(f"observable {A.shape} vs spectrum of size {sd.dim}")
    V = sd.eigenvectors
    return V.conj().T @ A @ V


def _groups(sd: SpectralDecomposition):
    return sd.groups or tuple((i,) for i in range(sd.dim))


def infinite_time_average_spectral(sd: SpectralDecomposition, A_orbit: np.ndarray) -> float:
    """Sum of c_i* c_j <l_i|A|l_j> over pairs sharing an eigenvalue."""
    M = _eigen_matrix(sd, A_orbit)
    c = sd.coefficients
    total = 0j
    for g in _groups(sd):
        g = list(g)
        cg = c[g]
        total += cg.conj() @ M[np.ix_(g, g)] @ cg
    return float(total.real)


def infinite_time_average_structural(orb: Orbit, A: IntensiveObservable) -> float:
    """Path-orbit average from endpoint, bulk and next-nearest cross terms."""
    if orb.kind is not OrbitKind.PATH:
        raise WrongOrbitKind("structural formula needs a PATH orbit")
    sites = [c.sites for c in orb.configs]
    T = len(sites)
    if T == 1:
        return A.diagonal_value(sites[0])
    diag = [A.diagonal_value(s) for s in sites]
    val = 3 / (2 * (T + 1)) * (diag[0] + diag[-1]) + sum(diag[1:-1]) / (T + 1)
    cross = 0.0
    for j in range(T):
        for jp in (j - 2, j + 2):
            if 0 <= jp < T:
                cross += float(np.real(A.element(sites[j], sites[jp])))
    return val - cross / (2 * (T + 1))


def path_weight_matrix(T: int) -> np.ndarray:
    """Exact weights W[k, k'] with average = sum W[k,k'] <w_k|A|w_k'> on a path."""
    from .hamiltonian import eigensystem_path

    sd = eigensystem_path(T)
    V = sd.eigenvectors.real
    return (V * np.abs(sd.coefficients) ** 2) @ V.T


def closed_form_halting(alpha, T_h: int, N: int) -> float:
    if T_h < 1:
        raise ValueError("T_h must be >= 1")
    a = float(Fraction(alpha))
    return (1 - a) / 2 * (1 - 2 / (2 * T_h + N + 1))


def closed_form_halting_padded(alpha, T_h: int, N: int, weight: float = 1.0) -> tuple[float, float]:
    """Padded-machine prediction and its slack delta; ``weight`` is <a2|A|a2>."""
    if T_h < 1:
        raise ValueError("T_h must be >= 1")
    a = float(Fraction(alpha))
    delta = (T_h + N / 2 + 1.5) / ((N + 2) * T_h + (N + 1) * N + 1)
    return (1 - a) * (1 - delta) * weight, delta


def _phi(delta: np.ndarray, tau: float) -> np.ndarray:
    x = delta * tau
    out = np.ones_like(x, dtype=complex)
    nz = np.abs(x) > 1e-12
    out[nz] = np.expm1(1j * x[nz]) / (1j * x[nz])
    return out


def finite_time_average(sd: SpectralDecomposition, A_orbit: np.ndarray, tau: float) -> float:
    if not tau > 0:
        raise ValueError("tau must be positive")
    M = _eigen_matrix(sd, A_orbit)
    c = sd.coefficients
    lam = np.asarray(sd.eigenvalues, dtype=float)
    phi = _phi(lam[:, None] - lam[None, :], tau)
    for g in _groups(sd):
        phi[np.ix_(g, g)] = 1.0
    val = c.conj() @ (M * phi) @ c
    if abs(val.imag) > TOL_NUMERIC:
        raise AssertionError(f"finite-time average has imaginary part {val.imag}")
    return float(val.real)


def finite_time_bound(T: int, tau: float, A_norm: float) -> float:
    """A_norm * 2 (T+1)^2 / (pi^2 tau); zero for infinite tau."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if np.isinf(tau):
        return 0.0
    return A_norm * 2 * (T + 1) ** 2 / (np.pi**2 * tau)
