"""Operator-level simulation of the block-encoding, phase-estimation and
postselection algorithms used to estimate long-time averages and to prepare
microcanonical states.

Block encodings are exact unitary dilations rather than gate circuits, and
phase estimation is evaluated through its closed-form outcome kernel, so the
simulation is exact up to the error metadata each step declares.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import ceil, log, log2, pi

import numpy as np

from .errors import (
    NormTooLarge,
    PolyNotSubnormalized,
    PromiseUnknown,
    ScheduleInvalid,
    ZeroProbability,
)
from .polyapprox import (
    CertifiedPolynomial,
    gaussian_poly,
    matrix_apply,
    rescale_half,
    sqrt_poly,
    sup_bound,
)

UNITARY_TOL = 1e-12
ETA_FLOOR = 1e-14
DEFAULT_TRY_BUDGET = 1e30


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh((m + m.conj().T) / 2)
    return (V * np.sqrt(np.clip(lam, 0, None))) @ V.conj().T


@dataclass(frozen=True)
class BlockEncoding:
    """U acts on system (+) one ancilla block; alpha * U[:n, :n] encodes the target."""

    U: np.ndarray
    alpha: float
    ancillas: int
    eps: float
    n: int
    target: np.ndarray | None = None

    def block(self) -> np.ndarray:
        return self.alpha * self.U[: self.n, : self.n]

    def unitarity_error(self) -> float:
        return float(np.abs(self.U.conj().T @ self.U - np.eye(self.U.shape[0])).max())


def _dilate(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    eye = np.eye(n)
    return np.block(
        [[A, _psd_sqrt(eye - A @ A.conj().T)], [_psd_sqrt(eye - A.conj().T @ A), -A.conj().T]]
    )


def block_encode_exact(M, alpha: float) -> BlockEncoding:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("block_encode_exact needs a square matrix")
    norm = np.linalg.norm(M, 2) if M.size else 0.0
    if not alpha > 0 or norm / alpha > 1 + UNITARY_TOL:
        raise NormTooLarge(f"||M|| = {norm} exceeds alpha = {alpha}")
    A = M / alpha
    if norm / alpha > 1:
        A = A / (norm / alpha)
    U = _dilate(A)
    be = BlockEncoding(U, float(alpha), 1, 0.0, M.shape[0], M)
    err = float(np.linalg.norm(be.block() - M, 2))
    if be.unitarity_error() > UNITARY_TOL * max(1, M.shape[0]) or err > UNITARY_TOL * max(1.0, alpha):
        raise AssertionError("dilation is not accurate to the construction tolerance")
    return BlockEncoding(U, float(alpha), 1, err, M.shape[0], M)


def apply_poly_to_encoding(be: BlockEncoding, p: CertifiedPolynomial) -> BlockEncoding:
    """Encoding of p(A/alpha): p is applied to the block and the result re-dilated.

    The declared error follows the composition law 4 deg(p) sqrt(eps/alpha) + delta,
    where delta is the measured error of the new dilation.
    """
    if sup_bound(p) > 0.5 + 1e-12:
        raise PolyNotSubnormalized(f"sup|p| = {sup_bound(p)} > 1/2")
    A = be.U[: be.n, : be.n]
    if not np.allclose(A, A.conj().T, atol=1e-12):
        raise ValueError("the encoded operator must be Hermitian")
    lam = np.linalg.eigvalsh(A)
    A = A if np.abs(lam).max(initial=0) <= 1 else A / np.abs(lam).max()
    PA = matrix_apply(p, A)
    out = block_encode_exact(PA, 1.0)
    declared = 4 * p.degree * np.sqrt(be.eps / be.alpha) + out.eps
    return BlockEncoding(out.U, 1.0, be.ancillas + 2, float(declared), be.n, PA)


# ---------------------------------------------------------------- states


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray  # one tensor axis per register
    registers: tuple[str, ...]

    def __post_init__(self):
        if self.amplitudes.ndim != len(self.registers):
            raise ValueError("one tensor axis per register")
        nrm = np.linalg.norm(self.amplitudes)
        if abs(nrm - 1) > 1e-12:
            raise ValueError(f"state norm {nrm} differs from 1")

    def axis(self, name: str) -> int:
        return self.registers.index(name)

    def reduced(self, keep: str) -> np.ndarray:
        k = self.axis(keep)
        psi = np.moveaxis(self.amplitudes, k, 0).reshape(self.amplitudes.shape[k], -1)
        return psi @ psi.conj().T


def product_state(**registers) -> QuantumState:
    names = tuple(registers)
    amp = np.array(1.0 + 0j)
    for v in registers.values():
        v = np.asarray(v, dtype=complex)
        amp = np.multiply.outer(amp, v / np.linalg.norm(v))
    return QuantumState(amp, names)


def maximally_entangled(dim: int, names=("system", "copy")) -> QuantumState:
    return QuantumState(np.eye(dim, dtype=complex) / np.sqrt(dim), tuple(names))


def apply_and_postselect(be: BlockEncoding, s: QuantumState, register: str = "system"):
    """Attach a |0> ancilla, apply U to (register, ancilla), keep the ancilla-0 branch."""
    k = s.axis(register)
    if s.amplitudes.shape[k] != be.n:
        raise ValueError(f"register {register!r} has dimension {s.amplitudes.shape[k]}, encoding expects {be.n}")
    psi = np.moveaxis(s.amplitudes, k, 0)
    rest = psi.shape[1:]
    flat = psi.reshape(be.n, -1)
    full = np.zeros((2 * be.n, flat.shape[1]), dtype=complex)
    full[: be.n] = flat
    out = (be.U @ full)[: be.n]
    prob = float(np.vdot(out, out).real)
    if prob < 1e-300:
        raise ZeroProbability("postselection branch has zero weight")
    out = np.moveaxis((out / np.sqrt(prob)).reshape((be.n,) + rest), 0, k)
    return QuantumState(out, s.registers), prob


# ---------------------------------------------------------------- phase estimation


def qpe_register_bits(m: int, eps: float) -> int:
    return m + 1 + ceil(2 * log2(1 / eps))


def dirichlet_overlap(delta, M: int) -> np.ndarray:
    """<phi~|phi'~> for QPE output states with M bins and phase difference delta."""
    delta = np.asarray(delta, dtype=float)
    d = delta - np.round(delta)
    s = np.sin(pi * d)
    out = np.ones(d.shape, dtype=complex)
    nz = np.abs(s) > 1e-300
    dn = d[nz]
    # reduce M*d to [-1, 1] symmetrically so small negative arguments keep their digits
    x = M * dn
    x = x - 2.0 * np.round(x / 2.0)
    out[nz] = np.exp(1j * pi * (M - 1) * dn) * np.sin(pi * x) / (M * s[nz])
    return out


def _kernel(b: np.ndarray, phi: float, M: int) -> np.ndarray:
    """Probability of fine outcome b given eigenphase phi."""
    return np.abs(dirichlet_overlap(phi - b / M, M)) ** 2


@dataclass(frozen=True)
class QPEResult:
    phases: np.ndarray
    weights: np.ndarray
    m: int
    m_prime: int
    eps: float
    tail_mass: np.ndarray
    distribution: np.ndarray | None = None  # (component, fine bin), small registers only

    @property
    def bins(self) -> int:
        return 2**self.m_prime

    def overlap(self, i: int, j: int) -> complex:
        return complex(dirichlet_overlap(self.phases[j] - self.phases[i], self.bins))

    def overlaps(self) -> np.ndarray:
        return dirichlet_overlap(self.phases[None, :] - self.phases[:, None], self.bins)

    def estimate_mass(self, b: int) -> float:
        """Total probability of fine outcome b."""
        return float(sum(w * _kernel(np.array([b]), ph, self.bins)[0] for ph, w in zip(self.phases, self.weights)))


def _window_mass(phi: float, m: int, m_prime: int) -> float:
    M = 2**m_prime
    half = 2.0 ** (-(m + 1))
    lo = ceil((phi - half) * M)
    hi = int(np.floor((phi + half) * M))
    b = np.arange(lo, hi + 1)
    return float(_kernel(b, phi, M).sum())


def phase_estimation(eigs, overlaps, m: int, eps: float) -> QPEResult:
    phases = np.mod(np.asarray(eigs, dtype=float), 1.0)
    c = np.asarray(overlaps, dtype=complex)
    w = np.abs(c) ** 2
    if abs(w.sum() - 1) > 1e-10:
        raise ValueError("overlaps must be normalized")
    mp = qpe_register_bits(m, eps)
    if mp - m > 26:
        raise ValueError("eps too small for window summation")
    tails = np.array([max(0.0, 1 - _window_mass(ph, m, mp)) for ph in phases])
    if np.any(tails > eps):
        raise AssertionError(f"tail mass {tails.max()} exceeds eps {eps}")
    dist = None
    if mp <= 20:
        b = np.arange(2**mp)
        dist = np.array([wi * _kernel(b, ph, 2**mp) for ph, wi in zip(phases, w)])
        if abs(dist.sum() - 1) > 1e-9:
            raise AssertionError("QPE distribution does not sum to 1")
    return QPEResult(phases, w, m, mp, eps, tails, dist)


# ---------------------------------------------------------------- long-time average


@dataclass(frozen=True)
class LongTimeEstimate:
    gamma: float
    probability: float
    exact_probability: float
    shots: int | None
    error_budget: float
    m: int
    m_prime: int
    schedule: dict = field(default_factory=dict)
    dN: float = 1.0

    def resample(self, seed: int | None) -> "LongTimeEstimate":
        """Redraw only the Bernoulli count; every other step is deterministic."""
        if self.shots is None:
            return self
        measured = _count(self.exact_probability, self.shots, seed)
        return replace(self, gamma=_gamma(measured, self.dN), probability=measured)


def _count(prob: float, n: int, seed: int | None) -> float:
    return np.random.default_rng(seed).binomial(n, prob) / n


def _gamma(measured: float, dN: float) -> float:
    return 2 * dN * (1 - 16 * measured)


def promise_gap(eigs, coefficients, tol: float = 1e-9) -> float:
    """Smallest separation between distinct eigenvalues the initial state touches."""
    lam = np.asarray(eigs, dtype=float)[np.abs(np.asarray(coefficients)) > 1e-12]
    lam = np.unique(np.round(lam / tol) * tol)
    if lam.size < 2:
        return float("inf")
    return float(np.diff(lam).min())


def estimate_long_time_average(
    H_eff,
    A_orbit,
    psi0,
    eps: float,
    shots: int | None = 0,
    seed: int | None = None,
    *,
    gap: float | None = None,
    dN: float = 1.0,
) -> LongTimeEstimate:
    """Phase estimation, block-encoded (1/4) sqrt(1 - A/2dN), and a Bernoulli count.

    ``dN`` normalizes the observable (its encoding has alpha = dN).  ``shots``
    of 0 picks the Hoeffding count ceil(eps4^-2); ``None`` returns the exact
    postselection probability instead of sampling.
    """
    if gap is None:
        raise PromiseUnknown("a promise gap is required to size the phase register")
    if not 0 < eps <= 0.25:
        raise ValueError("eps must lie in (0, 1/4]")
    H = np.asarray(H_eff, dtype=complex)
    A = np.asarray(A_orbit, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex)
    eps2 = eps / (8 * dN)
    eps3 = eps / (64 * dN)
    eps4 = eps / (128 * dN)
    lam, V = np.linalg.eigh(H)
    c = V.conj().T @ psi0
    # phases of e^{iH}; the eigenvalue range is below 2 pi so they stay distinct
    phases = lam / (2 * pi)
    m = max(1, ceil(log2(2 * pi / gap)) + 1)
    qpe_eps = eps2 * 2.0 ** (-(m + 1))
    mp = qpe_register_bits(m, qpe_eps)
    ov = dirichlet_overlap(phases[None, :] - phases[:, None], 2**mp)
    be_A = block_encode_exact(A, dN)
    p = rescale_half(sqrt_poly(min(0.5, 4 * eps3), sign=-1), scale=0.25)
    be_sqrt = apply_poly_to_encoding(be_A, p)
    B = be_sqrt.block()
    BB = V.conj().T @ (B.conj().T @ B) @ V
    prob = float(np.real(np.einsum("i,j,ij,ij->", c.conj(), c, BB, ov)))
    prob = min(max(prob, 0.0), 1.0)
    if shots is None:
        measured, n = prob, None
    else:
        n = shots if shots > 0 else ceil(eps4**-2)
        measured = _count(prob, n, seed)
    budget = 32 * dN * (eps2 / 16 + eps3 / 2)
    return LongTimeEstimate(
        _gamma(measured, dN),
        measured,
        prob,
        n,
        budget,
        m,
        mp,
        {"eps2": eps2, "eps3": eps3, "eps4": eps4, "eps1": 0.0},
        dN,
    )


# ---------------------------------------------------------------- microcanonical preparation


@dataclass(frozen=True)
class PrepSchedule:
    eps: float
    eps_p: float
    eta: float
    delta: float
    eps_H: float
    eta_clamped: bool = False

    def check(self, alpha: float, w: float) -> None:
        floor = np.exp(-pi * alpha**2 / w**2)
        if abs(self.eps_p - self.eps / 2) > 1e-15:
            raise ScheduleInvalid("eps_p must equal eps/2")
        if not self.eta_clamped and self.eta > self.eps * floor / 18 * (1 + 1e-12):
            raise ScheduleInvalid("eta above eps e^{-pi a^2/w^2}/18")
        if not self.delta < self.eps**2 * np.exp(-pi * alpha**2 / (2 * w**2)) / 32:
            raise ScheduleInvalid("delta too large")
        if self.eps_H < 0:
            raise ScheduleInvalid("eps_H must be nonnegative")


def make_schedule(eps: float, alpha: float, w: float, gamma: float = 4.0) -> PrepSchedule:
    """Parameter cascade; eta is clamped to a double-precision floor when needed."""
    if not 0 < eps <= 1:
        raise ScheduleInvalid("eps must lie in (0, 1]")
    floor = np.exp(-pi * alpha**2 / w**2)
    half = np.exp(-pi * alpha**2 / (2 * w**2))
    eta = eps * floor / 18
    clamped = eta < ETA_FLOOR
    eta = max(eta, ETA_FLOOR)
    delta = eps**2 * half / 33
    deg = gamma * (alpha / w) * (log(2 / eps) + pi * alpha**2 / w**2)
    eps_H = alpha * (eps * half / (128 * deg)) ** 4
    return PrepSchedule(eps, eps / 2, eta, delta, eps_H, clamped)


@dataclass(frozen=True)
class PreparedState:
    rho: np.ndarray
    success_probability: float
    expected_tries: float
    sampled_tries: int
    declared_error: float
    probability_floor: float
    degree: int
    scale: float


def prepare_microcanonical(
    H,
    E: float,
    w: float,
    schedule: PrepSchedule | None = None,
    seed: int | None = None,
    *,
    eps: float = 0.05,
    alpha: float | None = None,
    try_budget: float = DEFAULT_TRY_BUDGET,
) -> PreparedState:
    """Gaussian filter on one half of a maximally entangled pair, then postselect."""
    H = np.asarray(H, dtype=complex)
    D = H.shape[0]
    Hp = H - E * np.eye(D)
    norm = float(np.linalg.norm(H, 2)) + abs(E)
    alpha = norm if alpha is None else alpha
    if alpha < norm * (1 - 1e-12):
        raise ScheduleInvalid("alpha must be at least ||H|| + |E|")
    if not w > 0:
        raise ScheduleInvalid("w must be positive")
    if w < alpha / np.sqrt(np.log(try_budget)):
        raise ScheduleInvalid(f"w = {w} would need more than {try_budget:g} expected tries")
    schedule = schedule or make_schedule(eps, alpha, w)
    schedule.check(alpha, w)
    poly = gaussian_poly(w / alpha, schedule.eta)
    sup = sup_bound(poly)
    p = rescale_half(poly, scale=min(0.5, 0.5 / sup))
    be = apply_poly_to_encoding(block_encode_exact(Hp, alpha), p)
    state, prob = apply_and_postselect(be, maximally_entangled(D))
    rho = state.reduced("system")
    rng = np.random.default_rng(seed)
    tries = int(rng.geometric(prob)) if prob > 1e-12 else -1
    # declared block error of the filter, from the schedule's eps_H and delta
    eps_block = 4 * poly.degree * np.sqrt(schedule.eps_H / alpha) + schedule.delta
    floor = p.scale**2 * max(
        0.0, np.exp(-pi * alpha**2 / (2 * w**2)) - schedule.eta - eps_block
    ) ** 2
    declared = np.sqrt(8 * eps_block) + schedule.eps_p
    return PreparedState(rho, prob, 1 / prob, tries, float(declared), float(floor), poly.degree, p.scale)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Trace norm of a - b (no factor 1/2)."""
    return float(np.abs(np.linalg.eigvalsh((a - b + (a - b).conj().T) / 2)).sum())


def exact_microcanonical(H, E: float, w: float) -> np.ndarray:
    lam, V = np.linalg.eigh(np.asarray(H, dtype=complex))
    logw = -pi * ((lam - E) / w) ** 2
    wts = np.exp(logw - logw.max())
    wts /= wts.sum()
    return (V * wts) @ V.conj().T


@dataclass(frozen=True)
class MCObservableEstimate:
    estimate: float
    samples: int
    prepared: PreparedState


def estimate_mc_observable(H, A, E: float, w: float, eps: float, seed: int | None = None, **kw) -> MCObservableEstimate:
    """Prepare at eps/(2||A||), then average ceil(range^2 ln 6 / (2 (eps/2)^2)) measurements."""
    A = np.asarray(A, dtype=complex)
    normA = max(float(np.linalg.norm(A, 2)), 1e-300)
    prep = prepare_microcanonical(H, E, w, seed=seed, eps=min(1.0, eps / (2 * normA)), **kw)
    a, U = np.linalg.eigh(A)
    probs = np.real(np.einsum("ki,kl,li->i", U.conj(), prep.rho, U))
    probs = np.clip(probs, 0, None)
    probs /= probs.sum()
    span = float(a.max() - a.min())
    if span == 0:
        return MCObservableEstimate(float(a[0]), 0, prep)
    n = ceil(span**2 * log(6) / (2 * (eps / 2) ** 2))
    rng = np.random.default_rng(None if seed is None else seed + 1)
    counts = rng.multinomial(n, probs)
    return MCObservableEstimate(float(counts @ a / n), n, prep)
