"""End-to-end instances, decision procedures and the built-in corpus."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import toys
from .ensembles import (
    GibbsParams,
    MicrocanonicalParams,
    TuningResult,
    block_eigensystem,
    eigen_diagonal,
    ensemble_weights,
    site_diagonal,
    solve_beta,
    tune_p,
    tuned_ensemble_expectation,
)
from .errors import BudgetExceeded, PromiseUnknown, TauTooSmall
from .hamiltonian import (
    LocalHamiltonian,
    SpectralDecomposition,
    TunedHamiltonian,
    build_tuned_hamiltonian,
    compile_hamiltonian,
    effective_hamiltonian,
    eigensystem,
    min_gap_path,
    sparse_hamiltonian,
)
from .observables import (
    IntensiveObservable,
    a2_projector,
    closed_form_halting,
    closed_form_halting_padded,
    finite_time_average,
    finite_time_bound,
    infinite_time_average_spectral,
    orbit_observable_matrix,
    tuned_site_observable,
)
from .qsim import estimate_long_time_average, estimate_mc_observable, promise_gap
from .tm_model import (
    A2,
    Orbit,
    OrbitKind,
    ReversibleTM,
    TMProgram,
    build_composite_machine,
    build_padded_machine,
    initial_configuration,
    orbit,
)
from .tmfile import load_machine

TUNED_BUDGET = 5_000_000  # doubled-space dimension handled by exact traces
QSIM_PREP_BUDGET = 64  # dimension the dense preparation route accepts


class Method(str, Enum):
    EXACT = "exact"
    QSIM = "qsim"


class Outcome(str, Enum):
    YES = "YES"
    NO = "NO"
    PROMISE_VIOLATED = "PROMISE_VIOLATED"

    @property
    def exit_code(self) -> int:
        return {"YES": 0, "NO": 1, "PROMISE_VIOLATED": 2}[self.value]


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    value: float
    target: float
    eps: float
    c: float
    method: str = "exact"
    margin: float = 0.0  # extra slack folded into both thresholds
    details: dict = field(default_factory=dict)

    @property
    def deviation(self) -> float:
        return abs(self.value - self.target)

    @property
    def gap_margin(self) -> float:
        """Distance to the nearer threshold; positive means the verdict is clear."""
        dev = self.deviation
        if self.outcome is Outcome.YES:
            return self.eps + self.margin - dev
        if self.outcome is Outcome.NO:
            return dev - (self.c * self.eps - self.margin)
        return -min(dev - self.eps - self.margin, self.c * self.eps - self.margin - dev)

    def row(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "method": self.method,
            "value": repr(float(self.value)),
            "target": repr(float(self.target)),
            "eps": repr(float(self.eps)),
            "c": repr(float(self.c)),
            "gap_margin": repr(float(self.gap_margin)),
        }


def classify(value: float, target: float, eps: float, c: float, margin: float = 0.0) -> Outcome:
    dev = abs(value - target)
    if dev <= eps + margin:
        return Outcome.YES
    if dev >= c * eps - margin:
        return Outcome.NO
    return Outcome.PROMISE_VIOLATED


def resolve_machine(spec) -> TMProgram | ReversibleTM:
    """A toy name, a machine file path, or a machine object."""
    if isinstance(spec, (TMProgram, ReversibleTM)):
        return spec
    name = str(spec)
    table = {**toys.HALTING, **toys.LOOPING, "flipper": toys.flipper, "right_mover": toys.right_mover}
    if name in table:
        return table[name]()
    path = Path(name)
    if path.exists():
        return load_machine(path)
    raise ValueError(f"unknown machine {name!r}: not a toy name and no such file")


def machine_name(spec) -> str:
    if isinstance(spec, (TMProgram, ReversibleTM)):
        return getattr(spec, "name", "") or type(spec).__name__
    return Path(str(spec)).stem


# ---------------------------------------------------------------- relaxation instances


@dataclass(frozen=True)
class FSRelaxInstance:
    name: str
    machine: ReversibleTM
    x: str
    N: int
    alpha: Fraction
    padded: bool
    hamiltonian: LocalHamiltonian
    observable: IntensiveObservable
    orbit: Orbit
    A_star: float
    eps: float
    c: float
    T_h: int | None = None
    delta: float = 0.0

    def __post_init__(self):
        if not self.c > 1:
            raise ValueError("c must exceed 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if (self.alpha * self.N).denominator != 1:
            raise ValueError("alpha * N must be an integer")

    @property
    def T(self) -> int:
        return self.orbit.T

    @property
    def halting(self) -> bool:
        return self.orbit.kind is OrbitKind.PATH

    def spectrum(self) -> SpectralDecomposition:
        return eigensystem(effective_hamiltonian(self.orbit))

    def orbit_observable(self) -> np.ndarray:
        return orbit_observable_matrix(self.orbit, self.observable)

    def exact_average(self) -> float:
        return infinite_time_average_spectral(self.spectrum(), self.orbit_observable())

    def gap_ok(self) -> bool:
        """Distinct orbit eigenvalues are at least pi^2/(4 (T+1)^2) apart."""
        sd = self.spectrum()
        g = promise_gap(sd.eigenvalues, np.ones(sd.dim))
        return g >= np.pi**2 / (4 * (self.T + 1) ** 2) - 1e-12


def default_eps(alpha) -> float:
    return (1 - float(Fraction(alpha))) / 8


def _halting_target(alpha, N: int, T_h: int | None, padded: bool) -> tuple[float, float]:
    # a looping run has no halting time; the smallest one gives the lowest halting value
    T_h = max(1, T_h or 1)
    if padded:
        return closed_form_halting_padded(alpha, T_h, N)
    return closed_form_halting(alpha, T_h, N), 0.0


def build_hardness_instance(
    tm1,
    x: str = "",
    N: int = 8,
    alpha="1/2",
    padded: bool = False,
    eps: float | None = None,
    c: float = 2.0,
    A_star: float | None = None,
) -> FSRelaxInstance:
    prog = resolve_machine(tm1)
    tm = build_padded_machine(prog) if padded else build_composite_machine(prog)
    a = Fraction(alpha)
    c0 = initial_configuration(tm, x, N, a)
    orb = orbit(tm, c0)
    h = compile_hamiltonian(tm, N)
    obs = IntensiveObservable(a2_projector(tm), N)
    target, delta = _halting_target(a, N, orb.T_h, padded)
    inst = FSRelaxInstance(
        name=machine_name(tm1) + ("/padded" if padded else ""),
        machine=tm,
        x=x,
        N=N,
        alpha=a,
        padded=padded,
        hamiltonian=h,
        observable=obs,
        orbit=orb,
        A_star=target if A_star is None else A_star,
        eps=default_eps(a) if eps is None else eps,
        c=c,
        T_h=orb.T_h,
        delta=delta,
    )
    if not inst.gap_ok():
        raise AssertionError(f"{inst.name}: orbit spectrum violates the eigengap bound")
    return inst


def decide_fsrelax(
    inst: FSRelaxInstance,
    method: Method | str = Method.EXACT,
    seed: int | None = None,
    shots: int | None = 0,
    eps_prime: float | None = None,
) -> Verdict:
    method = Method(method)
    if method is Method.EXACT:
        v = inst.exact_average()
        return Verdict(classify(v, inst.A_star, inst.eps, inst.c), v, inst.A_star, inst.eps, inst.c, "exact")
    ep = inst.eps / 4 if eps_prime is None else eps_prime
    est = qsim_average(inst, ep, seed=seed, shots=shots)
    dev = abs(est.gamma - inst.A_star)
    if dev <= inst.eps + ep:
        out = Outcome.YES
    elif dev >= inst.c * inst.eps - ep:
        out = Outcome.NO
    else:
        raise PromiseUnknown(
            f"estimate {est.gamma:.6g} is {dev:.3g} from A* = {inst.A_star:.6g}; "
            f"neither case holds at eps' = {ep:.3g}"
        )
    return Verdict(out, est.gamma, inst.A_star, inst.eps, inst.c, "qsim", ep, {"shots": est.shots, "seed": seed})


def qsim_average(inst: FSRelaxInstance, eps: float, seed: int | None = None, shots: int | None = 0):
    sd = inst.spectrum()
    eff = effective_hamiltonian(inst.orbit)
    psi0 = np.zeros(inst.T)
    psi0[0] = 1.0
    gap = promise_gap(sd.eigenvalues, sd.coefficients)
    if not np.isfinite(gap):
        gap = min_gap_path(max(inst.T, 2))
    dN = inst.machine.d * inst.N
    return estimate_long_time_average(
        eff.matrix, inst.orbit_observable(), psi0, eps, shots=shots, seed=seed, gap=gap, dN=dN
    )


def decide_fsrelax_majority(inst: FSRelaxInstance, seeds, **kw) -> tuple[Outcome, dict]:
    """QSIM verdicts over a seed set; undecided runs count as PROMISE_VIOLATED."""
    tally = {o: 0 for o in Outcome}
    for s in seeds:
        try:
            tally[decide_fsrelax(inst, Method.QSIM, seed=s, **kw).outcome] += 1
        except PromiseUnknown:
            tally[Outcome.PROMISE_VIOLATED] += 1
    best = max(tally, key=tally.get)
    return best, {o.value: n for o, n in tally.items()}


def tau_threshold(inst: FSRelaxInstance, A_norm: float = 1.0) -> float:
    """Smallest tau whose finite-time bound stays below (c-1) eps / 2."""
    return 2 * (inst.T + 1) ** 2 * A_norm / (np.pi**2 * (inst.c - 1) * inst.eps / 2)


def decide_ftfsrelax(inst: FSRelaxInstance, tau: float) -> Verdict:
    if not tau > 0:
        raise ValueError("tau must be positive")
    A_norm = float(np.linalg.norm(inst.orbit_observable(), 2))
    bound = finite_time_bound(inst.T, tau, A_norm)
    if bound >= (inst.c - 1) * inst.eps / 2:
        raise TauTooSmall(f"tau = {tau:g} below threshold {tau_threshold(inst, A_norm):g}")
    v = finite_time_average(inst.spectrum(), inst.orbit_observable(), tau)
    out = classify(v, inst.A_star, inst.eps, inst.c, bound)
    return Verdict(out, v, inst.A_star, inst.eps, inst.c, "finite_time", bound, {"tau": tau})


# ---------------------------------------------------------------- thermalization instances


@dataclass(frozen=True)
class ThermEnsemble:
    """MC(E, w) or GIBBS(E); E of None means the initial state's energy."""

    kind: str = "mc"
    E: float | None = None
    w: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mc", "gibbs"):
            raise ValueError(f"unknown ensemble {self.kind!r}")
        if self.kind == "mc" and not self.w > 0:
            raise ValueError("w must be positive")


@dataclass(frozen=True)
class FSThermInstance:
    relax: FSRelaxInstance
    tuned: TunedHamiltonian
    H: sp.csr_matrix
    spectrum: SpectralDecomposition
    ensemble: ThermEnsemble
    E: float
    tuning: TuningResult
    observable: IntensiveObservable

    @property
    def name(self) -> str:
        return self.relax.name + f"/tuned-{self.ensemble.kind}"

    @property
    def eps(self) -> float:
        return self.relax.eps

    @property
    def c(self) -> float:
        return self.relax.c

    def params(self):
        """Ensemble parameters with beta solved at E for the Gibbs case."""
        if self.ensemble.kind == "mc":
            return MicrocanonicalParams(self.E, self.ensemble.w)
        return GibbsParams(solve_beta(self.spectrum.eigenvalues, self.E))

    def relaxation_value(self) -> float:
        r = self.relax
        A = orbit_observable_matrix(r.orbit, self.observable)
        return infinite_time_average_spectral(r.spectrum(), A)


def initial_energy(H: sp.spmatrix, index: int) -> float:
    """<psi0|H|psi0> for a basis state."""
    return float(np.real(H[index, index]))


def estimate_a2_weight(
    tuned: TunedHamiltonian,
    H: sp.spmatrix,
    sd: SpectralDecomposition | None,
    ens,
    source: str = "exact",
    seed: int | None = None,
    qsim_eps: float = 0.01,
) -> float:
    """tr(|a2><a2|_1 rho) by exact traces or by the prepare-and-measure route."""
    if source == "exact":
        return tuned_ensemble_expectation(tuned, sd, 1.0, 0.0, ens, H).a2_weight
    if source != "qsim":
        raise ValueError(f"unknown A_hat source {source!r}")
    if not isinstance(ens, MicrocanonicalParams):
        raise ValueError("the qsim route prepares microcanonical states only")
    h = tuned.doubled
    dim = h.d**h.N
    if dim > QSIM_PREP_BUDGET:
        raise BudgetExceeded(f"dense preparation limited to dimension {QSIM_PREP_BUDGET}, got {dim}")
    A = np.diag(site_diagonal(h.N, h.d, 0, [tuned.base.basis.index(A2)]))
    return estimate_mc_observable(H.toarray(), A, ens.E, ens.w, qsim_eps, seed=seed).estimate


def build_tuned_instance(
    tm1,
    x: str = "",
    N: int = 4,
    alpha="1/2",
    ensemble: ThermEnsemble | None = None,
    A_hat_source: str = "exact",
    eps: float | None = None,
    c: float = 2.0,
    seed: int | None = None,
    qsim_eps: float = 0.01,
) -> FSThermInstance:
    ensemble = ensemble or ThermEnsemble()
    relax = build_hardness_instance(tm1, x, N, alpha, padded=True, eps=eps, c=c)
    tuned = build_tuned_hamiltonian(relax.hamiltonian)
    dim = tuned.d**N
    if dim > TUNED_BUDGET:
        raise BudgetExceeded(f"doubled space of dimension {dim} exceeds {TUNED_BUDGET}")
    H = sparse_hamiltonian(tuned.doubled)
    sd = block_eigensystem(H)
    probe = FSThermInstance(relax, tuned, H, sd, ensemble, 0.0, TuningResult(1.0, 0.5, 0.0, 0.0), relax.observable)
    return with_ensemble(probe, ensemble, A_hat_source, seed, qsim_eps)


def with_ensemble(
    inst: FSThermInstance,
    ensemble: ThermEnsemble,
    A_hat_source: str = "exact",
    seed: int | None = None,
    qsim_eps: float = 0.01,
) -> FSThermInstance:
    """Re-tune an instance for another ensemble, reusing its spectrum."""
    relax, tuned, H, sd = inst.relax, inst.tuned, inst.H, inst.spectrum
    psi0 = tuned.doubled.index(relax.orbit.configs[0].sites)
    E = initial_energy(H, psi0) if ensemble.E is None else float(ensemble.E)
    probe = replace(inst, ensemble=ensemble, E=E)
    A_hat = estimate_a2_weight(tuned, H, sd, probe.params(), A_hat_source, seed, qsim_eps)
    tuning = tune_p(A_hat, relax.alpha, relax.delta, A_hat_source)
    obs = IntensiveObservable(tuned_site_observable(relax.machine, tuning.p, tuning.q), relax.N)
    return replace(probe, tuning=tuning, observable=obs)


def ensemble_target(inst: FSThermInstance) -> float:
    t = inst.tuning
    return tuned_ensemble_expectation(inst.tuned, inst.spectrum, t.p, t.q, inst.params(), inst.H).value


def decide_fstherm(inst: FSThermInstance, method: Method | str = Method.EXACT) -> Verdict:
    method = Method(method)
    if method is not Method.EXACT:
        raise ValueError("thermal targets are evaluated by exact traces only")
    target = ensemble_target(inst)
    v = inst.relaxation_value()
    out = classify(v, target, inst.eps, inst.c)
    return Verdict(out, v, target, inst.eps, inst.c, f"exact-{inst.ensemble.kind}", 0.0, {"p": inst.tuning.p})


def gibbs_uniform_check(inst: FSThermInstance) -> float:
    """Distance between the beta = 0 Gibbs expectation and tr(A)/dim."""
    t = inst.tuning
    res = tuned_ensemble_expectation(inst.tuned, inst.spectrum, t.p, t.q, GibbsParams(0.0), inst.H)
    return abs(res.value - (t.q / 2 + t.p / inst.tuned.doubled.d))


def a2_weights(inst: FSThermInstance) -> np.ndarray:
    h = inst.tuned.doubled
    k = inst.tuned.base.basis.index(A2)
    return eigen_diagonal(inst.spectrum, site_diagonal(h.N, h.d, 0, [k]))


def ensemble_weights_of(inst: FSThermInstance) -> np.ndarray:
    return ensemble_weights(inst.spectrum.eigenvalues, inst.params()).weights


# ---------------------------------------------------------------- corpus


@dataclass(frozen=True)
class CorpusEntry:
    machine: str
    x: str
    N: int
    alpha: str
    padded: bool = False
    expect: Outcome = Outcome.YES

    @property
    def label(self) -> str:
        return f"{self.machine}{'/padded' if self.padded else ''} N={self.N} alpha={self.alpha}"


def default_corpus() -> tuple[CorpusEntry, ...]:
    """Halting and looping toys on rings of 8 and 12 sites at alpha 1/2 and 1/4."""
    out = []
    for name in toys.HALTING:
        out += [CorpusEntry(name, "", 8, "1/2"), CorpusEntry(name, "", 8, "1/4"), CorpusEntry(name, "", 12, "1/2")]
    for name in toys.LOOPING:
        out += [CorpusEntry(name, "", 8, "1/2", expect=Outcome.NO), CorpusEntry(name, "", 8, "1/4", expect=Outcome.NO)]
    return tuple(out)


CORPUS_FIELDS = ("instance", "kind", "T", "T_h", "value", "target", "outcome", "expected", "qsim_tally")


def run_entry(entry: CorpusEntry, seeds=()) -> dict:
    inst = build_hardness_instance(entry.machine, entry.x, entry.N, entry.alpha, entry.padded)
    v = decide_fsrelax(inst)
    row = {
        "instance": entry.label,
        "kind": inst.orbit.kind.value,
        "T": inst.T,
        "T_h": "" if inst.T_h is None else inst.T_h,
        "value": repr(v.value),
        "target": repr(v.target),
        "outcome": v.outcome.value,
        "expected": entry.expect.value,
        "qsim_tally": "",
    }
    if seeds:
        _, tally = decide_fsrelax_majority(inst, seeds)
        row["qsim_tally"] = " ".join(f"{k}:{n}" for k, n in tally.items())
    return row


def run_corpus(entries=None, seeds=(), workers: int = 1) -> list[dict]:
    """Each entry is independent; with workers > 1 they run in separate processes."""
    entries = tuple(default_corpus() if entries is None else entries)
    if workers <= 1:
        return [run_entry(e, seeds) for e in entries]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(run_entry, entries, [tuple(seeds)] * len(entries)))


def rows_to_csv(rows, fields=None) -> str:
    rows = list(rows)
    fields = fields or (tuple(rows[0]) if rows else ())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
