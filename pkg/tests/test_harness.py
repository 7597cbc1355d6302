from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tmrelax import toys
from tmrelax.errors import BudgetExceeded, PromiseUnknown, TauTooSmall
from tmrelax.ensembles import MicrocanonicalParams
from tmrelax.harness import (
    CorpusEntry,
    FSRelaxInstance,
    Method,
    Outcome,
    ThermEnsemble,
    Verdict,
    build_hardness_instance,
    build_tuned_instance,
    classify,
    decide_fsrelax,
    decide_fsrelax_majority,
    decide_fstherm,
    decide_ftfsrelax,
    default_corpus,
    default_eps,
    ensemble_target,
    estimate_a2_weight,
    gibbs_uniform_check,
    machine_name,
    resolve_machine,
    rows_to_csv,
    run_corpus,
    tau_threshold,
)
from tmrelax.tmfile import format_program


@given(value=st.floats(-10, 10), target=st.floats(-10, 10), eps=st.floats(1e-3, 1), c=st.floats(1.01, 5))
def test_classify_partitions_the_line(value, target, eps, c):
    dev = abs(value - target)
    out = classify(value, target, eps, c)
    assert (out is Outcome.YES) == (dev <= eps)
    assert (out is Outcome.NO) == (dev >= c * eps)


def test_exit_codes():
    assert [o.exit_code for o in Outcome] == [0, 1, 2]


def test_verdict_gap_margin_sign():
    assert Verdict(Outcome.YES, 0.1, 0.12, 0.05, 2).gap_margin == pytest.approx(0.03)
    assert Verdict(Outcome.NO, 0.0, 0.3, 0.05, 2).gap_margin == pytest.approx(0.2)
    assert Verdict(Outcome.PROMISE_VIOLATED, 0.0, 0.07, 0.05, 2).gap_margin < 0
    assert set(Verdict(Outcome.YES, 0, 0, 1, 2).row()) == {"outcome", "method", "value", "target", "eps", "c", "gap_margin"}


def test_resolve_machine(tmp_path):
    assert resolve_machine("two_state") == toys.two_state()
    f = tmp_path / "mine.tm"
    f.write_text(format_program(toys.toggler()))
    assert resolve_machine(str(f)) == toys.toggler()
    assert machine_name(str(f)) == "mine"
    assert resolve_machine(toys.flipper()) == toys.flipper()
    with pytest.raises(ValueError):
        resolve_machine("no_such_machine")


def test_instance_validation():
    inst = build_hardness_instance("two_state")
    with pytest.raises(ValueError):
        FSRelaxInstance(**{**inst.__dict__, "c": 1.0})
    with pytest.raises(ValueError):
        FSRelaxInstance(**{**inst.__dict__, "eps": 0.0})
    with pytest.raises(ValueError):
        FSRelaxInstance(**{**inst.__dict__, "alpha": Fraction(1, 3)})


def test_default_eps():
    assert default_eps("1/2") == 1 / 16
    assert default_eps(Fraction(1, 4)) == 3 / 32


@pytest.mark.parametrize("entry", default_corpus(), ids=lambda e: e.label)
def test_corpus_exact_verdicts(entry):
    inst = build_hardness_instance(entry.machine, entry.x, entry.N, entry.alpha, entry.padded)
    v = decide_fsrelax(inst)
    assert v.outcome is entry.expect
    assert inst.gap_ok()
    if entry.expect is Outcome.NO:
        assert v.value == 0.0


def test_qsim_verdict_agrees_with_exact():
    inst = build_hardness_instance("two_state")
    v = decide_fsrelax(inst, Method.QSIM, seed=0)
    assert v.outcome is Outcome.YES and v.margin == inst.eps / 4
    best, tally = decide_fsrelax_majority(build_hardness_instance("toggler"), range(5))
    assert best is Outcome.NO and tally["NO"] == 5


def test_qsim_reports_unknown_inside_the_gap():
    inst = build_hardness_instance("two_state", A_star=None)
    exact = inst.exact_average()
    # a target 1.5 eps away sits strictly inside the undecided band
    shifted = FSRelaxInstance(**{**inst.__dict__, "A_star": exact + 1.5 * inst.eps})
    with pytest.raises(PromiseUnknown):
        decide_fsrelax(shifted, Method.QSIM, seed=1, shots=None, eps_prime=inst.eps / 16)
    assert decide_fsrelax(shifted).outcome is Outcome.PROMISE_VIOLATED


def test_finite_time_decision():
    inst = build_hardness_instance("two_state")
    tau0 = tau_threshold(inst, float(np.linalg.norm(inst.orbit_observable(), 2)))
    with pytest.raises(TauTooSmall):
        decide_ftfsrelax(inst, tau0 / 2)
    v = decide_ftfsrelax(inst, 4 * tau0)
    assert v.outcome is Outcome.YES
    assert v.margin < (inst.c - 1) * inst.eps / 2
    assert abs(v.value - inst.exact_average()) <= v.margin
    with pytest.raises(ValueError):
        decide_ftfsrelax(inst, 0.0)


def test_therm_ensemble_validation():
    with pytest.raises(ValueError):
        ThermEnsemble("canonical")
    with pytest.raises(ValueError):
        ThermEnsemble("mc", w=0.0)


@pytest.fixture(scope="module")
def tuned_halting():
    return build_tuned_instance("two_state", N=4)


def test_tuned_instance_structure(tuned_halting):
    inst = tuned_halting
    assert inst.E == 0.0
    assert inst.tuning.p == pytest.approx(1 / (4 * (1 - 0.5) - 2 * inst.tuning.A_hat))
    # exact tuning leaves the tuned observable's ensemble value where the formula puts it
    assert gibbs_uniform_check(inst) <= 1e-10
    v = decide_fstherm(inst)
    assert v.target == pytest.approx(ensemble_target(inst))
    assert v.value == pytest.approx(inst.relaxation_value())
    with pytest.raises(ValueError):
        decide_fstherm(inst, Method.QSIM)


def test_a2_weight_sources(tuned_halting):
    inst = tuned_halting
    ens = MicrocanonicalParams(0.0, 1.0)
    with pytest.raises(BudgetExceeded):
        estimate_a2_weight(inst.tuned, inst.H, inst.spectrum, ens, "qsim")
    with pytest.raises(ValueError):
        estimate_a2_weight(inst.tuned, inst.H, inst.spectrum, ens, "guess")


def test_corpus_rows_and_csv():
    entries = [CorpusEntry("two_state", "", 8, "1/2"), CorpusEntry("toggler", "", 8, "1/2", expect=Outcome.NO)]
    rows = run_corpus(entries, seeds=(0, 1))
    assert [r["outcome"] for r in rows] == ["YES", "NO"]
    assert rows[1]["qsim_tally"].startswith("YES:0 NO:2")
    text = rows_to_csv(rows)
    assert text.splitlines()[0].startswith("instance,kind,T")
    assert len(text.splitlines()) == 3


def test_corpus_parallel_matches_serial():
    entries = [CorpusEntry("two_state", "", 8, "1/4"), CorpusEntry("marker_walk", "", 8, "1/2")]
    assert run_corpus(entries, workers=2) == run_corpus(entries)
