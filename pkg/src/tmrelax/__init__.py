"""Relaxation and thermalization of translation-invariant ring Hamiltonians built from reversible Turing machines."""

from .errors import TMRelaxError
from .harness import (
    FSRelaxInstance,
    FSThermInstance,
    Method,
    Outcome,
    ThermEnsemble,
    Verdict,
    build_hardness_instance,
    build_tuned_instance,
    decide_fsrelax,
    decide_fstherm,
    decide_ftfsrelax,
    with_ensemble,
)

__version__ = "0.1.0"
