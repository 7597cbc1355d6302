"""Small reversible machines used by tests, examples and the CLI corpus."""

from __future__ import annotations

from .tm_model import ReversibleTM, Rule, Step, TMProgram, compile_program


def _steps(rows):
    return tuple(Step(*row) for row in rows)


def marker_walk() -> TMProgram:
    """Marks the first cell, moves to the next M-cell, writes there and halts."""
    return TMProgram(
        states=("q0", "q1", "h"),
        m_symbols=("0", "1"),
        blank="0",
        initial="q0",
        halting=("h",),
        steps=_steps(
            [
                ("q0", "0", "q1", "1", "R"),
                ("q0", "1", "q1", "0", "R"),
                ("q1", "0", "h", "1", "R"),
                ("q1", "1", "h", "0", "R"),
            ]
        ),
        name="marker_walk",
    )


def unary_scan() -> TMProgram:
    """Stamps the first cell with ``x``, runs right over 1s, halts on the first 0.

    The halting time grows with the length of the leading run of 1s.  On a
    ring completely filled with 1s the scan comes back to the stamp and gets
    stuck without halting.
    """
    return TMProgram(
        states=("q0", "q1", "h"),
        m_symbols=("0", "1", "x"),
        blank="0",
        initial="q0",
        halting=("h",),
        steps=_steps(
            [
                ("q0", "1", "q1", "x", "R"),
                ("q0", "0", "h", "x", "R"),
                ("q1", "1", "q1", "1", "R"),
                ("q1", "0", "h", "0", "R"),
            ]
        ),
        name="unary_scan",
    )


def two_state() -> TMProgram:
    """Smallest halting shape: one write in q0, then halt (|Q_u| = |Gamma_u| = 2)."""
    return TMProgram(
        states=("q0", "h"),
        m_symbols=("0", "1"),
        blank="0",
        initial="q0",
        halting=("h",),
        steps=_steps([("q0", "0", "h", "1", "R"), ("q0", "1", "h", "0", "R")]),
        name="two_state",
    )


def left_bounce() -> TMProgram:
    """Goes right once, then left, then halts; exercises left moves and skips."""
    return TMProgram(
        states=("q0", "q1", "h"),
        m_symbols=("0", "1"),
        blank="0",
        initial="q0",
        halting=("h",),
        steps=_steps(
            [
                ("q0", "0", "q1", "1", "R"),
                ("q0", "1", "q1", "0", "R"),
                ("q1", "0", "h", "1", "L"),
                ("q1", "1", "h", "0", "L"),
            ]
        ),
        name="left_bounce",
    )


def right_rotor() -> TMProgram:
    """One state that moves right forever and never writes."""
    return TMProgram(
        states=("q0",),
        m_symbols=("0", "1"),
        blank="0",
        initial="q0",
        halting=(),
        steps=_steps([("q0", "0", "q0", "0", "R"), ("q0", "1", "q0", "1", "R")]),
        name="right_rotor",
    )


def left_rotor() -> TMProgram:
    return TMProgram(
        states=("q0",),
        m_symbols=("0", "1"),
        blank="0",
        initial="q0",
        halting=(),
        steps=_steps([("q0", "0", "q0", "0", "L"), ("q0", "1", "q0", "1", "L")]),
        name="left_rotor",
    )


def toggler() -> TMProgram:
    """Moves right flipping every bit; loops since two laps restore the tape."""
    return TMProgram(
        states=("q0",),
        m_symbols=("0", "1"),
        blank="0",
        initial="q0",
        halting=(),
        steps=_steps([("q0", "0", "q0", "1", "R"), ("q0", "1", "q0", "0", "R")]),
        name="toggler",
    )


def blank_rotor() -> TMProgram:
    """Single state, single symbol, moves right: the smallest looping machine."""
    return TMProgram(
        states=("q0",),
        m_symbols=("0",),
        blank="0",
        initial="q0",
        halting=(),
        steps=_steps([("q0", "0", "q0", "0", "R")]),
        name="blank_rotor",
    )


def morita_shaped(n_states: int = 10, n_symbols: int = 8) -> TMProgram:
    """A reversible program with URTM alphabet sizes (used for dimension counts)."""
    qs = tuple(f"q{i}" for i in range(n_states - 1)) + ("h",)
    syms = tuple(f"s{j}" for j in range(n_symbols))
    rows = []
    for i in range(n_states - 1):
        for s in syms:
            rows.append((qs[i], s, qs[i + 1], s, "R"))
    return TMProgram(qs, syms, syms[0], qs[0], ("h",), _steps(rows), name="morita_shaped")


def flipper() -> ReversibleTM:
    """Raw 2-site machine: one head walks right turning a1 into a2, stops on a2.

    Local dimension 4, so dense checks on it are cheap.
    """
    rules = (
        Rule(("r", "a1"), ("a2", "r"), "M"),
        Rule(("r", "m"), ("m", "r"), "M"),
    )
    return ReversibleTM(
        states=("r",),
        m_symbols=("m",),
        a_symbols=("a1", "a2"),
        rules=rules,
        initial="r",
        blank="m",
        name="flipper",
    )


def right_mover() -> ReversibleTM:
    """The compiled one-state right mover over a single blank symbol."""
    return compile_program(blank_rotor())


HALTING = {
    "marker_walk": marker_walk,
    "unary_scan": unary_scan,
    "two_state": two_state,
    "left_bounce": left_bounce,
}

LOOPING = {
    "right_rotor": right_rotor,
    "left_rotor": left_rotor,
    "toggler": toggler,
    "blank_rotor": blank_rotor,
}
