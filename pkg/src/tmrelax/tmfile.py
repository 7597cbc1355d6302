"""Plain-text machine descriptions and orbit dumps.

Grammar (one item per line, ``#`` starts a comment, blank lines ignored)::

    format: program | substep      (optional, default program)
    name: <word>                   (optional)
    states: <name> <name> ...
    initial: <state>
    halt: <state> ...              (program format; may be empty)
    halt_marker: <state>           (substep format; optional)
    blank: <symbol>
    m_symbols: <symbol> ...
    a_symbols: <symbol> ...        (substep format; optional)
    rules:
    <rule line>
    ...

A program rule reads ``q s -> q2 s2 D`` with ``D`` in ``L``/``R``: in state
``q`` scanning ``s``, write ``s2``, enter ``q2`` and move.  It compiles into a
W substep (write + state change) and an M substep (move); A-cells are
stepped over.  A substep rule reads ``T x y -> x2 y2`` with tag ``T`` in
``W``/``M`` and describes one 2-site rewrite of neighbouring sites (left
site first).  Exactly one of ``x``, ``y`` and one of ``x2``, ``y2`` must be a
state.

Everything after ``rules:`` is read as rules.  Names are whitespace-free
tokens and a name may not be both a state and a symbol.
"""

from __future__ import annotations

from pathlib import Path

from .errors import SpecParseError
from .tm_model import Orbit, ReversibleTM, Rule, Step, TMProgram, compile_program

_KEYS = {"format", "name", "states", "initial", "halt", "halt_marker", "blank", "m_symbols", "a_symbols"}


def parse_machine(text: str) -> TMProgram | ReversibleTM:
    fields: dict[str, list[str]] = {}
    rules: list[list[str]] = []
    in_rules = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if in_rules:
            rules.append(line.split())
            continue
        if ":" not in line:
            raise SpecParseError(f"line {lineno}: expected 'key: value', got {raw!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        if key == "rules":
            in_rules = True
            continue
        if key not in _KEYS:
            raise SpecParseError(f"line {lineno}: unknown key {key!r}")
        fields[key] = value.split()

    def one(key, default=None):
        vals = fields.get(key)
        if not vals:
            if default is not None:
                return default
            raise SpecParseError(f"missing required key {key!r}")
        if len(vals) != 1:
            raise SpecParseError(f"key {key!r} takes exactly one value")
        return vals[0]

    fmt = one("format", "program")
    name = one("name", "")
    states = tuple(fields.get("states", ()))
    m_syms = tuple(fields.get("m_symbols", ()))
    if not states or not m_syms:
        raise SpecParseError("'states' and 'm_symbols' must be non-empty")
    if fmt == "program":
        steps = []
        for toks in rules:
            if len(toks) != 6 or toks[2] != "->" or toks[5] not in ("L", "R"):
                raise SpecParseError(f"bad program rule {' '.join(toks)!r}")
            steps.append(Step(toks[0], toks[1], toks[3], toks[4], toks[5]))
        return TMProgram(
            states=states,
            m_symbols=m_syms,
            blank=one("blank"),
            initial=one("initial"),
            halting=tuple(fields.get("halt", ())),
            steps=tuple(steps),
            name=name,
        )
    if fmt == "substep":
        parsed = []
        for toks in rules:
            if len(toks) != 6 or toks[3] != "->" or toks[0] not in ("W", "M"):
                raise SpecParseError(f"bad substep rule {' '.join(toks)!r}")
            parsed.append(Rule((toks[1], toks[2]), (toks[4], toks[5]), toks[0]))
        marker = fields.get("halt_marker")
        return ReversibleTM(
            states=states,
            m_symbols=m_syms,
            a_symbols=tuple(fields.get("a_symbols", ())),
            rules=tuple(parsed),
            initial=one("initial"),
            blank=one("blank"),
            halt_marker=marker[0] if marker else None,
            name=name,
        )
    raise SpecParseError(f"unknown format {fmt!r}")


def load_machine(path: str | Path) -> TMProgram | ReversibleTM:
    return parse_machine(Path(path).read_text())


def as_machine(obj: TMProgram | ReversibleTM) -> ReversibleTM:
    return compile_program(obj) if isinstance(obj, TMProgram) else obj


def format_program(prog: TMProgram) -> str:
    lines = [
        "format: program",
        f"name: {prog.name}" if prog.name else "",
        "states: " + " ".join(prog.states),
        f"initial: {prog.initial}",
        "halt: " + " ".join(prog.halting),
        f"blank: {prog.blank}",
        "m_symbols: " + " ".join(prog.m_symbols),
        "rules:",
    ]
    lines += [f"{s.state} {s.symbol} -> {s.new_state} {s.new_symbol} {s.move}" for s in prog.steps]
    return "\n".join(x for x in lines if x) + "\n"


def format_machine(tm: ReversibleTM) -> str:
    """Substep-format text for any machine, including compiled composites."""
    pads = [s for s, _ in tm.pad_symbols]
    lines = [
        "format: substep",
        f"name: {tm.name}" if tm.name else "",
        "states: " + " ".join(tm.states),
        f"initial: {tm.initial}",
        f"halt_marker: {tm.halt_marker}" if tm.halt_marker else "",
        f"blank: {tm.blank}",
        "m_symbols: " + " ".join(tm.m_symbols),
        "a_symbols: " + " ".join(list(tm.a_symbols) + pads) if (tm.a_symbols or pads) else "",
        "rules:",
    ]
    lines += [str(r) for r in tm.rules]
    return "\n".join(x for x in lines if x) + "\n"


def dump_orbit(orb: Orbit) -> str:
    """One configuration per line, head shown in brackets."""
    head = f"# kind={orb.kind.value} T={orb.T} T_h={orb.T_h}"
    return "\n".join([head] + [f"{k}\t{c}" for k, c in enumerate(orb.configs)]) + "\n"
