"""Reversible Turing machines on a periodic ring of sites.

A configuration is a tuple of ``N`` site values.  Exactly one site holds a
control state (the head); every other site holds a tape symbol.  The head
always scans the site to its right.  Transition rules are 2-site patterns
``(x, y) -> (x', y')`` applied to ordered pairs of ring neighbours, which is
what makes the compiled Hamiltonian 2-local.

High level programs (:class:`TMProgram`) are written as ordinary TM
instructions ``state symbol -> state' symbol' L|R`` and compiled into
substep rules: a W substep that rewrites the scanned cell and changes the
control state, followed by an M substep that moves the head.  Compiled
programs step over A-cells without touching them.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .errors import LayoutError, MalformedConfig, NotReversible, OrbitBudgetExceeded

A1 = "a1"
A2 = "a2"
RETURN_STATE = "r"
BUFFER_STATE = "b"
BUFFER_CARRY = "b'"
RETURN_TURN = "r'"


class OrbitKind(str, Enum):
    PATH = "PATH"
    CYCLE = "CYCLE"


class _Halted:
    def __repr__(self):
        return "HALTED"


HALTED = _Halted()


def wstate(q: str) -> str:
    return f"{q}.W"


def mstate(q: str) -> str:
    return f"{q}.M"


def ustate(q: str) -> str:
    # traversal copy used by the padded machine
    return f"{q}.U"


def reversed_name(s: str) -> str:
    return "~" + s


def anchor(sym: str) -> str:
    return sym + "^"


def marker(sym: str) -> str:
    return sym + "*"


@dataclass(frozen=True)
class Rule:
    """A 2-site rewrite ``lhs -> rhs`` tagged as a W or M substep."""

    lhs: tuple[str, str]
    rhs: tuple[str, str]
    tag: str = "W"

    def inverse(self) -> "Rule":
        return Rule(self.rhs, self.lhs, self.tag)

    def __str__(self):
        return f"{self.tag} {self.lhs[0]} {self.lhs[1]} -> {self.rhs[0]} {self.rhs[1]}"


@dataclass(frozen=True)
class Step:
    """One instruction of a high level machine."""

    state: str
    symbol: str
    new_state: str
    new_symbol: str
    move: str  # "L" or "R"


@dataclass(frozen=True)
class TMProgram:
    """A user machine given as ordinary TM instructions over M-symbols."""

    states: tuple[str, ...]
    m_symbols: tuple[str, ...]
    blank: str
    initial: str
    halting: tuple[str, ...]
    steps: tuple[Step, ...]
    name: str = ""

    def directions(self) -> dict[str, str]:
        """Move direction attached to each state that some instruction enters."""
        out: dict[str, str] = {}
        for s in self.steps:
            out.setdefault(s.new_state, s.move)
        return out


@dataclass(frozen=True)
class ReversibleTM:
    """A machine given directly by its 2-site substep rules."""

    states: tuple[str, ...]
    m_symbols: tuple[str, ...]
    a_symbols: tuple[str, ...]
    rules: tuple[Rule, ...]
    initial: str
    blank: str
    halt_marker: str | None = None
    pad_symbols: tuple[tuple[str, str], ...] = ()  # (symbol, "M" | "A")
    counts: tuple[tuple[str, int], ...] = ()
    name: str = ""
    program: TMProgram | None = field(default=None, compare=False, repr=False)

    @cached_property
    def symbols(self) -> tuple[str, ...]:
        return self.m_symbols + self.a_symbols + tuple(s for s, _ in self.pad_symbols)

    @cached_property
    def alphabet(self) -> tuple[str, ...]:
        """Local basis order: control states first, then tape symbols."""
        return self.states + self.symbols

    @property
    def d(self) -> int:
        return len(self.alphabet)

    @cached_property
    def state_set(self) -> frozenset[str]:
        return frozenset(self.states)

    @cached_property
    def symbol_kind(self) -> dict[str, str]:
        kinds = {s: "M" for s in self.m_symbols}
        kinds.update({s: "A" for s in self.a_symbols})
        kinds.update(dict(self.pad_symbols))
        return kinds

    @cached_property
    def forward(self) -> dict[tuple[str, str], tuple[str, str]]:
        return {r.lhs: r.rhs for r in self.rules}

    @cached_property
    def backward(self) -> dict[tuple[str, str], tuple[str, str]]:
        return {r.rhs: r.lhs for r in self.rules}

    def count(self, key: str) -> int | None:
        return dict(self.counts).get(key)


@dataclass(frozen=True)
class TMConfig:
    sites: tuple[str, ...]
    head: int

    @property
    def N(self) -> int:
        return len(self.sites)

    @property
    def state(self) -> str:
        return self.sites[self.head]

    @property
    def tape(self) -> tuple[str | None, ...]:
        return tuple(None if i == self.head else s for i, s in enumerate(self.sites))

    def __str__(self):
        return " ".join(f"[{s}]" if i == self.head else s for i, s in enumerate(self.sites))


@dataclass(frozen=True)
class Orbit:
    configs: tuple[TMConfig, ...]
    kind: OrbitKind
    T_h: int | None = None

    @property
    def T(self) -> int:
        return len(self.configs)


@dataclass(frozen=True)
class TapeRing:
    """Ring of ``N`` sites with a fraction ``alpha`` of M-slots.

    Slots come in blocks of ``1/alpha``: one M-slot followed by A-cells.  The
    head sits in the M-slot of the last block, so a fresh ring has
    ``alpha*N - 1`` M-cells and ``(1 - alpha)*N`` A-cells.
    """

    N: int
    alpha: Fraction

    def __post_init__(self):
        a = Fraction(self.alpha)
        object.__setattr__(self, "alpha", a)
        if self.N < 2:
            raise LayoutError("a ring needs at least 2 sites")
        if not (0 < a <= 1):
            raise LayoutError(f"alpha must lie in (0, 1], got {a}")
        if (1 / a).denominator != 1:
            raise LayoutError(f"1/alpha must be an integer, got alpha={a}")
        if (a * self.N).denominator != 1:
            raise LayoutError(f"alpha*N must be an integer (alpha={a}, N={self.N})")

    @property
    def block(self) -> int:
        return int(1 / self.alpha)

    @property
    def n_m(self) -> int:
        return int(self.alpha * self.N) - 1

    @property
    def n_a(self) -> int:
        return self.N - int(self.alpha * self.N)

    @cached_property
    def layout(self) -> tuple[str, ...]:
        """Per-site tags of a fresh ring: 'H' for the head slot, then 'M'/'A'."""
        b = self.block
        tags = ["H"]
        for _ in range(self.n_m):
            tags += ["M"] + ["A"] * (b - 1)
        tags += ["A"] * (b - 1)
        assert len(tags) == self.N
        return tuple(tags)


# ---------------------------------------------------------------- validation


def _program_diagnostics(prog: TMProgram) -> list[str]:
    diags = []
    known_states = set(prog.states)
    known_syms = set(prog.m_symbols)
    if prog.blank not in known_syms:
        diags.append(f"blank {prog.blank!r} is not an M-symbol")
    if prog.initial not in known_states:
        diags.append(f"initial state {prog.initial!r} is not declared")
    for h in prog.halting:
        if h not in known_states:
            diags.append(f"halting state {h!r} is not declared")
    for s in prog.steps:
        for q in (s.state, s.new_state):
            if q not in known_states:
                diags.append(f"unknown state {q!r} in {s}")
        for a in (s.symbol, s.new_symbol):
            if a not in known_syms:
                diags.append(f"unknown symbol {a!r} in {s}")
        if s.move not in ("L", "R"):
            diags.append(f"move must be L or R in {s}")
        if s.state in prog.halting:
            diags.append(f"halting state {s.state!r} has an outgoing instruction")
    by_lhs = defaultdict(list)
    by_rhs = defaultdict(list)
    moves = defaultdict(set)
    for s in prog.steps:
        by_lhs[(s.state, s.symbol)].append(s)
        by_rhs[(s.new_state, s.new_symbol)].append(s)
        moves[s.new_state].add(s.move)
    for k, group in by_lhs.items():
        if len(group) > 1:
            diags.append(f"forward collision on {k}: {group}")
    for k, group in by_rhs.items():
        if len(group) > 1:
            diags.append(f"backward collision on {k}: {group}")
    for q, dirs in moves.items():
        if len(dirs) > 1 and q not in prog.halting:
            diags.append(f"state {q!r} is entered with both move directions")
    return diags


def validate_reversibility(tm: ReversibleTM | TMProgram) -> list[str]:
    """Return a list of problems; an empty list means the machine is reversible.

    Besides plain left/right-hand collisions this flags a state that occurs in
    the first slot of one pattern and the second slot of another on the same
    side.  With a single head that is the only other way two rules can fire
    on (or lead into) the same configuration.
    """
    if isinstance(tm, TMProgram):
        diags = _program_diagnostics(tm)
        if diags:
            return diags
        tm = compile_program(tm)
    diags = []
    states = tm.state_set
    for r in tm.rules:
        for side, pat in (("left", r.lhs), ("right", r.rhs)):
            n_heads = sum(x in states for x in pat)
            if n_heads != 1:
                diags.append(f"{side}-hand side of '{r}' holds {n_heads} heads")
            for x in pat:
                if x not in states and x not in tm.symbol_kind:
                    diags.append(f"'{r}' uses undeclared value {x!r}")
    for side, key in (("forward", lambda r: r.lhs), ("backward", lambda r: r.rhs)):
        groups = defaultdict(list)
        slots = defaultdict(set)
        for r in tm.rules:
            pat = key(r)
            groups[pat].append(r)
            for i, x in enumerate(pat):
                if x in states:
                    slots[x].add(i)
        for pat, group in groups.items():
            for i in range(len(group)):
                for j in range(i + 1, len(group)):
                    diags.append(f"{side} collision: '{group[i]}' vs '{group[j]}'")
        for q, where in slots.items():
            if len(where) > 1:
                diags.append(f"{side} ambiguity: state {q!r} appears in both pattern slots")
    return diags


# ---------------------------------------------------------------- dynamics


def locate_head(tm: ReversibleTM, sites: Sequence[str]) -> int:
    heads = [i for i, x in enumerate(sites) if x in tm.state_set]
    if len(heads) != 1:
        raise MalformedConfig(f"expected exactly one head, found {len(heads)}")
    for i, x in enumerate(sites):
        if i != heads[0] and x not in tm.symbol_kind:
            raise MalformedConfig(f"site {i} holds unknown value {x!r}")
    return heads[0]


def make_config(tm: ReversibleTM, sites: Iterable[str]) -> TMConfig:
    sites = tuple(sites)
    return TMConfig(sites, locate_head(tm, sites))


def check_layout(tm: ReversibleTM, c: TMConfig, ring: TapeRing) -> None:
    """Raise MalformedConfig unless the tape's M/A pattern fits the ring."""
    if c.N != ring.N:
        raise MalformedConfig(f"config has {c.N} sites, ring has {ring.N}")
    want = [t for t in ring.layout if t != "H"]
    got = [tm.symbol_kind[c.sites[(c.head + k) % c.N]] for k in range(1, c.N)]
    n = len(want)
    if not any(got == want[k:] + want[:k] for k in range(n or 1)):
        raise MalformedConfig("symbol kinds do not match the ring's M/A layout")


def _apply(tm, c: TMConfig, table) -> TMConfig | _Halted:
    h = locate_head(tm, c.sites)
    n = c.N
    i_r, i_l = (h + 1) % n, (h - 1) % n
    hits = []
    key = (c.sites[h], c.sites[i_r])
    if key in table:
        hits.append((h, i_r, table[key]))
    key = (c.sites[i_l], c.sites[h])
    if key in table:
        hits.append((i_l, h, table[key]))
    if not hits:
        return HALTED
    if len(hits) > 1:
        raise NotReversible(f"two rules apply to {c}")
    i, j, (x, y) = hits[0]
    sites = list(c.sites)
    sites[i], sites[j] = x, y
    head = i if x in tm.state_set else j
    return TMConfig(tuple(sites), head)


def step(tm: ReversibleTM, c: TMConfig) -> TMConfig | _Halted:
    """Apply the unique matching rule, or return HALTED."""
    return _apply(tm, c, tm.forward)


def step_back(tm: ReversibleTM, c: TMConfig) -> TMConfig | _Halted:
    """Undo one substep; HALTED when ``c`` has no predecessor."""
    return _apply(tm, c, tm.backward)


def default_max_steps(tm: ReversibleTM, N: int) -> int:
    return 10 * tm.d**N


def orbit(tm: ReversibleTM, c0: TMConfig, max_steps: int | None = None) -> Orbit:
    """Enumerate w_0, w_1, ... until the machine halts or returns to w_0."""
    if max_steps is None:
        max_steps = default_max_steps(tm, c0.N)
    c0 = make_config(tm, c0.sites)
    configs = [c0]
    seen = {c0.sites}
    cur = c0
    while True:
        nxt = step(tm, cur)
        if nxt is HALTED:
            kind = OrbitKind.PATH
            break
        if nxt.sites == c0.sites:
            kind = OrbitKind.CYCLE
            break
        if nxt.sites in seen:
            raise NotReversible("orbit re-entered a configuration other than w_0")
        if len(configs) >= max_steps:
            raise OrbitBudgetExceeded(f"no halt or return within {max_steps} substeps")
        seen.add(nxt.sites)
        configs.append(nxt)
        cur = nxt
    t_h = None
    if kind is OrbitKind.PATH and tm.halt_marker is not None:
        t_h = next((k for k, c in enumerate(configs) if c.state == tm.halt_marker), None)
    return Orbit(tuple(configs), kind, t_h)


def a2_counts(orbit: Orbit, symbol: str = A2) -> list[int]:
    return [sum(x == symbol for x in c.sites) for c in orbit.configs]


def initial_configuration(
    tm: ReversibleTM, x: str | Sequence[str], N: int, alpha: Fraction | str | float
) -> TMConfig:
    """Head in the initial state at site 0, input on the M-cells, A-cells at a1."""
    try:
        ring = TapeRing(N, Fraction(alpha))
    except (TypeError, ValueError) as exc:
        raise LayoutError(str(exc)) from exc
    if isinstance(x, str):
        word = x.split() if " " in x else list(x)
    else:
        word = list(x)
    if len(word) > ring.n_m:
        raise LayoutError(f"input of length {len(word)} does not fit on {ring.n_m} M-cells")
    for s in word:
        if s not in tm.m_symbols:
            raise LayoutError(f"input symbol {s!r} is not an M-symbol")
    if ring.n_a and not tm.a_symbols:
        raise LayoutError("ring has A-cells but the machine has no A-symbols")
    fill = iter(word + [tm.blank] * (ring.n_m - len(word)))
    sites = []
    for tag in ring.layout:
        if tag == "H":
            sites.append(tm.initial)
        elif tag == "M":
            sites.append(next(fill))
        else:
            sites.append(tm.a_symbols[0])
    return TMConfig(tuple(sites), 0)


# ---------------------------------------------------------------- compilers


def _check_names(states: Iterable[str], symbols: Iterable[str]) -> None:
    clash = set(states) & set(symbols)
    if clash:
        raise MalformedConfig(f"names used as both state and symbol: {sorted(clash)}")


def _program_rules(prog: TMProgram, a_symbols: Sequence[str]) -> list[Rule]:
    dirs = prog.directions()
    halting = set(prog.halting)
    everything = list(prog.m_symbols) + list(a_symbols)
    rules = [
        Rule((wstate(s.state), s.symbol), (mstate(s.new_state), s.new_symbol), "W")
        for s in prog.steps
    ]
    for q in prog.states:
        if q in halting or q not in dirs:
            continue
        for a in a_symbols:
            rules.append(Rule((wstate(q), a), (mstate(q), a), "W"))
        for x in everything:
            if dirs[q] == "R":
                rules.append(Rule((mstate(q), x), (x, wstate(q)), "M"))
            else:
                rules.append(Rule((x, mstate(q)), (wstate(q), x), "M"))
    return rules


def _phase_states(prog: TMProgram) -> tuple[str, ...]:
    return tuple(f(q) for q in prog.states for f in (wstate, mstate))


def compile_program(prog: TMProgram, a_symbols: Sequence[str] = ()) -> ReversibleTM:
    """Split each instruction into W and M substeps; A-cells are stepped over."""
    diags = _program_diagnostics(prog)
    if diags:
        raise NotReversible("; ".join(diags))
    states = _phase_states(prog)
    _check_names(states, list(prog.m_symbols) + list(a_symbols))
    marker_state = mstate(prog.halting[0]) if len(prog.halting) == 1 else None
    return ReversibleTM(
        states=states,
        m_symbols=tuple(prog.m_symbols),
        a_symbols=tuple(a_symbols),
        rules=tuple(_program_rules(prog, a_symbols)),
        initial=wstate(prog.initial),
        blank=prog.blank,
        halt_marker=marker_state,
        counts=(("Q_u", len(prog.states)), ("Gamma_u", len(prog.m_symbols))),
        name=prog.name,
        program=prog,
    )


def _as_program(tm1: TMProgram | ReversibleTM) -> TMProgram:
    if isinstance(tm1, TMProgram):
        return tm1
    if tm1.program is None:
        raise NotReversible("machine was not compiled from a TMProgram; cannot reverse it")
    return tm1.program


def _composite_parts(tm1):
    prog = _as_program(tm1)
    diags = _program_diagnostics(prog)
    if diags:
        raise NotReversible("; ".join(diags))
    if len(prog.halting) > 1:
        raise NotReversible("the glue into TM2 needs a single halting state")
    forward = _program_rules(prog, (A1, A2))
    rev = {s: reversed_name(s) for s in _phase_states(prog)}

    def flip(rule: Rule) -> Rule:
        inv = rule.inverse()
        return Rule(
            tuple(rev.get(x, x) for x in inv.lhs), tuple(rev.get(x, x) for x in inv.rhs), rule.tag
        )

    return prog, forward, flip


def build_composite_machine(tm1: TMProgram | ReversibleTM) -> ReversibleTM:
    """Glue TM1, the A-cell flipper TM2 and the reverse runner TM3.

    TM1 halts in ``h.M`` right after its last write, scanning an M-cell whose
    left neighbour is an A-cell.  The glue rule turns the head into the
    flipper ``r``, which walks right once around the ring turning a1 into a2,
    passes the halting cell a second time and stops on the first a2 it meets.
    Two otherwise unused phase states bring the head back one cell so that
    TM3, the exact inverse of TM1 with renamed states, starts on the cell
    where TM1 stopped.  TM3 ends in the reversed initial state, which has no
    outgoing rule when no instruction enters TM1's initial state.
    """
    prog, forward, flip = _composite_parts(tm1)
    reverse = [flip(r) for r in forward]
    rules = forward + reverse
    if prog.halting:
        h = prog.halting[0]
        back_w, back_m = reversed_name(wstate(h)), reversed_name(mstate(h))
        rules.append(Rule((A1, mstate(h)), (A1, RETURN_STATE), "W"))
        rules.append(Rule((RETURN_STATE, A1), (A2, RETURN_STATE), "M"))
        rules += [Rule((RETURN_STATE, x), (x, RETURN_STATE), "M") for x in prog.m_symbols]
        rules.append(Rule((RETURN_STATE, A2), (back_w, A2), "W"))
        rules += [Rule((x, back_w), (back_m, x), "M") for x in prog.m_symbols]
    phase = _phase_states(prog)
    states = phase + tuple(reversed_name(s) for s in phase) + (RETURN_STATE,)
    _check_names(states, list(prog.m_symbols) + [A1, A2])
    n_q, n_g = len(prog.states), len(prog.m_symbols)
    return ReversibleTM(
        states=states,
        m_symbols=tuple(prog.m_symbols),
        a_symbols=(A1, A2),
        rules=tuple(rules),
        initial=wstate(prog.initial),
        blank=prog.blank,
        halt_marker=mstate(prog.halting[0]) if prog.halting else None,
        counts=(("Q_u", n_q), ("Q_rev", n_q), ("Gamma_u", n_g)),
        name=f"composite({prog.name})",
        program=prog,
    )


def build_padded_machine(tm1: TMProgram | ReversibleTM) -> ReversibleTM:
    """Composite machine whose TM3 part is stretched.

    Before TM3 starts, a buffer loops around the ring once per tape cell.
    The halting M-cell is replaced by its anchor copy ``x^`` and a marked
    copy of a symbol (``y*``) advances one cell per lap until it reaches the
    anchor, so at most one A-cell is out of the a2 state at any time.
    Inside TM3 every reversed write puts down a marked copy of the restored
    symbol and the head, in a traversal copy of its state, circles the ring
    until it finds the mark again.
    """
    prog, forward, flip = _composite_parts(tm1)
    n_fwd_w = len(prog.steps)
    rules = list(forward)
    u_states = []
    plain = list(prog.m_symbols) + [A1, A2]
    for k, r in enumerate(forward):
        back = flip(r)
        if k < n_fwd_w:
            # back.lhs = (~q.M, s'), back.rhs = (~p.W, s)
            p_w, s = back.rhs
            u = p_w[:-2] + ".U"
            rules.append(Rule(back.lhs, (marker(s), u), "W"))
            if u not in u_states:
                u_states.append(u)
        else:
            rules.append(back)
    for q in prog.states:
        u = reversed_name(ustate(q))
        if u not in u_states:
            u_states.append(u)
    for u in u_states:
        w = u[:-2] + ".W"
        rules += [Rule((u, x), (x, u), "M") for x in plain]
        rules += [Rule((u, marker(y)), (w, y), "W") for y in prog.m_symbols]
    if prog.halting:
        h = prog.halting[0]
        back_m = reversed_name(mstate(h))
        rules.append(Rule((A1, mstate(h)), (A1, RETURN_STATE), "W"))
        rules.append(Rule((RETURN_STATE, A1), (A2, RETURN_STATE), "M"))
        rules += [Rule((RETURN_STATE, x), (x, RETURN_STATE), "M") for x in prog.m_symbols]
        rules.append(Rule((RETURN_STATE, A2), (RETURN_TURN, A2), "W"))
        rules += [Rule((x, RETURN_TURN), (anchor(x), BUFFER_CARRY), "W") for x in prog.m_symbols]
        carried = list(prog.m_symbols) + [A2]
        rules += [Rule((BUFFER_CARRY, y), (marker(y), BUFFER_STATE), "M") for y in carried]
        passed = carried + [anchor(x) for x in prog.m_symbols]
        rules += [Rule((BUFFER_STATE, x), (x, BUFFER_STATE), "M") for x in passed]
        rules += [Rule((BUFFER_STATE, marker(y)), (y, BUFFER_CARRY), "M") for y in carried]
        rules += [Rule((BUFFER_CARRY, anchor(x)), (back_m, x), "M") for x in prog.m_symbols]
    phase = _phase_states(prog)
    rev_states = tuple(reversed_name(s) for s in phase)
    rev_u = tuple(reversed_name(ustate(q)) for q in prog.states)
    states = phase + rev_states + rev_u + (RETURN_STATE, RETURN_TURN, BUFFER_STATE, BUFFER_CARRY)
    pads = (
        tuple((marker(y), "M") for y in prog.m_symbols)
        + tuple((anchor(y), "M") for y in prog.m_symbols)
        + ((marker(A2), "A"),)
    )
    _check_names(states, plain + [s for s, _ in pads])
    n_q, n_g = len(prog.states), len(prog.m_symbols)
    return ReversibleTM(
        states=states,
        m_symbols=tuple(prog.m_symbols),
        a_symbols=(A1, A2),
        rules=tuple(rules),
        initial=wstate(prog.initial),
        blank=prog.blank,
        halt_marker=mstate(prog.halting[0]) if prog.halting else None,
        pad_symbols=pads,
        counts=(("Q_u", n_q), ("Q_rev", n_q), ("Gamma_u", n_g)),
        name=f"padded({prog.name})",
        program=prog,
    )


def local_dimension_formula(q_u: int, q_rev: int, gamma_u: int, doublings: int = 0) -> int:
    """2(|Q_u|+|Q_rev|) + 1 + |Gamma_u| + 2, doubled ``doublings`` times."""
    return (2 * (q_u + q_rev) + 1 + gamma_u + 2) * 2**doublings


def symbol_histogram(c: TMConfig) -> Counter:
    return Counter(c.tape[i] for i in range(c.N) if i != c.head)
