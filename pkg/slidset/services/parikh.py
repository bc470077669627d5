"""
Automata with Presburger side constraints.

The counting layer of a formula talks about values (x, min(S), max(S),
card(S)) that an automaton cannot compare on its own. Tracker automata make
these values visible as transition counts: run in product with the core
automaton, the number of transitions taken while a tracker sits in a given
state is a linear function of the value it tracks. Emptiness is then an
existential Presburger question over transition counts, with flow and
connectivity constraints describing which count vectors come from a run.
"""
from __future__ import annotations

import itertools
import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from slidset.core.errors import UnexpressibleTerm
from slidset.core.formula import (
    Card, CountAtom, DivAtom, EmptySet, Formula, IntVar, Max, Min, Not, SetVar, linearize,
)
from slidset.core.printer import show
from slidset.services.automata import (
    Letter, Nfa, cube_letter, lit, make_nfa, product_many,
)
from slidset.services.models import Unsat
from slidset.services.presburger import (
    QTRUE, Lin, QfpaFormula, QNot, lin_atom, lin_div, qand, qfpa_sat, qor,
)
from slidset.services.translate import neg_name, pos_name

logger = logging.getLogger(__name__)

# Tracker states
P_BEFORE, P_AFTER = 0, 1
Q_BEFORE, Q_INSIDE, Q_AFTER = 0, 1, 2


@dataclass(frozen=True)
class Tracker:
    track: str
    kind: Literal["int", "set"]
    nfa: Nfa


@dataclass(frozen=True)
class PresburgerAutomaton:
    """An automaton whose runs must also satisfy ``psi`` over the variables ``t<i>``,
    the number of times transition i is taken."""

    nfa: Nfa
    psi: QfpaFormula = QTRUE
    trackers: tuple[Tracker, ...] = ()
    states: tuple[tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class Witness:
    word: tuple[Letter, ...]
    counts: dict[str, int] = field(default_factory=dict)


def edge_var(i: int) -> str:
    return f"t{i}"


# === Trackers ===

def int_tracker(track: str) -> Nfa:
    """Sits in P_BEFORE up to and including the position of ``track``."""
    return make_nfa(2, [P_BEFORE], [P_AFTER], [
        (P_BEFORE, lit(track, False), P_BEFORE),
        (P_BEFORE, lit(track), P_AFTER),
        (P_AFTER, lit(track, False), P_AFTER),
    ])


def set_tracker(track: str) -> Nfa:
    """Q_BEFORE until the first element, Q_INSIDE up to the last one, Q_AFTER past it."""
    return make_nfa(3, [Q_BEFORE], [Q_BEFORE, Q_AFTER], [
        (Q_BEFORE, lit(track, False), Q_BEFORE),
        (Q_BEFORE, lit(track), Q_INSIDE),
        (Q_BEFORE, lit(track), Q_AFTER),
        (Q_INSIDE, lit(track, False), Q_INSIDE),
        (Q_INSIDE, lit(track), Q_INSIDE),
        (Q_INSIDE, lit(track), Q_AFTER),
        (Q_AFTER, lit(track, False), Q_AFTER),
    ])


def build_trackers(int_tracks: Iterable[str], set_tracks: Iterable[str]) -> list[Tracker]:
    trackers = [Tracker(t, "int", int_tracker(t)) for t in sorted(set(int_tracks))]
    trackers += [Tracker(s, "set", set_tracker(s)) for s in sorted(set(set_tracks))]
    return trackers


class _Counters:
    """Linear expressions over transition counts for every tracked value."""

    def __init__(self, nfa: Nfa, states: Sequence[tuple[int, ...]], trackers: Sequence[Tracker]):
        self.nfa = nfa
        self.states = states
        self.slot = {t.track: i + 1 for i, t in enumerate(trackers)}

    def _sum(self, keep) -> Lin:
        return Lin.of({edge_var(i): 1 for i, e in enumerate(self.nfa.transitions) if keep(*e)})

    def _from(self, track: str, components: tuple[int, ...]) -> Lin:
        k = self.slot[track]
        return self._sum(lambda s, c, d: self.states[s][k] in components)

    def value(self, track: str) -> Lin:
        return self._from(track, (P_BEFORE,)) - Lin.constant(1)

    def minimum(self, track: str) -> Lin:
        return self._from(track, (Q_BEFORE,)) - Lin.constant(1)

    def maximum(self, track: str) -> Lin:
        return self._from(track, (Q_BEFORE, Q_INSIDE)) - Lin.constant(1)

    def nonempty(self, track: str) -> Lin:
        """1 when the tracked set has an element, else 0."""
        k = self.slot[track]
        return self._sum(lambda s, c, d: self.states[s][k] != Q_AFTER and self.states[d][k] == Q_AFTER)

    def card(self, track: str) -> Lin:
        return self._sum(lambda s, c, d: (track, True) in c)


# === Count literals ===

def _is_count(f: Formula) -> bool:
    return isinstance(f, (CountAtom, DivAtom)) or (isinstance(f, Not) and _is_count(f.arg))


def _atom_of(literal: Formula) -> CountAtom | DivAtom:
    return literal.arg if isinstance(literal, Not) else literal


def _split(name: str, split: bool, nonneg: frozenset[str]) -> tuple[str, str | None]:
    if not split:
        return name, None
    return pos_name(name), None if name in nonneg else neg_name(name)


def count_tracks(
    literals: Iterable[Formula], split: bool = True, nonneg: Iterable[str] = (),
) -> tuple[set[str], set[str]]:
    """Integer and set tracks that the trackers of ``literals`` must follow."""
    nonneg = frozenset(nonneg)
    ints: set[str] = set()
    sets: set[str] = set()
    for literal in literals:
        coeffs, _ = linearize(_atom_of(literal).term)
        for item in coeffs:
            if isinstance(item, IntVar):
                ints.update(t for t in _split(item.name, split, nonneg) if t)
            elif isinstance(item.arg, SetVar):
                sets.update(t for t in _split(item.arg.name, split, nonneg) if t)
            elif not isinstance(item.arg, EmptySet):
                raise UnexpressibleTerm(f"Count term {show(item)} must range over a set variable")
    return ints, sets


def _options(item, counters: _Counters, split: bool, nonneg: frozenset[str]) -> list[tuple[QfpaFormula, Lin]]:
    """Alternative (condition, value) readings of one count item; none when undefined."""
    if isinstance(item, IntVar):
        p, n = _split(item.name, split, nonneg)
        value = counters.value(p) - (counters.value(n) if n else Lin())
        return [(QTRUE, value)]
    if isinstance(item.arg, EmptySet):
        return [(QTRUE, Lin())] if isinstance(item, Card) else []
    p, n = _split(item.arg.name, split, nonneg)
    if isinstance(item, Card):
        return [(QTRUE, counters.card(p) + (counters.card(n) if n else Lin()))]

    def has(track: str, flag: int) -> QfpaFormula:
        return lin_atom(counters.nonempty(track) - Lin.constant(flag), "=")

    if isinstance(item, Min):
        if n is None:
            return [(has(p, 1), counters.minimum(p))]
        return [
            (has(n, 1), -counters.maximum(n)),
            (qand(has(n, 0), has(p, 1)), counters.minimum(p)),
        ]
    if isinstance(item, Max):
        if n is None:
            return [(has(p, 1), counters.maximum(p))]
        return [
            (has(p, 1), counters.maximum(p)),
            (qand(has(p, 0), has(n, 1)), -counters.minimum(n)),
        ]
    raise UnexpressibleTerm(f"Unsupported count item {show(item)}")


def literal_to_qfpa(
    literal: Formula, counters: _Counters, split: bool = True, nonneg: frozenset[str] = frozenset(),
) -> QfpaFormula:
    atom = _atom_of(literal)
    coeffs, const = linearize(atom.term)
    items = sorted(coeffs, key=show)
    choices = [_options(item, counters, split, nonneg) for item in items]
    branches = []
    for combo in itertools.product(*choices):
        expr = Lin.constant(const)
        for item, (_, value) in zip(items, combo):
            expr = expr + value * coeffs[item]
        if isinstance(atom, CountAtom):
            test = lin_atom(expr, atom.op)
        else:
            test = lin_div(expr - Lin.constant(atom.residue), atom.modulus)
        branches.append(qand([cond for cond, _ in combo], test))
    positive = qor(branches)
    return QNot(positive) if isinstance(literal, Not) else positive


def assemble_pa(
    core: Nfa,
    count: Sequence[Formula],
    nonneg: Iterable[str] = (),
    split: bool = True,
    limit: int | None = None,
) -> PresburgerAutomaton:
    """Product of ``core`` with the trackers of ``count`` and the matching constraint.

    With ``split`` the literals speak about integers and every variable x is
    read from the sign tracks ``x#p``/``x#n``; otherwise variables are
    tracks holding natural numbers.
    """
    nonneg = frozenset(nonneg)
    for literal in count:
        if not _is_count(literal):
            raise UnexpressibleTerm(f"{show(literal)} is not a count literal")
    if not count:
        return PresburgerAutomaton(core)
    int_tracks, set_tracks = count_tracks(count, split, nonneg)
    trackers = build_trackers(int_tracks, set_tracks)
    nfa, states = product_many([core] + [t.nfa for t in trackers], limit)
    counters = _Counters(nfa, states, trackers)
    psi = qand(literal_to_qfpa(literal, counters, split, nonneg) for literal in count)
    logger.debug(f"Presburger automaton with {nfa.size} states, {len(nfa.transitions)} transitions, "
                 f"{len(trackers)} trackers")
    return PresburgerAutomaton(nfa, psi, tuple(trackers), tuple(states))


# === Emptiness ===

def parikh_formula(nfa: Nfa) -> QfpaFormula:
    """Transition-count vectors of accepting runs: flow balance plus connectivity.

    Transition i is counted by ``t<i>``. The auxiliary variables ``s<q>`` and
    ``f<q>`` pick the initial and final state of the run, and ``d<q>`` orders
    the visited states along a spanning tree rooted at the initial one. All
    variables are constrained to be nonnegative.
    """
    incoming: dict[int, list[int]] = defaultdict(list)
    outgoing: dict[int, list[int]] = defaultdict(list)
    for i, (s, _, d) in enumerate(nfa.transitions):
        outgoing[s].append(i)
        incoming[d].append(i)

    def total(edges: list[int]) -> Lin:
        return Lin.of({edge_var(i): 1 for i in edges})

    start = {q: f"s{q}" for q in sorted(nfa.initial)}
    stop = {q: f"f{q}" for q in sorted(nfa.finals)}
    depth = {q: f"d{q}" for q in range(nfa.size)}
    parts: list[QfpaFormula] = [
        lin_atom(Lin.of({v: 1 for v in start.values()}) - Lin.constant(1), "="),
        lin_atom(Lin.of({v: 1 for v in stop.values()}) - Lin.constant(1), "="),
    ]
    parts += [lin_atom(Lin.var(v) - Lin.constant(1), "<=") for v in [*start.values(), *stop.values()]]
    for q in range(nfa.size):
        s_q = Lin.var(start[q]) if q in start else Lin()
        f_q = Lin.var(stop[q]) if q in stop else Lin()
        parts.append(lin_atom(total(outgoing[q]) - total(incoming[q]) - s_q + f_q, "="))
        entered = lin_atom(total(incoming[q]) - Lin.constant(1), ">=")
        reached = [
            qand(
                lin_atom(Lin.var(edge_var(i)) - Lin.constant(1), ">="),
                lin_atom(Lin.var(depth[nfa.transitions[i][0]]) - Lin.var(depth[q]) + Lin.constant(1), "<="),
            )
            for i in incoming[q] if nfa.transitions[i][0] != q
        ]
        if q in start:
            parts.append(qor(lin_atom(s_q, "<="), lin_atom(Lin.var(depth[q]), "=")))
            parts.append(qor(QNot(entered), lin_atom(s_q - Lin.constant(1), "="), qor(reached)))
        elif incoming[q]:
            parts.append(qor(QNot(entered), qor(reached)))
    variables = [edge_var(i) for i in range(len(nfa.transitions))]
    variables += [*start.values(), *stop.values(), *depth.values()]
    parts += [lin_atom(Lin.var(v), ">=") for v in variables]
    return qand(parts)


def _euler_path(nfa: Nfa, counts: dict[int, int], start: int) -> list[int]:
    """Walk using every transition exactly ``counts[i]`` times, lowest index first."""
    remaining = dict(counts)
    out: dict[int, list[int]] = defaultdict(list)
    for i in sorted(remaining):
        if remaining[i] > 0:
            out[nfa.transitions[i][0]].append(i)
    cursor: dict[int, int] = defaultdict(int)
    stack = [start]
    trail: list[int] = []
    circuit: list[int] = []
    while stack:
        q = stack[-1]
        edges = out[q]
        while cursor[q] < len(edges) and remaining[edges[cursor[q]]] == 0:
            cursor[q] += 1
        if cursor[q] < len(edges):
            i = edges[cursor[q]]
            remaining[i] -= 1
            stack.append(nfa.transitions[i][2])
            trail.append(i)
        else:
            stack.pop()
            if trail:
                circuit.append(trail.pop())
    return list(reversed(circuit))


def _shortest_run(nfa: Nfa) -> list[int] | None:
    parent: dict[int, tuple[int, int] | None] = {q: None for q in nfa.initial}
    queue = deque(sorted(nfa.initial))
    while queue:
        q = queue.popleft()
        if q in nfa.finals:
            run: list[int] = []
            while parent[q] is not None:
                prev, i = parent[q]
                run.append(i)
                q = prev
            return list(reversed(run))
        for i, (s, _, d) in enumerate(nfa.transitions):
            if s == q and d not in parent:
                parent[d] = (q, i)
                queue.append(d)
    return None


def _witness(nfa: Nfa, run: list[int]) -> Witness:
    counts: dict[str, int] = defaultdict(int)
    for i in run:
        counts[edge_var(i)] += 1
    word = tuple(cube_letter(nfa.transitions[i][1]) for i in run)
    return Witness(word, dict(counts))


def pa_emptiness(pa: PresburgerAutomaton, timeout_ms: int | None = None) -> Witness | Unsat:
    """An accepted word whose transition counts satisfy ``psi``, or UNSAT."""
    nfa = pa.nfa
    shortest = _shortest_run(nfa)
    if shortest is None:
        return Unsat(reason="empty automaton")
    if pa.psi == QTRUE:
        return _witness(nfa, shortest)
    solution = qfpa_sat(qand(parikh_formula(nfa), pa.psi), timeout_ms=timeout_ms)
    if isinstance(solution, Unsat):
        logger.debug("No accepting run satisfies the counting constraint")
        return Unsat(reason="counting constraint")
    counts = {i: solution.get(edge_var(i), 0) for i in range(len(nfa.transitions))}
    start = next(q for q in sorted(nfa.initial) if solution.get(f"s{q}", 0) == 1)
    run = _euler_path(nfa, counts, start)
    if len(run) != sum(counts.values()):
        logger.error("Transition counts do not form a single run")
        raise UnexpressibleTerm("Transition counts do not form a single run")
    logger.debug(f"Counting witness of length {len(run)}")
    return _witness(nfa, run)
