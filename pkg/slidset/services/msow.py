"""
Natural-number formulas as automata.

A model over the naturals is written as a word: position i of the word is
the letter holding every track whose value contains i. Integer tracks
occupy exactly one position, set tracks any number of them. Trailing empty
letters carry no information, so every language built here is closed under
adding and removing them.

Atoms are compiled into small automata directly: letter-wise inclusions are
one-state automata, integer comparisons are counters of size proportional
to the constant. Terms such as min(T), max(T) or a constant singleton are
given an auxiliary track (named ``@k``), constrained by a gadget automaton
and projected away once the atom is built.
"""
from __future__ import annotations

import itertools
import logging
from typing import Iterable, Sequence

from slidset.core.errors import SlidsetError, UnexpressibleTerm
from slidset.core.evaluation import BoundedModel
from slidset.core.formula import (
    And, CountAtom, DivAtom, EmptySet, Exists, FalseF, Forall, Formula, Iff, Implies,
    IntCmp, IntConst, IntVar, Max, Member, Min, Not, Or, SetCmp, SetDiff, SetInter,
    SetUnion, SetVar, Singleton, Spacing, TrueF,
)
from slidset.core.printer import show
from slidset.core.transform import compare, desugar
from slidset.services.automata import (
    TOP, Cube, Letter, Nfa, complement, cube_and, empty, lit, make_nfa, product,
    product_many, project, trim, union, universal,
)

logger = logging.getLogger(__name__)

_FLIP = {"=": "=", "<=": ">=", ">=": "<="}


# === Letter predicates ===
# A predicate is a small Boolean expression over tracks, read at one position:
# ("var", name) | ("true",) | ("false",) | ("not", e) | ("and", a, b) | ("or", a, b)

def _dnf(e: tuple, positive: bool = True) -> list[Cube]:
    tag = e[0]
    if tag == "var":
        return [lit(e[1], positive)]
    if tag == "true":
        return [TOP] if positive else []
    if tag == "false":
        return [] if positive else [TOP]
    if tag == "not":
        return _dnf(e[1], not positive)
    conjunctive = (tag == "and") == positive
    left, right = _dnf(e[1], positive), _dnf(e[2], positive)
    if not conjunctive:
        return list(dict.fromkeys(left + right))
    out = []
    for a, b in itertools.product(left, right):
        joined = cube_and(a, b)
        if joined is not None and joined not in out:
            out.append(joined)
    return out


def _with(c: Cube, cubes: Iterable[Cube]) -> list[Cube]:
    return [j for j in (cube_and(c, d) for d in cubes) if j is not None]


# === Gadgets ===

def single(track: str) -> Nfa:
    """Words holding ``track`` at exactly one position."""
    return make_nfa(2, [0], [1], [
        (0, lit(track, False), 0),
        (0, lit(track), 1),
        (1, lit(track, False), 1),
    ])


def _min_gadget(m: str, pred: tuple) -> Nfa:
    """``m`` marks the first position satisfying ``pred``."""
    transitions = [(0, c, 0) for c in _with(lit(m, False), _dnf(pred, False))]
    transitions += [(0, c, 1) for c in _with(lit(m), _dnf(pred))]
    transitions.append((1, lit(m, False), 1))
    return make_nfa(2, [0], [1], transitions)


def _max_gadget(m: str, pred: tuple) -> Nfa:
    """``m`` marks the last position satisfying ``pred``."""
    transitions = [(0, lit(m, False), 0)]
    transitions += [(0, c, 1) for c in _with(lit(m), _dnf(pred))]
    transitions += [(1, c, 1) for c in _with(lit(m, False), _dnf(pred, False))]
    return make_nfa(2, [0], [1], transitions)


def _const_gadget(m: str, value: int) -> Nfa:
    """``m`` marks position ``value`` and nothing else."""
    transitions = [(i, lit(m, False), i + 1) for i in range(value)]
    transitions += [(value, lit(m), value + 1), (value + 1, lit(m, False), value + 1)]
    return make_nfa(value + 2, [0], [value + 1], transitions)


def _track_vs_const(t: str, op: str, k: int) -> Nfa:
    """Position of ``t`` compared with the constant ``k``."""
    cap = max(k, -1) + 1
    done = cap + 1
    transitions = [(i, lit(t, False), min(i + 1, cap)) for i in range(cap + 1)]
    transitions += [(i, lit(t), done) for i in range(cap + 1) if compare(i, op, k)]
    transitions.append((done, lit(t, False), done))
    return make_nfa(done + 1, [0], [done], transitions)


def _track_vs_track(a: str, op: str, b: str, c: int) -> Nfa:
    """Position of ``a`` compared with position of ``b`` plus ``c``.

    States: 0 before either track, 1..cap after ``a`` only (distance
    saturating at cap), cap+1..2cap after ``b`` only, 2cap+1 accepting.
    """
    cap = abs(c) + 1
    ok = 2 * cap + 1
    na, nb = lit(a, False), lit(b, False)
    neither = cube_and(na, nb)
    transitions = [(0, neither, 0), (ok, neither, ok)]
    if compare(0, op, c):
        transitions.append((0, lit(a) | lit(b), ok))
    transitions += [(0, lit(a) | nb, 1), (0, lit(b) | na, cap + 1)]
    for d in range(1, cap + 1):
        after_a, after_b = d, cap + d
        transitions.append((after_a, nb, min(d + 1, cap)))
        transitions.append((after_b, na, cap + min(d + 1, cap)))
        if compare(-d, op, c):
            transitions.append((after_a, lit(b), ok))
        if compare(d, op, c):
            transitions.append((after_b, lit(a), ok))
    return make_nfa(ok + 1, [0], [ok], [e for e in transitions if e[1] is not None])


def _spacing(pred: tuple, low: int, high: int | None) -> Nfa:
    """Consecutive positions satisfying ``pred`` are ``low`` to ``high`` apart.

    State 0 is before the first such position; state d counts the positions
    since the last one, saturating at ``cap``.
    """
    low = max(low, 1)
    cap = low if high is None else max(low, high + 1)
    inside, outside = _dnf(pred), _dnf(pred, False)
    transitions = [(0, c, 0) for c in outside] + [(0, c, 1) for c in inside]
    for d in range(1, cap + 1):
        transitions += [(d, c, min(d + 1, cap)) for c in outside]
        if low <= d and (high is None or d <= high):
            transitions += [(d, c, 1) for c in inside]
    return make_nfa(cap + 1, [0], range(cap + 1), transitions)


# === Compiler ===

class MsowCompiler:
    """Compiles natural-number formulas with no count atoms into automata."""

    def __init__(self, limit: int | None = None):
        self.limit = limit
        self._aux = itertools.count(1)

    def compile(self, f: Formula) -> Nfa:
        """Automaton of ``f``; every free integer track is held at exactly one position."""
        automaton = self._formula(f, True)
        for name in sorted(v.name for v in f.free if isinstance(v, IntVar)):
            automaton = trim(product(automaton, single(name), self.limit))
        logger.debug(f"Compiled formula into {automaton.size} states")
        return automaton

    def _formula(self, f: Formula, positive: bool) -> Nfa:
        if isinstance(f, TrueF):
            return universal() if positive else empty()
        if isinstance(f, FalseF):
            return empty() if positive else universal()
        if isinstance(f, Not):
            return self._formula(f.arg, not positive)
        if isinstance(f, (And, Or)):
            parts = [self._formula(a, positive) for a in f.args]
            if isinstance(f, And) == positive:
                result = parts[0]
                for p in parts[1:]:
                    result = trim(product(result, p, self.limit))
                return result
            result = parts[0]
            for p in parts[1:]:
                result = union(result, p)
            return result
        if isinstance(f, Implies):
            return self._formula(Or((Not(f.left), f.right)), positive)
        if isinstance(f, Iff):
            both = And((f.left, f.right))
            neither = And((Not(f.left), Not(f.right)))
            return self._formula(Or((both, neither)), positive)
        if isinstance(f, (Exists, Forall)):
            return self._quantifier(f, positive)
        automaton = self._atom(f)
        return automaton if positive else complement(automaton, self.limit)

    def _quantifier(self, f, positive: bool) -> Nfa:
        # forall v. g is the complement of exists v. not g
        existential = isinstance(f, Exists)
        body = self._formula(f.body, existential)
        if isinstance(f.var, IntVar):
            body = product(body, single(f.var.name), self.limit)
        projected = trim(project(body, f.var.name))
        if existential == positive:
            return projected
        return complement(projected, self.limit)

    # --- atoms ---

    def _atom(self, a: Formula) -> Nfa:
        if isinstance(a, (CountAtom, DivAtom)):
            logger.error(f"Count atom {show(a)} reached the automaton layer")
            raise UnexpressibleTerm(f"Count atom {show(a)} cannot be compiled into an automaton")
        if isinstance(a, Member) or (isinstance(a, (SetCmp, IntCmp)) and a.op in ("<", ">")):
            return self._formula(desugar(a), True)
        gadgets: list[Nfa] = []
        aux: list[str] = []
        if isinstance(a, SetCmp):
            core = self._set_cmp(a, gadgets, aux)
        elif isinstance(a, IntCmp):
            core = self._int_cmp(a, gadgets, aux)
        elif isinstance(a, Spacing):
            core = _spacing(self._pred(a.set, gadgets, aux), a.low, a.high)
        else:
            raise SlidsetError(f"Cannot compile {a!r}")
        if not gadgets:
            return core
        result, _ = product_many([core] + gadgets, self.limit)
        for name in aux:
            result = project(result, name)
        return trim(result)

    def _set_cmp(self, a: SetCmp, gadgets: list[Nfa], aux: list[str]) -> Nfa:
        left = self._pred(a.left, gadgets, aux)
        right = self._pred(a.right, gadgets, aux)
        if a.op == ">=":
            left, right = right, left
        inside = ("or", ("not", left), right)
        if a.op == "=":
            inside = ("and", inside, ("or", ("not", right), left))
        return make_nfa(1, [0], [0], [(0, c, 0) for c in _dnf(inside)])

    def _int_cmp(self, a: IntCmp, gadgets: list[Nfa], aux: list[str]) -> Nfa:
        if isinstance(a.left, IntConst) and isinstance(a.right, IntConst):
            holds = compare(a.left.value, a.op, a.right.value + a.offset)
            return universal() if holds else empty()
        if isinstance(a.left, IntConst):
            t = self._int_track(a.right, gadgets, aux)
            return _track_vs_const(t, _FLIP[a.op], a.left.value - a.offset)
        left = self._int_track(a.left, gadgets, aux)
        if isinstance(a.right, IntConst):
            return _track_vs_const(left, a.op, a.right.value + a.offset)
        right = self._int_track(a.right, gadgets, aux)
        if left == right:
            return universal() if compare(0, a.op, a.offset) else empty()
        return _track_vs_track(left, a.op, right, a.offset)

    def _fresh(self, aux: list[str]) -> str:
        name = f"@{next(self._aux)}"
        aux.append(name)
        return name

    def _int_track(self, t, gadgets: list[Nfa], aux: list[str]) -> str:
        if isinstance(t, IntVar):
            return t.name
        if isinstance(t, IntConst):
            if t.value < 0:
                raise UnexpressibleTerm(f"Negative constant {t.value} has no position")
            m = self._fresh(aux)
            gadgets.append(_const_gadget(m, t.value))
            return m
        if isinstance(t, (Min, Max)):
            pred = self._pred(t.arg, gadgets, aux)
            m = self._fresh(aux)
            gadgets.append(_min_gadget(m, pred) if isinstance(t, Min) else _max_gadget(m, pred))
            return m
        raise SlidsetError(f"Not an integer term: {t!r}")

    def _pred(self, t, gadgets: list[Nfa], aux: list[str]) -> tuple:
        if isinstance(t, EmptySet):
            return ("false",)
        if isinstance(t, SetVar):
            return ("var", t.name)
        if isinstance(t, Singleton):
            return ("var", self._int_track(t.elem, gadgets, aux))
        left = self._pred(t.left, gadgets, aux)
        right = self._pred(t.right, gadgets, aux)
        if isinstance(t, SetUnion):
            return ("or", left, right)
        if isinstance(t, SetInter):
            return ("and", left, right)
        if isinstance(t, SetDiff):
            return ("and", left, ("not", right))
        raise SlidsetError(f"Not a set term: {t!r}")


def msow_to_nfa(f: Formula, limit: int | None = None) -> Nfa:
    """Automaton accepting exactly the word encodings of the natural-number models of ``f``."""
    return MsowCompiler(limit).compile(f)


# === Words and models ===

def encode_word(m: BoundedModel, length: int | None = None) -> list[Letter]:
    """Word of a natural-number model; ``length`` defaults to the shortest that fits."""
    used = [v for v in m.ints.values()] + [v for s in m.sets.values() for v in s]
    if any(v < 0 for v in used):
        raise SlidsetError("Only natural-number models have a word encoding")
    needed = max(used, default=-1) + 1
    length = needed if length is None else length
    if length < needed:
        raise SlidsetError(f"Word length {length} is too short for values up to {needed - 1}")
    word: list[set[str]] = [set() for _ in range(length)]
    for name, value in m.ints.items():
        word[value].add(name)
    for name, values in m.sets.items():
        for value in values:
            word[value].add(name)
    return [frozenset(letter) for letter in word]


def decode_word(word: Sequence[Letter], int_tracks: Iterable[str], set_tracks: Iterable[str]) -> BoundedModel:
    """Natural-number model of a word; each integer track must occur exactly once."""
    ints: dict[str, int] = {}
    for name in int_tracks:
        positions = [i for i, letter in enumerate(word) if name in letter]
        if len(positions) != 1:
            raise SlidsetError(f"Track {name} occurs {len(positions)} times in the word")
        ints[name] = positions[0]
    sets = {name: frozenset(i for i, letter in enumerate(word) if name in letter) for name in set_tracks}
    return BoundedModel(universe=max(len(word) - 1, 0), ints=ints, sets=sets, domain="nat")
