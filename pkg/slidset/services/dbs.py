"""
Difference-bound set relations.

A relation links a source set S and a target set S' through a set part
``S = S' u T_s`` (or the reversed ``S' = S u T_s``) and an integer part made of
difference bounds ``a <= b + c`` over the four anchors min(S), max(S),
min(S'), max(S'). This module builds constraint graphs, detects negative
cycles, computes normal forms and saturates relations so the closure engine
can pick its construction syntactically.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Hashable, Iterable

import networkx as nx

from slidset.core.errors import SlidsetError
from slidset.core.formula import (
    And, Formula, IntCmp, Max, Min, SetCmp, SetUnion, SetVar, Singleton, TrueF,
    conj, union,
)
from slidset.services.models import UNSAT, Unsat

logger = logging.getLogger(__name__)


class Anchor(str, Enum):
    MIN_S = "min(S)"
    MAX_S = "max(S)"
    MIN_T = "min(S')"
    MAX_T = "max(S')"

    @property
    def on_source(self) -> bool:
        return self in (Anchor.MIN_S, Anchor.MAX_S)

    @property
    def is_min(self) -> bool:
        return self in (Anchor.MIN_S, Anchor.MIN_T)

    def swapped(self) -> Anchor:
        """Same extremum on the other set."""
        return _SWAP_SIDES[self]

    def mirrored(self) -> Anchor:
        """Other extremum on the same set."""
        return _SWAP_EXTREMA[self]


_ORDER = {Anchor.MIN_S: 0, Anchor.MAX_S: 1, Anchor.MIN_T: 2, Anchor.MAX_T: 3}
_SWAP_SIDES = {
    Anchor.MIN_S: Anchor.MIN_T, Anchor.MIN_T: Anchor.MIN_S,
    Anchor.MAX_S: Anchor.MAX_T, Anchor.MAX_T: Anchor.MAX_S,
}
_SWAP_EXTREMA = {
    Anchor.MIN_S: Anchor.MAX_S, Anchor.MAX_S: Anchor.MIN_S,
    Anchor.MIN_T: Anchor.MAX_T, Anchor.MAX_T: Anchor.MIN_T,
}

MIN_PAIR = frozenset((Anchor.MIN_S, Anchor.MIN_T))
MAX_PAIR = frozenset((Anchor.MAX_S, Anchor.MAX_T))
SOURCE_PAIR = frozenset((Anchor.MIN_S, Anchor.MAX_S))
TARGET_PAIR = frozenset((Anchor.MIN_T, Anchor.MAX_T))


@dataclass(frozen=True, order=True)
class Bound:
    """``lhs <= rhs + c``."""

    lhs: Anchor = field(compare=False)
    rhs: Anchor = field(compare=False)
    c: int = field(compare=False)
    key: tuple[int, int, int] = field(init=False, repr=False, compare=True)

    def __post_init__(self) -> None:
        object.__setattr__(self, "key", (_ORDER[self.lhs], _ORDER[self.rhs], self.c))

    def anchors(self) -> frozenset[Anchor]:
        return frozenset((self.lhs, self.rhs))


def bounds_eq(a: Anchor, b: Anchor, c: int = 0) -> tuple[Bound, Bound]:
    """``a = b + c`` as two bounds."""
    return Bound(a, b, c), Bound(b, a, -c)


@dataclass(frozen=True)
class DbsRelation:
    """Set part plus integer part of a difference-bound set relation."""

    source: str = "S"
    target: str = "S'"
    t_s: frozenset[Anchor] = frozenset()
    bounds: tuple[Bound, ...] = ()
    reversed: bool = False

    def anchor_term(self, anchor: Anchor, source=None, target=None):
        src = source if source is not None else SetVar(self.source)
        tgt = target if target is not None else SetVar(self.target)
        arg = src if anchor.on_source else tgt
        return Min(arg) if anchor.is_min else Max(arg)

    def set_part(self, source=None, target=None) -> Formula:
        src = source if source is not None else SetVar(self.source)
        tgt = target if target is not None else SetVar(self.target)
        extras = [Singleton(self.anchor_term(a, src, tgt)) for a in sorted(self.t_s, key=_ORDER.get)]
        if self.reversed:
            return SetCmp(tgt, "=", union(src, *extras))
        return SetCmp(src, "=", union(tgt, *extras))

    def int_part(self, source=None, target=None, bounds: Iterable[Bound] | None = None) -> Formula:
        chosen = self.bounds if bounds is None else tuple(bounds)
        return conj(
            IntCmp(self.anchor_term(b.lhs, source, target), "<=", self.anchor_term(b.rhs, source, target), b.c)
            for b in sorted(chosen)
        )

    def formula(self, source=None, target=None) -> Formula:
        """The relation instantiated on the given set terms (defaults: its own variables)."""
        return conj(self.set_part(source, target), self.int_part(source, target))

    def anchors(self) -> frozenset[Anchor]:
        found = set(self.t_s)
        for b in self.bounds:
            found |= b.anchors()
        return frozenset(found)

    def inverted(self) -> DbsRelation:
        """The inverse relation with the roles of source and target exchanged."""
        return DbsRelation(
            source=self.target,
            target=self.source,
            t_s=frozenset(a.swapped() for a in self.t_s),
            bounds=tuple(sorted(Bound(b.lhs.swapped(), b.rhs.swapped(), b.c) for b in self.bounds)),
            reversed=not self.reversed,
        )

    def mirrored(self) -> DbsRelation:
        """Image under negation of all integers: min and max swap, bounds reverse."""
        return DbsRelation(
            source=self.source,
            target=self.target,
            t_s=frozenset(a.mirrored() for a in self.t_s),
            bounds=tuple(sorted(Bound(b.rhs.mirrored(), b.lhs.mirrored(), b.c) for b in self.bounds)),
            reversed=self.reversed,
        )


@dataclass(frozen=True)
class ConstraintGraph:
    vertices: frozenset[Hashable]
    edges: tuple[tuple[Hashable, Hashable, int], ...]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.vertices)
        for u, v, w in self.edges:
            if g.has_edge(u, v):
                g[u][v]["weight"] = min(g[u][v]["weight"], w)
            else:
                g.add_edge(u, v, weight=w)
        return g


@dataclass(frozen=True)
class SaturatedDbs:
    """A saturated relation in primary orientation ``S = S' u T_s``.

    ``inverted`` records that the original relation had the reversed set part
    and was turned into its inverse before saturation.
    """

    relation: DbsRelation
    nonempty_source: bool
    nonempty_target: bool
    inverted: bool = False
    dropped: frozenset[Anchor] = frozenset()

    @property
    def t_s(self) -> frozenset[Anchor]:
        return self.relation.t_s

    @property
    def bounds(self) -> tuple[Bound, ...]:
        return self.relation.bounds


# === Graph operations ===

def build_graph(r: DbsRelation) -> ConstraintGraph:
    vertices = frozenset(a for b in r.bounds for a in (b.lhs, b.rhs))
    return ConstraintGraph(vertices, tuple((b.lhs, b.rhs, b.c) for b in r.bounds))


def satisfiable(g: ConstraintGraph) -> bool:
    if not g.edges:
        return True
    return not nx.negative_edge_cycle(g.to_networkx(), weight="weight")


def shortest_paths(g: ConstraintGraph) -> dict:
    """All-pairs minimal path weights; unreachable pairs are absent."""
    dist = nx.floyd_warshall(g.to_networkx(), weight="weight")
    return {
        u: {v: int(w) for v, w in row.items() if w != float("inf")}
        for u, row in dist.items()
    }


def normalize(r: DbsRelation) -> DbsRelation | Unsat:
    g = build_graph(r)
    if not satisfiable(g):
        logger.debug(f"Integer part of relation {r.source}->{r.target} has a negative cycle")
        return UNSAT
    dist = shortest_paths(g)
    bounds = sorted(
        Bound(u, v, c)
        for u, row in dist.items()
        for v, c in row.items()
        if u != v
    )
    return replace(r, bounds=tuple(bounds))


def _distances(r: DbsRelation) -> dict:
    return shortest_paths(build_graph(r)) if r.bounds else {}


def entails_le(r: DbsRelation, a: Anchor, b: Anchor, c: int = 0) -> bool:
    """Whether the integer part entails ``a <= b + c``."""
    d = _distances(r).get(a, {}).get(b)
    return d is not None and d <= c


def entails_eq(r: DbsRelation, a: Anchor, b: Anchor) -> bool:
    return entails_le(r, a, b, 0) and entails_le(r, b, a, 0)


# === Saturation ===

def surely_nonempty(r: DbsRelation) -> tuple[bool, bool]:
    """Whether an anchor of the source (resp. target) occurs in the relation."""
    anchors = r.anchors()
    return (
        any(a.on_source for a in anchors),
        any(not a.on_source for a in anchors),
    )


def saturate(r: DbsRelation) -> SaturatedDbs | Unsat:
    """Saturated equivalent of ``r``, or UNSAT when its integer part is unsatisfiable."""
    inverted = r.reversed
    if inverted:
        r = r.inverted()
    nonempty_s, nonempty_t = surely_nonempty(r)

    # T_s never needs anchors of S': they already belong to S'.
    dropped = frozenset(a for a in r.t_s if not a.on_source)
    if dropped:
        logger.warning(f"Dropping {sorted(a.value for a in dropped)} from the set part of {r.source}->{r.target}")
    current = replace(r, t_s=r.t_s - dropped)

    extra: list[Bound] = []
    if nonempty_s:
        extra.append(Bound(Anchor.MIN_S, Anchor.MAX_S, 0))
    if nonempty_t:
        extra.append(Bound(Anchor.MIN_T, Anchor.MAX_T, 0))
    if nonempty_s and nonempty_t:
        extra.append(Bound(Anchor.MIN_S, Anchor.MIN_T, 0))
        extra.append(Bound(Anchor.MAX_T, Anchor.MAX_S, 0))
    current = replace(current, bounds=current.bounds + tuple(extra))

    while True:
        if nonempty_s and nonempty_t:
            eqs: list[Bound] = []
            if Anchor.MIN_S not in current.t_s:
                eqs.extend(bounds_eq(Anchor.MIN_S, Anchor.MIN_T))
            if Anchor.MAX_S not in current.t_s:
                eqs.extend(bounds_eq(Anchor.MAX_S, Anchor.MAX_T))
            current = replace(current, bounds=current.bounds + tuple(eqs))
        normal = normalize(current)
        if isinstance(normal, Unsat):
            return UNSAT
        t_s = set(normal.t_s)
        if nonempty_s and nonempty_t:
            if Anchor.MIN_S in t_s and entails_eq(normal, Anchor.MIN_S, Anchor.MIN_T):
                t_s.discard(Anchor.MIN_S)
            if Anchor.MAX_S in t_s and entails_eq(normal, Anchor.MAX_S, Anchor.MAX_T):
                t_s.discard(Anchor.MAX_S)
        if Anchor.MAX_S in t_s and entails_eq(normal, Anchor.MIN_S, Anchor.MAX_S):
            t_s.discard(Anchor.MAX_S)
            t_s.add(Anchor.MIN_S)
        if frozenset(t_s) == normal.t_s:
            current = normal
            break
        current = replace(normal, t_s=frozenset(t_s))

    result = SaturatedDbs(current, nonempty_s, nonempty_t, inverted=inverted, dropped=dropped)
    if dropped and (classify(result, MIN_PAIR), classify(result, MAX_PAIR)) != _strictness(r):
        logger.warning(f"Absorbing {sorted(a.value for a in dropped)} changed the strictness of {r.source}->{r.target}")
    logger.debug(f"Saturated {r.source}->{r.target}: T_s={sorted(a.value for a in current.t_s)}, {len(current.bounds)} bounds")
    return result


def _strictness(r: DbsRelation) -> tuple[str, str]:
    normal = normalize(r)
    if isinstance(normal, Unsat):
        return ("", "")
    assumed = SaturatedDbs(normal, True, True)
    return classify(assumed, MIN_PAIR), classify(assumed, MAX_PAIR)


def validate_saturated(s: SaturatedDbs) -> list[str]:
    """Independent check of the five saturation conditions; returns the failures."""
    r = s.relation
    problems: list[str] = []
    if r.reversed:
        problems.append("set part is not in primary orientation")
    normal = normalize(r)
    if isinstance(normal, Unsat):
        return problems + ["integer part is unsatisfiable"]
    if sorted(normal.bounds) != sorted(r.bounds):
        problems.append("integer part is not in normal form")
    if not r.t_s <= {Anchor.MIN_S, Anchor.MAX_S}:
        problems.append("T_s mentions anchors of the target")
    nonempty_s, nonempty_t = surely_nonempty(r)
    if nonempty_s and not entails_le(r, Anchor.MIN_S, Anchor.MAX_S):
        problems.append("missing min(S) <= max(S)")
    if nonempty_t and not entails_le(r, Anchor.MIN_T, Anchor.MAX_T):
        problems.append("missing min(S') <= max(S')")
    if nonempty_s and nonempty_t:
        if not entails_le(r, Anchor.MIN_S, Anchor.MIN_T) or not entails_le(r, Anchor.MAX_T, Anchor.MAX_S):
            problems.append("missing min(S) <= min(S') or max(S') <= max(S)")
        if (Anchor.MIN_S not in r.t_s) != entails_eq(r, Anchor.MIN_S, Anchor.MIN_T):
            problems.append("min(S) in T_s does not match the min equality")
        if (Anchor.MAX_S not in r.t_s) != entails_eq(r, Anchor.MAX_S, Anchor.MAX_T):
            problems.append("max(S) in T_s does not match the max equality")
    if entails_eq(r, Anchor.MIN_S, Anchor.MAX_S) and Anchor.MAX_S in r.t_s:
        problems.append("max(S) in T_s although min(S) = max(S)")
    return problems


def partition(s: SaturatedDbs | DbsRelation, pair: Iterable[Anchor]) -> list[Bound]:
    """Bounds mentioning exactly the two anchors of ``pair``."""
    pair = frozenset(pair)
    if len(pair) != 2:
        raise ValueError("A partition is indexed by two distinct anchors")
    r = s.relation if isinstance(s, SaturatedDbs) else s
    return sorted(b for b in r.bounds if b.anchors() == pair)


def classify(s: SaturatedDbs, pair: Iterable[Anchor]) -> str:
    """``Strict`` when the pair forces a strict move, ``NonStrict`` otherwise."""
    pair = frozenset(pair)
    if pair == MIN_PAIR:
        strict = any(b.lhs == Anchor.MIN_S and b.rhs == Anchor.MIN_T and b.c < 0 for b in s.relation.bounds)
    elif pair == MAX_PAIR:
        strict = any(b.lhs == Anchor.MAX_T and b.rhs == Anchor.MAX_S and b.c < 0 for b in s.relation.bounds)
    else:
        raise ValueError("Strictness is defined for the min pair and the max pair only")
    return "Strict" if strict else "NonStrict"


# === Reading relations from formulas ===

class NotDbs(SlidsetError):
    """A formula is not a difference-bound set relation."""


def from_formula(f: Formula, source: str, target: str) -> DbsRelation:
    """Read a relation between the set variables ``source`` and ``target``."""
    conjuncts = list(f.args) if isinstance(f, And) else [] if isinstance(f, TrueF) else [f]
    set_parts = [a for a in conjuncts if isinstance(a, SetCmp)]
    others = [a for a in conjuncts if not isinstance(a, SetCmp)]
    if len(set_parts) != 1:
        raise NotDbs(f"Expected exactly one set equation, found {len(set_parts)}")
    t_s, reversed_ = _read_set_part(set_parts[0], source, target)
    bounds: list[Bound] = []
    for atom in others:
        bounds.extend(_read_bound(atom, source, target))
    return DbsRelation(source, target, frozenset(t_s), tuple(sorted(bounds)), reversed_)


def _anchor_of(term, source: str, target: str) -> Anchor:
    if isinstance(term, (Min, Max)) and isinstance(term.arg, SetVar):
        if term.arg.name == source:
            return Anchor.MIN_S if isinstance(term, Min) else Anchor.MAX_S
        if term.arg.name == target:
            return Anchor.MIN_T if isinstance(term, Min) else Anchor.MAX_T
    raise NotDbs(f"Term {term!r} is not an anchor of {source} or {target}")


def _read_set_part(atom: SetCmp, source: str, target: str) -> tuple[set[Anchor], bool]:
    if atom.op != "=":
        raise NotDbs("The set part must be an equation")
    for lhs, rhs in ((atom.left, atom.right), (atom.right, atom.left)):
        if not isinstance(lhs, SetVar) or lhs.name not in (source, target):
            continue
        operands = _operands(rhs)
        other = target if lhs.name == source else source
        if SetVar(other) not in operands:
            continue
        t_s = set()
        for op in operands:
            if op == SetVar(other):
                continue
            if not isinstance(op, Singleton):
                raise NotDbs(f"Unexpected operand {op!r} in the set part")
            t_s.add(_anchor_of(op.elem, source, target))
        return t_s, lhs.name == target
    raise NotDbs("The set part must relate the two set variables")


def _operands(t) -> list:
    if isinstance(t, SetUnion):
        return _operands(t.left) + _operands(t.right)
    return [t]


def _read_bound(atom, source: str, target: str) -> list[Bound]:
    if not isinstance(atom, IntCmp):
        raise NotDbs(f"Unexpected conjunct {atom!r} in the integer part")
    lhs = _anchor_of(atom.left, source, target)
    rhs = _anchor_of(atom.right, source, target)
    c = atom.offset
    if atom.op == "<=":
        return [Bound(lhs, rhs, c)]
    if atom.op == "<":
        return [Bound(lhs, rhs, c - 1)]
    if atom.op == ">=":
        return [Bound(rhs, lhs, -c)]
    if atom.op == ">":
        return [Bound(rhs, lhs, -c - 1)]
    return list(bounds_eq(lhs, rhs, c))
