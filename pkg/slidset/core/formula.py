"""
Formula algebra shared by every stage of the pipeline.

Terms and formulas are immutable dataclasses. Integer terms are constants,
integer variables and min/max of set terms; set terms are built from set
variables, the empty set and singletons with union, intersection and
difference. Counting terms (linear combinations, cardinalities) only ever
appear inside count atoms and divisibility atoms, which may mention free
variables only.

Derived connectives (Or, Implies, Iff, Exists, Member, strict comparisons)
are kept as sugar; ``transform.desugar`` removes them.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property, reduce
from typing import Iterable, Union


class Sort(str, Enum):
    INT = "int"
    SET = "set"
    LOC = "loc"


class _Node:
    """Mixin giving every node a cached set of free variables."""

    @cached_property
    def free(self) -> frozenset[Var]:
        return _free(self)

    @cached_property
    def free_names(self) -> frozenset[str]:
        return frozenset(v.name for v in self.free)


# === Integer and set terms ===

@dataclass(frozen=True)
class IntConst(_Node):
    value: int


@dataclass(frozen=True)
class IntVar(_Node):
    name: str


@dataclass(frozen=True)
class Min(_Node):
    arg: SetTerm


@dataclass(frozen=True)
class Max(_Node):
    arg: SetTerm


@dataclass(frozen=True)
class EmptySet(_Node):
    pass


@dataclass(frozen=True)
class SetVar(_Node):
    name: str


@dataclass(frozen=True)
class Singleton(_Node):
    elem: IntTerm


@dataclass(frozen=True)
class SetUnion(_Node):
    left: SetTerm
    right: SetTerm


@dataclass(frozen=True)
class SetInter(_Node):
    left: SetTerm
    right: SetTerm


@dataclass(frozen=True)
class SetDiff(_Node):
    left: SetTerm
    right: SetTerm


# === Counting terms ===

@dataclass(frozen=True)
class MSum(_Node):
    left: MTerm
    right: MTerm


@dataclass(frozen=True)
class MDiff(_Node):
    left: MTerm
    right: MTerm


@dataclass(frozen=True)
class MScale(_Node):
    coeff: int
    arg: MTerm


@dataclass(frozen=True)
class Card(_Node):
    arg: SetTerm


# === Formulas ===

SET_OPS = ("=", "<=", ">=", "<", ">")
INT_OPS = ("=", "<=", ">=", "<", ">")
CORE_OPS = ("=", "<=", ">=")


@dataclass(frozen=True)
class TrueF(_Node):
    pass


@dataclass(frozen=True)
class FalseF(_Node):
    pass


@dataclass(frozen=True)
class SetCmp(_Node):
    """``left op right`` where ``<=``/``<`` mean (strict) inclusion."""

    left: SetTerm
    op: str
    right: SetTerm


@dataclass(frozen=True)
class IntCmp(_Node):
    """``left op right + offset``."""

    left: IntTerm
    op: str
    right: IntTerm
    offset: int = 0


@dataclass(frozen=True)
class CountAtom(_Node):
    """``term op 0``."""

    term: MTerm
    op: str


@dataclass(frozen=True)
class DivAtom(_Node):
    """``term = residue (mod modulus)``."""

    term: MTerm
    modulus: int
    residue: int = 0


@dataclass(frozen=True)
class Member(_Node):
    elem: IntTerm
    set: SetTerm


@dataclass(frozen=True)
class Spacing(_Node):
    """Any two consecutive elements of ``set`` are at least ``low`` and at most ``high`` apart.

    ``high`` None leaves the distance unbounded above. Like every atom it is
    false when ``set`` is undefined.
    """

    set: SetTerm
    low: int = 1
    high: int | None = None

    def expand(self) -> Formula:
        """The same constraint written with quantifiers and succ."""
        from slidset.core.transform import fresh_name

        avoid = set(self.free_names)
        y = IntVar(fresh_name("y", avoid))
        z = IntVar(fresh_name("z", avoid | {y.name}))
        w = IntVar(fresh_name("w", avoid | {y.name, z.name}))
        gap: list[Formula] = [IntCmp(y, "<=", z, -self.low)]
        if self.high is not None:
            gap.append(IntCmp(z, "<=", y, self.high))
        guard = forall([y, z], implies(succ_formula(self.set, y, z, w), conj(gap)))
        return conj(defined(self.set), guard)


@dataclass(frozen=True)
class And(_Node):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(_Node):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Not(_Node):
    arg: Formula


@dataclass(frozen=True)
class Implies(_Node):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(_Node):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Forall(_Node):
    var: Var
    body: Formula


@dataclass(frozen=True)
class Exists(_Node):
    var: Var
    body: Formula


Var = Union[IntVar, SetVar]
IntTerm = Union[IntConst, IntVar, Min, Max]
SetTerm = Union[EmptySet, SetVar, Singleton, SetUnion, SetInter, SetDiff]
MTerm = Union[IntConst, IntVar, Min, Max, MSum, MDiff, MScale, Card]
Atom = Union[TrueF, FalseF, SetCmp, IntCmp, CountAtom, DivAtom, Member, Spacing]
Formula = Union[Atom, And, Or, Not, Implies, Iff, Forall, Exists]

INT_TERMS = (IntConst, IntVar, Min, Max)
SET_TERMS = (EmptySet, SetVar, Singleton, SetUnion, SetInter, SetDiff)
ATOMS = (TrueF, FalseF, SetCmp, IntCmp, CountAtom, DivAtom, Member, Spacing)
QUANTIFIERS = (Forall, Exists)

TRUE = TrueF()
FALSE = FalseF()
EMPTY = EmptySet()


def _free(node: _Node) -> frozenset[Var]:
    if isinstance(node, (IntVar, SetVar)):
        return frozenset((node,))
    if isinstance(node, (Forall, Exists)):
        return node.body.free - {node.var}
    result: frozenset[Var] = frozenset()
    for child in children(node):
        result |= child.free
    return result


def children(node: _Node) -> tuple[_Node, ...]:
    """Direct sub-nodes of a term or formula, in field order."""
    if isinstance(node, (IntConst, IntVar, SetVar, EmptySet, TrueF, FalseF)):
        return ()
    if isinstance(node, (Min, Max, Card)):
        return (node.arg,)
    if isinstance(node, Singleton):
        return (node.elem,)
    if isinstance(node, (SetUnion, SetInter, SetDiff, MSum, MDiff, SetCmp, IntCmp, Implies, Iff)):
        return (node.left, node.right)
    if isinstance(node, MScale):
        return (node.arg,)
    if isinstance(node, (CountAtom, DivAtom)):
        return (node.term,)
    if isinstance(node, Member):
        return (node.elem, node.set)
    if isinstance(node, Spacing):
        return (node.set,)
    if isinstance(node, (And, Or)):
        return node.args
    if isinstance(node, Not):
        return (node.arg,)
    if isinstance(node, (Forall, Exists)):
        return (node.var, node.body)
    raise TypeError(f"Unknown node {node!r}")


def sort_of(var: Var) -> Sort:
    return Sort.INT if isinstance(var, IntVar) else Sort.SET


def free_vars(node: _Node) -> frozenset[Var]:
    return node.free


def free_int_vars(node: _Node) -> frozenset[str]:
    return frozenset(v.name for v in node.free if isinstance(v, IntVar))


def free_set_vars(node: _Node) -> frozenset[str]:
    return frozenset(v.name for v in node.free if isinstance(v, SetVar))


# === Builders ===
# The builders fold constants and flatten nested conjunctions/disjunctions,
# so generated formulas stay readable when printed.

def conj(*parts: Formula | Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for part in _flatten(parts):
        if isinstance(part, FalseF):
            return FALSE
        if isinstance(part, TrueF):
            continue
        if isinstance(part, And):
            flat.extend(part.args)
        elif part not in flat:
            flat.append(part)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*parts: Formula | Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for part in _flatten(parts):
        if isinstance(part, TrueF):
            return TRUE
        if isinstance(part, FalseF):
            continue
        if isinstance(part, Or):
            flat.extend(part.args)
        elif part not in flat:
            flat.append(part)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def neg(f: Formula) -> Formula:
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def implies(a: Formula, b: Formula) -> Formula:
    if isinstance(a, TrueF):
        return b
    if isinstance(a, FalseF) or isinstance(b, TrueF):
        return TRUE
    return Implies(a, b)


def exists(variables: Iterable[Var], body: Formula) -> Formula:
    for var in reversed(list(variables)):
        body = Exists(var, body)
    return body


def forall(variables: Iterable[Var], body: Formula) -> Formula:
    for var in reversed(list(variables)):
        body = Forall(var, body)
    return body


def _flatten(parts: tuple) -> Iterable[Formula]:
    for part in parts:
        if isinstance(part, ATOMS + (And, Or, Not, Implies, Iff, Forall, Exists)):
            yield part
        else:
            yield from part


def union(*terms: SetTerm) -> SetTerm:
    terms = tuple(t for t in terms if not isinstance(t, EmptySet))
    if not terms:
        return EMPTY
    return reduce(SetUnion, terms)


def singleton(t: IntTerm | int) -> Singleton:
    return Singleton(IntConst(t) if isinstance(t, int) else t)


def set_eq(a: SetTerm, b: SetTerm) -> SetCmp:
    return SetCmp(a, "=", b)


def subset(a: SetTerm, b: SetTerm) -> SetCmp:
    return SetCmp(a, "<=", b)


def is_empty(t: SetTerm) -> SetCmp:
    return SetCmp(t, "=", EMPTY)


def nonempty(t: SetTerm) -> Formula:
    return Not(SetCmp(t, "=", EMPTY))


def le(a: IntTerm, b: IntTerm, offset: int = 0) -> IntCmp:
    """a <= b + offset"""
    return IntCmp(a, "<=", b, offset)


def lt(a: IntTerm, b: IntTerm, offset: int = 0) -> IntCmp:
    return IntCmp(a, "<", b, offset)


def int_eq(a: IntTerm, b: IntTerm, offset: int = 0) -> IntCmp:
    return IntCmp(a, "=", b, offset)


def member(e: IntTerm, s: SetTerm) -> Member:
    return Member(e, s)


def succ_formula(sv: SetTerm, y: IntVar, z: IntVar, w: IntVar | None = None) -> Formula:
    """``z`` is the immediate successor of ``y`` in ``sv``."""
    if w is None:
        from slidset.core.transform import fresh_name

        w = IntVar(fresh_name("w", {y.name, z.name} | sv.free_names))
    return conj(
        member(y, sv),
        member(z, sv),
        lt(y, z),
        forall([w], disj(neg(member(w, sv)), le(w, y), le(z, w))),
    )


def anchors(t) -> list[Min | Max]:
    """The min and max terms occurring in a term, outermost first."""
    found: list[Min | Max] = []
    if isinstance(t, (Min, Max)):
        found.append(t)
    for child in children(t):
        found.extend(a for a in anchors(child) if a not in found)
    return found


def defined(t) -> Formula:
    """Every min and max inside ``t`` is applied to a nonempty set."""
    return conj(nonempty(a.arg) for a in anchors(t))


def linearize(t: MTerm) -> tuple[dict[_Node, int], int]:
    """Split a counting term into {item: coefficient} plus a constant.

    Items are integer variables, min/max terms and cardinalities.
    """
    coeffs: dict[_Node, int] = {}
    const = 0

    def walk(term: MTerm, factor: int) -> None:
        nonlocal const
        if isinstance(term, IntConst):
            const += factor * term.value
        elif isinstance(term, (IntVar, Min, Max, Card)):
            coeffs[term] = coeffs.get(term, 0) + factor
        elif isinstance(term, MSum):
            walk(term.left, factor)
            walk(term.right, factor)
        elif isinstance(term, MDiff):
            walk(term.left, factor)
            walk(term.right, -factor)
        elif isinstance(term, MScale):
            walk(term.arg, factor * term.coeff)
        else:
            raise TypeError(f"Not a counting term: {term!r}")

    walk(t, 1)
    return {k: v for k, v in coeffs.items() if v != 0}, const


def from_linear(coeffs: dict[_Node, int], const: int) -> MTerm:
    """Inverse of ``linearize`` with a deterministic term order."""
    from slidset.core.printer import show

    term: MTerm | None = None
    for item in sorted(coeffs, key=show):
        c = coeffs[item]
        if c == 0:
            continue
        piece: MTerm = item if abs(c) == 1 else MScale(abs(c), item)
        if term is None:
            term = piece if c > 0 else MScale(-1, item) if abs(c) == 1 else MScale(c, item)
        else:
            term = MSum(term, piece) if c > 0 else MDiff(term, piece)
    if term is None:
        return IntConst(const)
    if const > 0:
        term = MSum(term, IntConst(const))
    elif const < 0:
        term = MDiff(term, IntConst(-const))
    return term
