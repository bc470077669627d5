"""
Syntactic transformations on the formula algebra: substitution, desugaring,
the min/max mirror, bound-variable hygiene and light simplification.
"""
from __future__ import annotations

import itertools
from typing import Callable, Iterable, Mapping

from slidset.core.errors import SortError
from slidset.core.formula import (
    INT_TERMS, SET_TERMS, And, Card, CountAtom, DivAtom, EmptySet, Exists, FalseF,
    Forall, Formula, Iff, Implies, IntCmp, IntConst, IntVar, Max, MDiff, Member, Min,
    MScale, MSum, Not, Or, SetCmp, SetDiff, SetInter, SetUnion, SetVar, Singleton, Spacing,
    TrueF, Var, conj, disj, implies, linearize, neg,
)

_FLIP = {"=": "=", "<=": ">=", ">=": "<=", "<": ">", ">": "<"}


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    """First name of the form ``base#k`` not in ``avoid``."""
    avoid = set(avoid)
    root = base.split("#", 1)[0]
    for k in itertools.count(1):
        candidate = f"{root}#{k}"
        if candidate not in avoid:
            return candidate
    raise AssertionError("unreachable")


def all_names(node) -> set[str]:
    """Free and bound variable names occurring anywhere in a node."""
    names: set[str] = set()

    def walk(n) -> None:
        if isinstance(n, (IntVar, SetVar)):
            names.add(n.name)
            return
        for child in _children(n):
            walk(child)

    walk(node)
    return names


def _children(n):
    from slidset.core.formula import children

    return children(n)


# === Substitution ===

def substitute(f, subst: Mapping) -> Formula:
    """Simultaneous, capture-avoiding substitution.

    Keys are variables or anchor terms ``min(T)``/``max(T)``; values are terms of
    the matching sort. Bound variables shadow keys and are renamed when they
    would capture a free variable of some value.
    """
    for key, value in subst.items():
        _check_sort(key, value)
    if not subst:
        return f
    return _subst(f, dict(subst))


def _check_sort(key, value) -> None:
    key_is_int = isinstance(key, (IntVar, Min, Max))
    if key_is_int and not isinstance(value, INT_TERMS):
        raise SortError(f"Cannot substitute set term {value!r} for integer {key!r}")
    if isinstance(key, SetVar) and not isinstance(value, SET_TERMS):
        raise SortError(f"Cannot substitute integer term {value!r} for set {key!r}")
    if not isinstance(key, (IntVar, SetVar, Min, Max)):
        raise SortError(f"Substitution key must be a variable or an anchor term, got {key!r}")


def _subst(n, s: dict):
    if isinstance(n, (IntVar, SetVar, Min, Max)) and n in s:
        return s[n]
    if isinstance(n, (IntConst, IntVar, SetVar, EmptySet, TrueF, FalseF)):
        return n
    if isinstance(n, Min):
        return Min(_subst(n.arg, s))
    if isinstance(n, Max):
        return Max(_subst(n.arg, s))
    if isinstance(n, Card):
        return Card(_subst(n.arg, s))
    if isinstance(n, Singleton):
        return Singleton(_subst(n.elem, s))
    if isinstance(n, (SetUnion, SetInter, SetDiff, MSum, MDiff, Implies, Iff)):
        return type(n)(_subst(n.left, s), _subst(n.right, s))
    if isinstance(n, MScale):
        return MScale(n.coeff, _subst(n.arg, s))
    if isinstance(n, SetCmp):
        return SetCmp(_subst(n.left, s), n.op, _subst(n.right, s))
    if isinstance(n, IntCmp):
        return IntCmp(_subst(n.left, s), n.op, _subst(n.right, s), n.offset)
    if isinstance(n, CountAtom):
        return CountAtom(_subst(n.term, s), n.op)
    if isinstance(n, DivAtom):
        return DivAtom(_subst(n.term, s), n.modulus, n.residue)
    if isinstance(n, Member):
        return Member(_subst(n.elem, s), _subst(n.set, s))
    if isinstance(n, Spacing):
        return Spacing(_subst(n.set, s), n.low, n.high)
    if isinstance(n, (And, Or)):
        return type(n)(tuple(_subst(a, s) for a in n.args))
    if isinstance(n, Not):
        return Not(_subst(n.arg, s))
    if isinstance(n, (Forall, Exists)):
        var = n.var
        inner = {k: v for k, v in s.items() if var not in k.free}
        if not inner:
            return n
        captured = set()
        for v in inner.values():
            captured |= v.free_names
        body = n.body
        if var.name in captured:
            avoid = captured | all_names(n.body) | {k.name for k in inner if isinstance(k, (IntVar, SetVar))}
            renamed = type(var)(fresh_name(var.name, avoid))
            body = _subst(body, {var: renamed})
            var = renamed
        return type(n)(var, _subst(body, inner))
    raise TypeError(f"Cannot substitute into {n!r}")


# === Desugaring ===

def desugar(f: Formula) -> Formula:
    """Rewrite into the core connectives {And, Not, Forall} and core atoms."""
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Member):
        return SetCmp(Singleton(f.elem), "<=", f.set)
    if isinstance(f, SetCmp):
        if f.op == "<":
            return And((SetCmp(f.left, "<=", f.right), Not(SetCmp(f.left, "=", f.right))))
        if f.op == ">":
            return And((SetCmp(f.left, ">=", f.right), Not(SetCmp(f.left, "=", f.right))))
        return f
    if isinstance(f, IntCmp):
        if f.op == "<":
            return IntCmp(f.left, "<=", f.right, f.offset - 1)
        if f.op == ">":
            return IntCmp(f.left, ">=", f.right, f.offset + 1)
        return f
    if isinstance(f, CountAtom):
        if f.op == "<":
            return CountAtom(MSum(f.term, IntConst(1)), "<=")
        if f.op == ">":
            return CountAtom(MDiff(f.term, IntConst(1)), ">=")
        return f
    if isinstance(f, (DivAtom, Spacing)):
        return f
    if isinstance(f, And):
        return And(tuple(desugar(a) for a in f.args))
    if isinstance(f, Or):
        return Not(And(tuple(Not(desugar(a)) for a in f.args)))
    if isinstance(f, Not):
        return Not(desugar(f.arg))
    if isinstance(f, Implies):
        return Not(And((desugar(f.left), Not(desugar(f.right)))))
    if isinstance(f, Iff):
        left, right = desugar(f.left), desugar(f.right)
        return And((Not(And((left, Not(right)))), Not(And((right, Not(left))))))
    if isinstance(f, Forall):
        return Forall(f.var, desugar(f.body))
    if isinstance(f, Exists):
        return Not(Forall(f.var, Not(desugar(f.body))))
    raise TypeError(f"Cannot desugar {f!r}")


# === Mirror ===

def mirror(n):
    """Image of a formula under negation of every integer value.

    ``m |= f`` iff ``-m |= mirror(f)``, where ``-m`` negates all integers and
    all set elements. min and max swap, constants and offsets change sign and
    integer comparisons flip.
    """
    if isinstance(n, IntConst):
        return IntConst(-n.value)
    if isinstance(n, (IntVar, SetVar, EmptySet, TrueF, FalseF)):
        return n
    if isinstance(n, Min):
        return Max(mirror(n.arg))
    if isinstance(n, Max):
        return Min(mirror(n.arg))
    if isinstance(n, Singleton):
        return Singleton(mirror(n.elem))
    if isinstance(n, (SetUnion, SetInter, SetDiff, Implies, Iff)):
        return type(n)(mirror(n.left), mirror(n.right))
    if isinstance(n, SetCmp):
        return SetCmp(mirror(n.left), n.op, mirror(n.right))
    if isinstance(n, IntCmp):
        return IntCmp(mirror(n.left), _FLIP[n.op], mirror(n.right), -n.offset)
    if isinstance(n, CountAtom):
        return CountAtom(_mirror_count(n.term), n.op)
    if isinstance(n, DivAtom):
        return DivAtom(_mirror_count(n.term), n.modulus, n.residue)
    if isinstance(n, Member):
        return Member(mirror(n.elem), mirror(n.set))
    if isinstance(n, Spacing):
        return Spacing(mirror(n.set), n.low, n.high)
    if isinstance(n, (And, Or)):
        return type(n)(tuple(mirror(a) for a in n.args))
    if isinstance(n, Not):
        return Not(mirror(n.arg))
    if isinstance(n, (Forall, Exists)):
        return type(n)(n.var, mirror(n.body))
    raise TypeError(f"Cannot mirror {n!r}")


def _mirror_count(t):
    # Values (variables, min, max) change sign; cardinalities and constants do not.
    if isinstance(t, IntConst):
        return t
    if isinstance(t, IntVar):
        return MScale(-1, t)
    if isinstance(t, Min):
        return MScale(-1, Max(mirror(t.arg)))
    if isinstance(t, Max):
        return MScale(-1, Min(mirror(t.arg)))
    if isinstance(t, Card):
        return Card(mirror(t.arg))
    if isinstance(t, (MSum, MDiff)):
        return type(t)(_mirror_count(t.left), _mirror_count(t.right))
    if isinstance(t, MScale):
        return MScale(t.coeff, _mirror_count(t.arg))
    raise TypeError(f"Not a counting term: {t!r}")


# === Bound-variable hygiene ===

def rename_bound_apart(f: Formula, avoid: Iterable[str] = ()) -> Formula:
    """Give every quantifier a distinct name that is not free anywhere in ``f``."""
    used = set(avoid) | set(f.free_names)

    def walk(n):
        if isinstance(n, (Forall, Exists)):
            var = n.var
            body = n.body
            if var.name in used:
                renamed = type(var)(fresh_name(var.name, used | all_names(body)))
                body = _subst(body, {var: renamed})
                var = renamed
            used.add(var.name)
            return type(n)(var, walk(body))
        if isinstance(n, (And, Or)):
            return type(n)(tuple(walk(a) for a in n.args))
        if isinstance(n, Not):
            return Not(walk(n.arg))
        if isinstance(n, (Implies, Iff)):
            return type(n)(walk(n.left), walk(n.right))
        return n

    return walk(f)


def lift_existentials(f: Formula) -> tuple[Formula, list[Var]]:
    """Turn existentials in positive position outside any universal into free variables.

    ``f`` must have its bound variables renamed apart. The result is
    equisatisfiable with ``f`` and every model of it restricts to a model of ``f``.
    """
    lifted: list[Var] = []

    def walk(n, positive: bool):
        if isinstance(n, Exists) and positive:
            lifted.append(n.var)
            return walk(n.body, positive)
        if isinstance(n, Forall) and not positive:
            lifted.append(n.var)
            return walk(n.body, positive)
        if isinstance(n, And):
            return And(tuple(walk(a, positive) for a in n.args))
        if isinstance(n, Or):
            return Or(tuple(walk(a, positive) for a in n.args))
        if isinstance(n, Not):
            return Not(walk(n.arg, not positive))
        if isinstance(n, Implies):
            return Implies(walk(n.left, not positive), walk(n.right, positive))
        return n

    return walk(f, True), lifted


# === Simplification ===

def map_atoms(f: Formula, fn: Callable[[Formula], Formula]) -> Formula:
    """Rebuild ``f`` bottom-up, applying ``fn`` to every atom."""
    if isinstance(f, And):
        return conj(*(map_atoms(a, fn) for a in f.args))
    if isinstance(f, Or):
        return disj(*(map_atoms(a, fn) for a in f.args))
    if isinstance(f, Not):
        return neg(map_atoms(f.arg, fn))
    if isinstance(f, Implies):
        return implies(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Iff):
        left, right = map_atoms(f.left, fn), map_atoms(f.right, fn)
        if isinstance(left, TrueF):
            return right
        if isinstance(right, TrueF):
            return left
        return Iff(left, right)
    if isinstance(f, (Forall, Exists)):
        body = map_atoms(f.body, fn)
        if isinstance(body, (TrueF, FalseF)) or f.var not in body.free:
            return body
        return type(f)(f.var, body)
    return fn(f)


def simplify(f: Formula) -> Formula:
    """Fold ground atoms and trivial comparisons, then re-flatten connectives."""
    return map_atoms(f, _fold_atom)


def _fold_atom(a: Formula) -> Formula:
    if isinstance(a, IntCmp):
        if isinstance(a.left, IntConst) and isinstance(a.right, IntConst):
            return _bool(_compare(a.left.value, a.op, a.right.value + a.offset))
        if a.left == a.right and isinstance(a.left, (IntConst, IntVar)):
            return _bool(_compare(0, a.op, a.offset))
        return a
    if isinstance(a, SetCmp):
        if a.left == a.right and a.op in ("=", "<=", ">=") and not _has_anchor(a.left):
            return _TRUE_F
        return a
    if isinstance(a, (CountAtom, DivAtom)):
        coeffs, const = linearize(a.term)
        if coeffs:
            return a
        if isinstance(a, CountAtom):
            return _bool(_compare(const, a.op, 0))
        return _bool((const - a.residue) % a.modulus == 0)
    if isinstance(a, Spacing):
        if isinstance(a.set, EmptySet) or (isinstance(a.set, Singleton) and isinstance(a.set.elem, IntConst)):
            return _TRUE_F
        return a
    return a


def _has_anchor(t) -> bool:
    if isinstance(t, (Min, Max)):
        return True
    return any(_has_anchor(c) for c in _children(t))


_TRUE_F = TrueF()
_FALSE_F = FalseF()


def _bool(value: bool) -> Formula:
    return _TRUE_F if value else _FALSE_F


def _compare(a: int, op: str, b: int) -> bool:
    if op == "=":
        return a == b
    if op == "<=":
        return a <= b
    if op == ">=":
        return a >= b
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    raise ValueError(f"Unknown comparison operator {op!r}")


compare = _compare
