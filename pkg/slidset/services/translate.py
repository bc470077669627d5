"""
From integers to natural numbers.

Every integer n is split into the pair (n+, n-) of naturals with n = n+ - n-
and at most one of them nonzero; every finite set A of integers into
A+ = A n N and A- = {-n | n in A, n < 0}. Formulas follow the split: each
variable x becomes the two tracks ``x#p`` and ``x#n`` and every atom is
rewritten per sign case, so that a model satisfies a formula exactly when its
encoding satisfies the translation.

Two modes are offered. ``global`` fixes a sign context for every variable and
takes the disjunction over contexts; ``local`` splits cases inside each atom
and keeps the output linear in the input.
"""
from __future__ import annotations

import itertools
import logging
from typing import Iterable, Literal

from slidset.core.errors import SlidsetError
from slidset.core.evaluation import BoundedModel
from slidset.core.formula import (
    EMPTY, FALSE, TRUE, And, Card, CountAtom, DivAtom, EmptySet, Exists, FalseF, Forall,
    Formula, Iff, Implies, IntCmp, IntConst, IntVar, Max, Member, Min, Not, Or, SetCmp,
    SetDiff, SetInter, SetUnion, SetVar, Singleton, Spacing, TrueF, conj, disj, exists, forall,
    from_linear, implies, int_eq, is_empty, linearize, neg, nonempty,
)
from slidset.core.transform import desugar, map_atoms, simplify

logger = logging.getLogger(__name__)

Mode = Literal["global", "local"]
_FLIP = {"=": "=", "<=": ">=", ">=": "<="}
INT_CONTEXTS = ("+", "-")
SET_CONTEXTS = ("+", "-", "+-", "0")


def pos_name(name: str) -> str:
    return f"{name}#p"


def neg_name(name: str) -> str:
    return f"{name}#n"


# === Encoding of values and models ===

def encode_int(n: int) -> tuple[int, int]:
    return (n, 0) if n >= 0 else (0, -n)


def encode_set(values: Iterable[int]) -> tuple[frozenset[int], frozenset[int]]:
    values = frozenset(values)
    return frozenset(v for v in values if v >= 0), frozenset(-v for v in values if v < 0)


def decode_int(p: int, n: int) -> int:
    return p - n


def decode_set(p: Iterable[int], n: Iterable[int]) -> frozenset[int]:
    return frozenset(p) | frozenset(-v for v in n)


def encode_model(m: BoundedModel) -> BoundedModel:
    """The natural-number model over the split tracks of every variable of ``m``."""
    ints: dict[str, int] = {}
    sets: dict[str, frozenset[int]] = {}
    for name, value in m.ints.items():
        ints[pos_name(name)], ints[neg_name(name)] = encode_int(value)
    for name, values in m.sets.items():
        sets[pos_name(name)], sets[neg_name(name)] = encode_set(values)
    return BoundedModel(universe=m.universe, ints=ints, sets=sets, domain="nat")


def decode_model(m: BoundedModel, int_names: Iterable[str], set_names: Iterable[str]) -> BoundedModel:
    """Inverse of ``encode_model``; missing negative tracks read as zero or empty."""
    ints = {x: decode_int(m.ints.get(pos_name(x), 0), m.ints.get(neg_name(x), 0)) for x in int_names}
    sets = {s: decode_set(m.sets.get(pos_name(s), ()), m.sets.get(neg_name(s), ())) for s in set_names}
    values = [abs(v) for v in ints.values()] + [abs(v) for s in sets.values() for v in s]
    return BoundedModel(universe=max(values, default=0), ints=ints, sets=sets, domain="int")


# === Formula translation ===

def translate_z_to_n(f: Formula, mode: Mode = "local", nonneg: Iterable[str] = ()) -> Formula:
    """Natural-number formula over split tracks equisatisfiable with ``f`` under the encoding.

    Variables named in ``nonneg`` are known to be nonnegative; they keep a
    positive track only.
    """
    if mode not in ("global", "local"):
        raise ValueError(f"Unknown translation mode {mode!r}")
    f = map_atoms(f, desugar)
    nonneg = frozenset(nonneg)
    free = sorted(f.free, key=lambda v: v.name)
    if mode == "local":
        tr = _Translator({}, nonneg)
        result = conj([validity(v, nonneg) for v in free], tr.formula(f))
    else:
        branches = []
        choices = [_contexts(v, nonneg) for v in free]
        for combo in itertools.product(*choices):
            ctx = {v.name: c for v, c in zip(free, combo)}
            tr = _Translator(ctx, nonneg, mode="global")
            guards = [_context_guard(v, ctx[v.name], nonneg) for v in free]
            branches.append(conj(guards, tr.formula(f)))
        result = disj(branches)
    result = simplify(result)
    logger.debug(f"Translated formula over {len(free)} free variables in {mode} mode")
    return result


def _contexts(v, nonneg: frozenset[str]) -> tuple[str, ...]:
    if v.name in nonneg:
        return ("+",) if isinstance(v, IntVar) else ("+", "0")
    return INT_CONTEXTS if isinstance(v, IntVar) else SET_CONTEXTS


def validity(v, nonneg: frozenset[str]) -> Formula:
    """Well-formedness of the split of a single variable."""
    if v.name in nonneg:
        return TRUE
    if isinstance(v, IntVar):
        return disj(int_eq(IntVar(pos_name(v.name)), IntConst(0)), int_eq(IntVar(neg_name(v.name)), IntConst(0)))
    return neg(SetCmp(Singleton(IntConst(0)), "<=", SetVar(neg_name(v.name))))


def _context_guard(v, c: str, nonneg: frozenset[str]) -> Formula:
    p, n = pos_name(v.name), neg_name(v.name)
    if isinstance(v, IntVar):
        if c == "+":
            return TRUE if v.name in nonneg else int_eq(IntVar(n), IntConst(0))
        return conj(int_eq(IntVar(p), IntConst(0)), IntCmp(IntVar(n), ">=", IntConst(1)))
    sp, sn = SetVar(p), SetVar(n)
    no_zero = neg(SetCmp(Singleton(IntConst(0)), "<=", sn))
    if c == "+":
        return nonempty(sp) if v.name in nonneg else conj(nonempty(sp), is_empty(sn))
    if c == "-":
        return conj(is_empty(sp), nonempty(sn), no_zero)
    if c == "+-":
        return conj(nonempty(sp), nonempty(sn), no_zero)
    return is_empty(sp) if v.name in nonneg else conj(is_empty(sp), is_empty(sn))


class _Translator:
    """Rewrites atoms per sign case; ``ctx`` fixes the case of some variables."""

    def __init__(self, ctx: dict[str, str], nonneg: frozenset[str], mode: Mode = "local"):
        self.ctx = ctx
        self.nonneg = nonneg
        self.mode = mode

    # --- terms: lists of (sign or parts, guard) options ---

    def int_options(self, t) -> list[tuple[int, object, Formula]]:
        if isinstance(t, IntConst):
            return [(1, t, TRUE)] if t.value >= 0 else [(-1, IntConst(-t.value), TRUE)]
        if isinstance(t, IntVar):
            p, n = IntVar(pos_name(t.name)), IntVar(neg_name(t.name))
            c = "+" if t.name in self.nonneg else self.ctx.get(t.name)
            if c == "+":
                return [(1, p, TRUE)]
            if c == "-":
                return [(-1, n, TRUE)]
            return [
                (1, p, int_eq(n, IntConst(0))),
                (-1, n, conj(int_eq(p, IntConst(0)), IntCmp(n, ">=", IntConst(1)))),
            ]
        if isinstance(t, (Min, Max)):
            out = []
            for sp, sn, g in self.set_options(t.arg):
                p_known, n_known = self._known_nonempty(t.arg)
                if isinstance(t, Min):
                    if isinstance(sn, EmptySet):
                        out.append((1, Min(sp), g))
                    elif n_known:
                        out.append((-1, Max(sn), g))
                    else:
                        out.append((-1, Max(sn), conj(g, nonempty(sn))))
                        out.append((1, Min(sp), conj(g, is_empty(sn))))
                else:
                    if isinstance(sp, EmptySet):
                        if not isinstance(sn, EmptySet):
                            out.append((-1, Min(sn), g))
                    elif p_known or isinstance(sn, EmptySet):
                        out.append((1, Max(sp), g))
                    else:
                        out.append((1, Max(sp), conj(g, nonempty(sp))))
                        out.append((-1, Min(sn), conj(g, is_empty(sp))))
            return out
        raise SlidsetError(f"Not an integer term: {t!r}")

    def _known_nonempty(self, t) -> tuple[bool, bool]:
        if isinstance(t, SetVar):
            c = self.ctx.get(t.name)
            return c in ("+", "+-"), c in ("-", "+-")
        return False, False

    def set_options(self, t) -> list[tuple[object, object, Formula]]:
        if isinstance(t, EmptySet):
            return [(EMPTY, EMPTY, TRUE)]
        if isinstance(t, SetVar):
            c = self.ctx.get(t.name)
            p: object = SetVar(pos_name(t.name))
            n: object = EMPTY if t.name in self.nonneg else SetVar(neg_name(t.name))
            if c == "+":
                n = EMPTY
            elif c == "-":
                p = EMPTY
            elif c == "0":
                p, n = EMPTY, EMPTY
            return [(p, n, TRUE)]
        if isinstance(t, Singleton):
            return [
                (Singleton(a), EMPTY, g) if sign > 0 else (EMPTY, Singleton(a), g)
                for sign, a, g in self.int_options(t.elem)
            ]
        if isinstance(t, (SetUnion, SetInter, SetDiff)):
            out = []
            for lp, ln, lg in self.set_options(t.left):
                for rp, rn, rg in self.set_options(t.right):
                    out.append((_set_op(t, lp, rp), _set_op(t, ln, rn), conj(lg, rg)))
            return out
        raise SlidsetError(f"Not a set term: {t!r}")

    # --- formulas ---

    def formula(self, f: Formula) -> Formula:
        if isinstance(f, (TrueF, FalseF)):
            return f
        if isinstance(f, Member):
            return self.formula(SetCmp(Singleton(f.elem), "<=", f.set))
        if isinstance(f, SetCmp):
            return self._set_atom(f)
        if isinstance(f, IntCmp):
            return self._int_atom(f)
        if isinstance(f, (CountAtom, DivAtom)):
            return self._count_atom(f)
        if isinstance(f, Spacing):
            return self._spacing(f)
        if isinstance(f, And):
            return conj(self.formula(a) for a in f.args)
        if isinstance(f, Or):
            return disj(self.formula(a) for a in f.args)
        if isinstance(f, Not):
            return neg(self.formula(f.arg))
        if isinstance(f, Implies):
            return implies(self.formula(f.left), self.formula(f.right))
        if isinstance(f, Iff):
            return Iff(self.formula(f.left), self.formula(f.right))
        if isinstance(f, (Forall, Exists)):
            return self._quantifier(f)
        raise SlidsetError(f"Cannot translate {f!r}")

    def _quantifier(self, f) -> Formula:
        v = f.var
        tracks = [IntVar(pos_name(v.name)), IntVar(neg_name(v.name))] if isinstance(v, IntVar) \
            else [SetVar(pos_name(v.name)), SetVar(neg_name(v.name))]
        universal = isinstance(f, Forall)
        if self.mode == "local":
            body = self.formula(f.body)
            guard = validity(v, frozenset())
            if universal:
                return forall(tracks, implies(guard, body))
            return exists(tracks, conj(guard, body))
        parts = []
        saved = self.ctx.get(v.name)
        try:
            for c in _contexts(v, frozenset()):
                self.ctx[v.name] = c
                guard = _context_guard(v, c, frozenset())
                body = self.formula(f.body)
                parts.append(forall(tracks, implies(guard, body)) if universal else exists(tracks, conj(guard, body)))
        finally:
            if saved is None:
                self.ctx.pop(v.name, None)
            else:
                self.ctx[v.name] = saved
        return conj(parts) if universal else disj(parts)

    def _set_atom(self, a: SetCmp) -> Formula:
        op = a.op
        left, right = a.left, a.right
        if op == ">=":
            op, left, right = "<=", right, left
        out = []
        for lp, ln, lg in self.set_options(left):
            for rp, rn, rg in self.set_options(right):
                out.append(conj(lg, rg, _set_cmp(lp, op, rp), _set_cmp(ln, op, rn)))
        return disj(out)

    def _int_atom(self, a: IntCmp) -> Formula:
        out = []
        for s1, x, g1 in self.int_options(a.left):
            for s2, y, g2 in self.int_options(a.right):
                out.append(conj(g1, g2, _signed_cmp(s1, x, a.op, s2, y, a.offset)))
        return disj(out)

    def _count_atom(self, a) -> Formula:
        coeffs, const = linearize(a.term)
        per_item = []
        for item, c in coeffs.items():
            if isinstance(item, Card):
                per_item.append([
                    ({Card(sp): c, Card(sn): c} if not isinstance(sn, EmptySet) else {Card(sp): c}, g)
                    for sp, sn, g in self.set_options(item.arg)
                ])
            else:
                per_item.append([({x: sign * c}, g) for sign, x, g in self.int_options(item)])
        out = []
        for combo in itertools.product(*per_item):
            merged: dict = {}
            for part, _ in combo:
                for k, v in part.items():
                    merged[k] = merged.get(k, 0) + v
            constant = const
            for k in [k for k in merged if isinstance(k, Card) and isinstance(k.arg, EmptySet)]:
                merged.pop(k)
            term = from_linear(merged, constant)
            atom = CountAtom(term, a.op) if isinstance(a, CountAtom) else DivAtom(term, a.modulus, a.residue)
            out.append(conj([g for _, g in combo], atom))
        return disj(out)

    def _spacing(self, a: Spacing) -> Formula:
        # the only gap across zero is between the largest negative and the smallest natural element
        out = []
        for sp, sn, g in self.set_options(a.set):
            parts = [g]
            parts += [Spacing(s, a.low, a.high) for s in (sp, sn) if not isinstance(s, EmptySet)]
            if not isinstance(sp, EmptySet) and not isinstance(sn, EmptySet):
                gap = [_sum_cmp(Min(sp), Min(sn), ">=", a.low)]
                if a.high is not None:
                    gap.append(_sum_cmp(Min(sp), Min(sn), "<=", a.high))
                parts.append(implies(conj(nonempty(sp), nonempty(sn)), conj(gap)))
            out.append(conj(parts))
        return disj(out)


def _set_op(t, a, b):
    if isinstance(t, SetUnion):
        if isinstance(a, EmptySet):
            return b
        return a if isinstance(b, EmptySet) else SetUnion(a, b)
    if isinstance(t, SetInter):
        if (isinstance(a, EmptySet) and not _anchored(b)) or (isinstance(b, EmptySet) and not _anchored(a)):
            return EMPTY
        return SetInter(a, b)
    if isinstance(a, EmptySet) and not _anchored(b):
        return EMPTY
    return a if isinstance(b, EmptySet) else SetDiff(a, b)


def _set_cmp(a, op: str, b) -> Formula:
    if isinstance(a, EmptySet) and not _anchored(b) and (op == "<=" or isinstance(b, EmptySet)):
        return TRUE
    return SetCmp(a, op, b)


def _signed_cmp(s1: int, a, op: str, s2: int, b, c: int) -> Formula:
    """``s1*a op s2*b + c`` for natural-valued terms a and b."""
    if s1 > 0 and s2 > 0:
        return IntCmp(a, op, b, c)
    if s1 < 0 and s2 < 0:
        return IntCmp(b, op, a, c)
    if s1 > 0:
        return _sum_cmp(a, b, op, c)
    return _sum_cmp(a, b, _FLIP[op], -c)


def _sum_cmp(a, b, op: str, k: int) -> Formula:
    """``a + b op k`` over naturals, as a finite case split on the smaller side."""
    if isinstance(a, IntConst):
        return IntCmp(b, op, IntConst(k - a.value))
    if isinstance(b, IntConst):
        return IntCmp(a, op, IntConst(k - b.value))
    if op == "<=":
        return disj(conj(int_eq(a, IntConst(i)), IntCmp(b, "<=", IntConst(k - i))) for i in range(k + 1))
    if op == "=":
        return disj(conj(int_eq(a, IntConst(i)), int_eq(b, IntConst(k - i))) for i in range(k + 1))
    return disj(
        [conj(IntCmp(a, ">=", IntConst(max(k, 0))), IntCmp(b, ">=", IntConst(0)))]
        + [conj(int_eq(a, IntConst(i)), IntCmp(b, ">=", IntConst(k - i))) for i in range(max(k, 0))]
    )



def _anchored(t) -> bool:
    """Whether a set term may be undefined because it contains min or max."""
    if isinstance(t, (Min, Max)):
        return True
    if isinstance(t, Singleton):
        return _anchored(t.elem)
    if isinstance(t, (SetUnion, SetInter, SetDiff)):
        return _anchored(t.left) or _anchored(t.right)
    return False
