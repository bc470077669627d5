"""
Exact evaluation of formulas on small finite models.

Quantifiers range over a window: [-U, U] for the integer domain, [0, U] for
the natural-number domain used by translated formulas, and subsets thereof
for set quantifiers. The evaluator is the test oracle of the whole package,
so it favours obvious correctness; the only optimisation is candidate
narrowing, which skips quantifier instances that cannot change the result.
"""
from __future__ import annotations

import itertools
import logging
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from slidset.config import get_eval_window
from slidset.core.errors import UnboundVariable
from slidset.core.formula import (
    And, Card, CountAtom, DivAtom, EmptySet, Exists, FalseF, Forall, Formula, Iff,
    Implies, IntCmp, IntConst, IntVar, Max, MDiff, Member, Min, MScale, MSum, Not,
    Or, SetCmp, SetDiff, SetInter, SetUnion, SetVar, Singleton, Spacing, TrueF,
)
from slidset.core.transform import compare

logger = logging.getLogger(__name__)


class BoundedModel(BaseModel):
    """A finite interpretation: integer and set assignments plus the quantifier window."""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    universe: int = Field(default_factory=get_eval_window, ge=0)
    ints: dict[str, int] = Field(default_factory=dict)
    sets: dict[str, frozenset[int]] = Field(default_factory=dict)
    domain: Literal["int", "nat"] = "int"

    def window(self) -> list[int]:
        low = 0 if self.domain == "nat" else -self.universe
        return list(range(low, self.universe + 1))


def eval_bounded(m: BoundedModel, f: Formula) -> bool:
    """Truth value of ``f`` in ``m``; undefined min/max make the enclosing atom false."""
    for var in f.free:
        table = m.ints if isinstance(var, IntVar) else m.sets
        if var.name not in table:
            raise UnboundVariable(var.name)
    return _Evaluator(m).holds(f)


def eval_term(m: BoundedModel, t) -> int | frozenset[int] | None:
    """Value of an integer, set or counting term; None when undefined."""
    ev = _Evaluator(m)
    if isinstance(t, (EmptySet, SetVar, Singleton, SetUnion, SetInter, SetDiff)):
        return ev.set_term(t)
    return ev.count_term(t)


class _Evaluator:
    def __init__(self, m: BoundedModel):
        self.ints: dict[str, int] = dict(m.ints)
        self.sets: dict[str, frozenset[int]] = {k: frozenset(v) for k, v in m.sets.items()}
        self.window = m.window()
        self.window_set = frozenset(self.window)
        self._subsets: list[frozenset[int]] | None = None

    # --- terms ---

    def int_term(self, t) -> int | None:
        if isinstance(t, IntConst):
            return t.value
        if isinstance(t, IntVar):
            return self.ints[t.name]
        if isinstance(t, Min):
            s = self.set_term(t.arg)
            return min(s) if s else None
        if isinstance(t, Max):
            s = self.set_term(t.arg)
            return max(s) if s else None
        raise TypeError(f"Not an integer term: {t!r}")

    def set_term(self, t) -> frozenset[int] | None:
        if isinstance(t, EmptySet):
            return frozenset()
        if isinstance(t, SetVar):
            return self.sets[t.name]
        if isinstance(t, Singleton):
            v = self.int_term(t.elem)
            return None if v is None else frozenset((v,))
        left = self.set_term(t.left)
        if left is None:
            return None
        right = self.set_term(t.right)
        if right is None:
            return None
        if isinstance(t, SetUnion):
            return left | right
        if isinstance(t, SetInter):
            return left & right
        if isinstance(t, SetDiff):
            return left - right
        raise TypeError(f"Not a set term: {t!r}")

    def count_term(self, t) -> int | None:
        if isinstance(t, (IntConst, IntVar, Min, Max)):
            return self.int_term(t)
        if isinstance(t, Card):
            s = self.set_term(t.arg)
            return None if s is None else len(s)
        if isinstance(t, MScale):
            v = self.count_term(t.arg)
            return None if v is None else t.coeff * v
        left = self.count_term(t.left)
        right = self.count_term(t.right)
        if left is None or right is None:
            return None
        if isinstance(t, MSum):
            return left + right
        if isinstance(t, MDiff):
            return left - right
        raise TypeError(f"Not a counting term: {t!r}")

    # --- formulas ---

    def holds(self, f) -> bool:
        if isinstance(f, TrueF):
            return True
        if isinstance(f, FalseF):
            return False
        if isinstance(f, SetCmp):
            left, right = self.set_term(f.left), self.set_term(f.right)
            if left is None or right is None:
                return False
            return _set_compare(left, f.op, right)
        if isinstance(f, IntCmp):
            left, right = self.int_term(f.left), self.int_term(f.right)
            if left is None or right is None:
                return False
            return compare(left, f.op, right + f.offset)
        if isinstance(f, CountAtom):
            v = self.count_term(f.term)
            return v is not None and compare(v, f.op, 0)
        if isinstance(f, DivAtom):
            v = self.count_term(f.term)
            return v is not None and (v - f.residue) % f.modulus == 0
        if isinstance(f, Member):
            e, s = self.int_term(f.elem), self.set_term(f.set)
            return e is not None and s is not None and e in s
        if isinstance(f, Spacing):
            s = self.set_term(f.set)
            if s is None:
                return False
            gaps = [b - a for a, b in zip(sorted(s), sorted(s)[1:])]
            return all(f.low <= g and (f.high is None or g <= f.high) for g in gaps)
        if isinstance(f, And):
            return all(self.holds(a) for a in f.args)
        if isinstance(f, Or):
            return any(self.holds(a) for a in f.args)
        if isinstance(f, Not):
            return not self.holds(f.arg)
        if isinstance(f, Implies):
            return not self.holds(f.left) or self.holds(f.right)
        if isinstance(f, Iff):
            return self.holds(f.left) == self.holds(f.right)
        if isinstance(f, Forall):
            return not self._witness(f.var, f.body, want=False)
        if isinstance(f, Exists):
            return self._witness(f.var, f.body, want=True)
        raise TypeError(f"Not a formula: {f!r}")

    def _witness(self, var, body, want: bool) -> bool:
        """Whether some value of ``var`` in the window makes ``body`` evaluate to ``want``."""
        table = self.ints if isinstance(var, IntVar) else self.sets
        saved = table.get(var.name, _MISSING)
        candidates = self._cands(body, var, want)
        values = self._domain(var) if candidates is None else self._in_window(var, candidates)
        try:
            for value in values:
                table[var.name] = value
                if self.holds(body) == want:
                    return True
            return False
        finally:
            if saved is _MISSING:
                table.pop(var.name, None)
            else:
                table[var.name] = saved

    def _domain(self, var) -> list:
        if isinstance(var, IntVar):
            return self.window
        if self._subsets is None:
            self._subsets = [
                frozenset(c)
                for r in range(len(self.window) + 1)
                for c in itertools.combinations(self.window, r)
            ]
        return self._subsets

    def _in_window(self, var, candidates) -> list:
        if isinstance(var, IntVar):
            return sorted(c for c in candidates if c in self.window_set)
        kept = [c for c in candidates if c <= self.window_set]
        return sorted(kept, key=lambda s: (len(s), sorted(s)))

    # --- candidate narrowing ---
    # _cands returns a superset of the values of var for which f evaluates to
    # want, or None when no useful bound is known.

    def _cands(self, f, var, want: bool):
        if var not in f.free:
            if not self._known(f):
                return None
            return None if self.holds(f) == want else set()
        if isinstance(f, (Exists, Forall)):
            # the inner variable stays unknown, so the bound holds for all its values
            table = self.ints if isinstance(f.var, IntVar) else self.sets
            return None if f.var.name in table else self._cands(f.body, var, want)
        if isinstance(f, Not):
            return self._cands(f.arg, var, not want)
        if isinstance(f, And):
            parts = [self._cands(a, var, want) for a in f.args]
            return _intersect(parts) if want else _union(parts)
        if isinstance(f, Or):
            parts = [self._cands(a, var, want) for a in f.args]
            return _union(parts) if want else _intersect(parts)
        if isinstance(f, Implies):
            if want:
                return _union([self._cands(f.left, var, False), self._cands(f.right, var, True)])
            return _intersect([self._cands(f.left, var, True), self._cands(f.right, var, False)])
        if isinstance(f, (Member, SetCmp, IntCmp)):
            return self._atom_cands(f, var, want)
        return None

    def _known(self, f) -> bool:
        for v in f.free:
            table = self.ints if isinstance(v, IntVar) else self.sets
            if v.name not in table:
                return False
        return True

    def _bound(self, t, var) -> bool:
        for v in t.free:
            if v == var:
                return False
            table = self.ints if isinstance(v, IntVar) else self.sets
            if v.name not in table:
                return False
        return True

    def _atom_cands(self, a, var, want: bool):
        if isinstance(var, IntVar):
            return self._int_atom_cands(a, var, want)
        if not want or not isinstance(a, SetCmp):
            return None
        return self._set_atom_cands(a, var)

    def _int_atom_cands(self, a, var, want: bool):
        if isinstance(a, SetCmp) and a.op == "<=" and a.left == Singleton(var):
            a = Member(var, a.right)
        if isinstance(a, Member):
            if a.elem != var or not want or not self._bound(a.set, var):
                return None
            s = self.set_term(a.set)
            return set() if s is None else set(s)
        if isinstance(a, IntCmp):
            if a.left == var and self._bound(a.right, var):
                other = self.int_term(a.right)
                if other is None:
                    return None if not want else set()
                return {w for w in self.window if compare(w, a.op, other + a.offset) == want}
            if a.right == var and self._bound(a.left, var):
                other = self.int_term(a.left)
                if other is None:
                    return None if not want else set()
                return {w for w in self.window if compare(other, a.op, w + a.offset) == want}
        return None

    def _set_atom_cands(self, a: SetCmp, var):
        if a.op in ("<=", "<") and a.left == var and self._bound(a.right, var):
            upper = self.set_term(a.right)
            return set() if upper is None else _between(frozenset(), upper)
        if a.op in (">=", ">") and a.right == var and self._bound(a.left, var):
            upper = self.set_term(a.left)
            return set() if upper is None else _between(frozenset(), upper)
        if a.op != "=":
            return None
        for fixed_side, other_side in ((a.left, a.right), (a.right, a.left)):
            if self._bound(fixed_side, var):
                return self._equation_cands(fixed_side, other_side, var)
        return self._self_equation_cands(a, var)

    def _equation_cands(self, fixed_side, other_side, var):
        """``fixed = var u rest``: var lies between fixed minus rest and fixed."""
        target = self.set_term(fixed_side)
        if target is None:
            return set()
        operands = _union_operands(other_side)
        if var not in operands:
            return None
        rest: frozenset[int] = frozenset()
        rest_known = True
        for op in operands:
            if op == var or _is_anchor_of(op, var):
                continue
            if self._bound(op, var):
                value = self.set_term(op)
                if value is None:
                    return set()
                rest |= value
            else:
                rest_known = False
        lower = target - rest if rest_known else frozenset()
        return _between(lower, target)

    def _self_equation_cands(self, a: SetCmp, var):
        """``var = fixed u {min var} ...``: var is fixed plus a few window elements."""
        if a.left == var:
            operands = _union_operands(a.right)
        elif a.right == var:
            operands = _union_operands(a.left)
        else:
            return None
        base: frozenset[int] = frozenset()
        extra = 0
        for op in operands:
            if _is_anchor_of(op, var):
                extra += 1
            elif self._bound(op, var):
                value = self.set_term(op)
                if value is None:
                    return set()
                base |= value
            else:
                return None
        result = {base}
        for k in range(1, extra + 1):
            for combo in itertools.combinations(self.window, k):
                result.add(base | frozenset(combo))
        return result


_MISSING = object()


def _set_compare(left: frozenset[int], op: str, right: frozenset[int]) -> bool:
    if op == "=":
        return left == right
    if op == "<=":
        return left <= right
    if op == ">=":
        return left >= right
    if op == "<":
        return left < right
    if op == ">":
        return left > right
    raise ValueError(f"Unknown set operator {op!r}")


def _union_operands(t) -> list:
    if isinstance(t, SetUnion):
        return _union_operands(t.left) + _union_operands(t.right)
    return [t]


def _is_anchor_of(t, var) -> bool:
    return isinstance(t, Singleton) and isinstance(t.elem, (Min, Max)) and t.elem.arg == var


def _between(lower: frozenset[int], upper: frozenset[int]) -> set[frozenset[int]]:
    if not lower <= upper:
        return set()
    free = sorted(upper - lower)
    return {
        lower | frozenset(c)
        for r in range(len(free) + 1)
        for c in itertools.combinations(free, r)
    }


def _union(parts: list):
    result = set()
    for p in parts:
        if p is None:
            return None
        result |= p
    return result


def _intersect(parts: list):
    result = None
    for p in parts:
        if p is None:
            continue
        result = set(p) if result is None else result & p
    return result
