"""
Transitive closures of saturated difference-bound set relations.

The closure of R is the union of all iterates R^n for n >= 0, so every result
contains the identity disjunct ``S = S'``. Which construction applies is read
off the saturated set part: no extra elements (case I), the minimum only
(case II), the maximum only (case III, by mirroring case II) or both extrema
(case IV), refined by whether S' is surely nonempty and by the strictness of
the min and max pairs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from slidset.core.errors import IndependenceViolation, NonLinear, NotSaturated
from slidset.core.formula import (
    FALSE, TRUE, Card, CountAtom, DivAtom, Formula, IntCmp, IntConst, IntTerm, IntVar, Max,
    MDiff, Min, MScale, MTerm, SetDiff, SetTerm, SetVar, Singleton, Spacing, conj, disj,
    exists, from_linear, implies, int_eq, lt, member, neg, nonempty, set_eq, subset, union,
)
from slidset.core.printer import show
from slidset.core.transform import all_names, fresh_name, mirror
from slidset.services.dbs import (
    MAX_PAIR, MIN_PAIR, SOURCE_PAIR, TARGET_PAIR, Anchor, Bound, DbsRelation,
    SaturatedDbs, classify, partition, saturate, validate_saturated,
)
from slidset.services.models import TcTrace, Unsat
from slidset.services.presburger import (
    Lin, LinAtom, LinDiv, QAnd, QConst, QNot, QOr, QfpaFormula, eliminate_exists,
    lin_atom, qand,
)

logger = logging.getLogger(__name__)

_FLIP = {"=": "=", "<=": ">=", ">=": "<=", "<": ">", ">": "<"}


@dataclass(frozen=True)
class TcResult:
    """Closure formula, its non-reflexive part, and how it was derived."""

    formula: Formula
    positive: Formula
    trace: TcTrace


@dataclass(frozen=True)
class ScaledBound:
    """``lhs <= rhs + coeff * x`` for the eliminated step count x."""

    lhs: IntTerm
    rhs: IntTerm
    coeff: int


@dataclass(frozen=True)
class StepWindow:
    """Numbers of steps n that lead from the source to the target of a closure.

    Each ``(term, k)`` of ``low`` requires ``term <= k * n``. ``high`` bounds n
    from above unless ``unbounded`` holds; None means n has no upper bound.
    ``bound`` names auxiliary sets fixed by ``definition``.
    """

    low: tuple[tuple[MTerm, int], ...]
    high: MTerm | None = None
    unbounded: Formula = FALSE
    bound: tuple[SetVar, ...] = ()
    definition: Formula = TRUE


class _Names:
    """Deterministic supply of auxiliary variable names."""

    def __init__(self, avoid: Iterable[str]):
        self.used = set(avoid)
        self.introduced: list[str] = []

    def set_var(self, base: str) -> SetVar:
        name = fresh_name(base, self.used)
        self.used.add(name)
        self.introduced.append(name)
        return SetVar(name)

    def int_var(self, base: str) -> IntVar:
        name = fresh_name(base, self.used)
        self.used.add(name)
        return IntVar(name)


# === Building blocks ===

def _bounds_on(bounds: Iterable[Bound], terms: dict[Anchor, IntTerm]) -> Formula:
    return conj(IntCmp(terms[b.lhs], "<=", terms[b.rhs], b.c) for b in bounds)


def _source_bounds(r: DbsRelation, x: SetTerm) -> Formula:
    return _bounds_on(partition(r, SOURCE_PAIR), {Anchor.MIN_S: Min(x), Anchor.MAX_S: Max(x)})


def _succ_guard(chain: SetTerm, bounds: list[Bound], first: Anchor, second: Anchor) -> Formula:
    """Every pair of consecutive elements of ``chain`` satisfies ``bounds``.

    ``first`` receives the smaller element of the pair and ``second`` the larger.
    """
    low, high = 1, None
    for bd in bounds:
        if (bd.lhs, bd.rhs) == (first, second):
            low = max(low, -bd.c)
        elif (bd.lhs, bd.rhs) == (second, first):
            high = bd.c if high is None else min(high, bd.c)
    return Spacing(chain, low, high)


def unfold_n(r: SaturatedDbs | DbsRelation, n: int, names: _Names | None = None) -> Formula:
    """The n-fold composition of the relation with itself."""
    if n < 1:
        raise ValueError("Unfolding needs at least one step")
    rel = r.relation if isinstance(r, SaturatedDbs) else r
    names = names or _Names({rel.source, rel.target})
    middle = [names.set_var(rel.source) for _ in range(n - 1)]
    chain: list[SetTerm] = [SetVar(rel.source), *middle, SetVar(rel.target)]
    body = conj(rel.formula(chain[i], chain[i + 1]) for i in range(n))
    return exists(middle, body)


# === Single-parameter closure ===

def tc_single(s: SaturatedDbs) -> TcResult:
    problems = validate_saturated(s)
    if problems:
        logger.error(f"Relation {s.relation.source}->{s.relation.target} is not saturated: {problems}")
        raise NotSaturated("; ".join(problems))
    r = s.relation
    src, tgt = SetVar(r.source), SetVar(r.target)
    names = _Names({r.source, r.target})

    if not s.t_s:
        positive = r.formula()
        trace = _trace(s, "I", "", names)
    elif s.t_s == {Anchor.MIN_S}:
        positive, trace = _case_two(s, names)
    elif s.t_s == {Anchor.MAX_S}:
        mirrored = SaturatedDbs(r.mirrored(), s.nonempty_source, s.nonempty_target, s.inverted)
        positive, inner = _case_two(mirrored, names)
        positive = mirror(positive)
        trace = inner.model_copy(update={
            "case": "III",
            "strict_min": inner.strict_max,
            "strict_max": inner.strict_min,
            "partitions": _partitions(s),
            "notes": inner.notes + ["mirror of case II"],
        })
    else:
        positive, trace = _case_four(s, names)

    formula = disj(set_eq(src, tgt), positive)
    logger.info(f"Closure of {r.source}->{r.target}: case {trace.case} {trace.subcase}".rstrip())
    return TcResult(formula, positive, trace)


def tc_relation(r: DbsRelation) -> TcResult:
    """Closure of an arbitrary relation; saturates first and handles the reversed set part."""
    saturated = saturate(r)
    if isinstance(saturated, Unsat):
        logger.info(f"Relation {r.source}->{r.target} is unsatisfiable, closure is the identity")
        src, tgt = SetVar(r.source), SetVar(r.target)
        trace = TcTrace(case="Unsat", reversed=r.reversed, notes=["unsatisfiable relation"])
        return TcResult(set_eq(src, tgt), FALSE, trace)
    # The closure of the inverse, read with the original variable names, is the closure of r.
    return tc_single(saturated)


def _case_two(s: SaturatedDbs, names: _Names) -> tuple[Formula, TcTrace]:
    r = s.relation
    src, tgt = SetVar(r.source), SetVar(r.target)
    if not s.nonempty_target:
        u = names.set_var(r.source)
        rest = SetDiff(src, u)
        block = conj(
            set_eq(u, union(tgt, Singleton(Min(u)))),
            subset(u, src),
            nonempty(src),
            implies(conj(nonempty(rest), nonempty(u)), lt(Max(rest), Min(u))),
            _source_bounds(r, src),
            _source_bounds(r, u),
        )
        return exists([u], block), _trace(s, "II", "PossiblyEmpty", names)

    strict = classify(s, MIN_PAIR) == "Strict"
    twice = unfold_n(s, 2, names)
    a, b = names.set_var(r.source), names.set_var(r.source)
    removed = SetDiff(a, b)
    below = lt(Max(removed), Min(b))
    block = conj(
        subset(b, a),
        conj(nonempty(removed), below) if strict else implies(nonempty(removed), below),
        r.formula(src, a),
        r.formula(b, tgt),
        _succ_guard(union(removed, Singleton(Min(b))), partition(r, MIN_PAIR), Anchor.MIN_S, Anchor.MIN_T),
    )
    positive = disj(r.formula(), twice, exists([a, b], block))
    trace = _trace(s, "II", "SurelyNonempty", names)
    trace.notes.append("strict min pair" if strict else "non-strict min pair")
    return positive, trace


def _case_four(s: SaturatedDbs, names: _Names) -> tuple[Formula, TcTrace]:
    r = s.relation
    src, tgt = SetVar(r.source), SetVar(r.target)
    if not s.nonempty_target:
        low, mid, high = names.set_var(r.source), names.set_var(r.source), names.set_var(r.source)
        block = conj(
            set_eq(mid, union(tgt, Singleton(Min(mid)), Singleton(Max(mid)))),
            set_eq(src, union(low, mid, high)),
            implies(nonempty(low), lt(Max(low), Min(mid))),
            implies(nonempty(high), lt(Max(mid), Min(high))),
            _source_bounds(r, src),
            _source_bounds(r, mid),
        )
        return exists([low, mid, high], block), _trace(s, "IV", "PossiblyEmpty", names)

    strict_min = classify(s, MIN_PAIR) == "Strict"
    strict_max = classify(s, MAX_PAIR) == "Strict"
    twice = unfold_n(s, 2, names)
    a, b = names.set_var(r.source), names.set_var(r.source)
    low, high = names.set_var(r.source), names.set_var(r.source)
    removed = SetDiff(a, b)
    below = lt(Max(low), Min(b))
    above = lt(Max(b), Min(high))

    sync: list[Formula] = []
    if strict_min and strict_max:
        sync.append(CountAtom(MDiff(Card(low), Card(high)), "="))
        steps = [
            ScaledBound(_anchor(bd.lhs, a, b), _anchor(bd.rhs, a, b), bd.c)
            for bd in partition(r, MIN_PAIR) + partition(r, MAX_PAIR)
        ]
        sync.append(quant_elim_scale(steps, names.int_var("x").name))
    elif strict_min:
        sync.append(CountAtom(MDiff(Card(high), Card(low)), "<="))
    elif strict_max:
        sync.append(CountAtom(MDiff(Card(low), Card(high)), "<="))

    block = conj(
        subset(b, a),
        subset(low, removed),
        set_eq(high, SetDiff(removed, low)),
        conj(nonempty(low), below) if strict_min else implies(nonempty(low), below),
        conj(nonempty(high), above) if strict_max else implies(nonempty(high), above),
        r.formula(src, a),
        r.formula(b, tgt),
        sync,
        _succ_guard(union(low, Singleton(Min(b))), partition(r, MIN_PAIR), Anchor.MIN_S, Anchor.MIN_T),
        _succ_guard(union(high, Singleton(Max(b))), partition(r, MAX_PAIR), Anchor.MAX_T, Anchor.MAX_S),
    )
    positive = disj(r.formula(), twice, exists([a, b, low, high], block))
    trace = _trace(s, "IV", "SurelyNonempty", names)
    trace.notes.append(
        f"{'strict' if strict_min else 'non-strict'} min pair, "
        f"{'strict' if strict_max else 'non-strict'} max pair"
    )
    return positive, trace


def _anchor(anchor: Anchor, a: SetVar, b: SetVar) -> IntTerm:
    """Anchors of one step read on the first and last sets of a chain of steps."""
    target = a if anchor.on_source else b
    return Min(target) if anchor.is_min else Max(target)


def _partitions(s: SaturatedDbs) -> dict[str, list[str]]:
    r = s.relation
    labels = {
        "min-min": MIN_PAIR, "max-max": MAX_PAIR, "source": SOURCE_PAIR, "target": TARGET_PAIR,
    }
    out: dict[str, list[str]] = {}
    for label, pair in labels.items():
        bounds = partition(r, pair)
        if bounds:
            out[label] = [show(r.int_part(bounds=[bd])) for bd in bounds]
    return out


def _trace(s: SaturatedDbs, case: str, subcase: str, names: _Names) -> TcTrace:
    strict_min = strict_max = None
    if s.nonempty_source and s.nonempty_target:
        strict_min = classify(s, MIN_PAIR) == "Strict"
        strict_max = classify(s, MAX_PAIR) == "Strict"
    return TcTrace(
        case=case,
        subcase=subcase,
        reversed=s.inverted,
        strict_min=strict_min,
        strict_max=strict_max,
        partitions=_partitions(s),
        auxiliaries=list(names.introduced),
    )


# === Synchronised closure ===

def step_window(s: SaturatedDbs, names: _Names) -> StepWindow:
    """Step counts of the closure of ``s`` for a pair it relates."""
    r = s.relation
    src, tgt = SetVar(r.source), SetVar(r.target)
    removed = MDiff(Card(src), Card(tgt))
    one = IntConst(1)
    if not s.t_s:
        return StepWindow(((one, 1),))
    if s.t_s == {Anchor.MAX_S}:
        mirrored = SaturatedDbs(r.mirrored(), s.nonempty_source, s.nonempty_target, s.inverted)
        window = step_window(mirrored, names)
        return StepWindow(window.low, window.high, mirror(window.unbounded))
    if s.t_s == {Anchor.MIN_S}:
        if s.nonempty_target and classify(s, MIN_PAIR) == "Strict":
            return StepWindow(((removed, 1),), removed)
        return StepWindow(((removed, 1), (one, 1)), removed, _stutter(r, names))
    if not s.nonempty_target:
        return StepWindow(((removed, 2), (one, 1)))

    strict_min = classify(s, MIN_PAIR) == "Strict"
    strict_max = classify(s, MAX_PAIR) == "Strict"
    low, high = names.set_var(r.source), names.set_var(r.source)
    extra = SetDiff(src, tgt)
    definition = conj(
        subset(low, extra),
        set_eq(high, SetDiff(extra, low)),
        implies(nonempty(low), lt(Max(low), Min(tgt))),
        implies(nonempty(high), lt(Max(tgt), Min(high))),
    )
    if strict_min or strict_max:
        n = Card(low) if strict_min else Card(high)
        return StepWindow(((n, 1),), n, bound=(low, high), definition=definition)
    # a step may remove one extremum, both or none
    return StepWindow(((Card(low), 1), (Card(high), 1), (one, 1)), bound=(low, high), definition=definition)


def _stutter(r: DbsRelation, names: _Names) -> Formula:
    """Some set on the chain from source to target is related to itself.

    Removing minima one at a time, the chain's minima are the removed
    elements followed by the target's minimum, while its maximum stays put.
    """
    src, tgt = SetVar(r.source), SetVar(r.target)
    e = names.int_var("e")
    terms = {Anchor.MIN_S: e, Anchor.MIN_T: e, Anchor.MAX_S: Max(src), Anchor.MAX_T: Max(src)}
    on_chain = disj(member(e, SetDiff(src, tgt)), conj(nonempty(tgt), int_eq(e, Min(tgt))))
    return exists([e], conj(on_chain, _bounds_on(r.bounds, terms)))


def _same_steps(windows: Sequence[StepWindow]) -> Formula:
    """Some step count lies in every window."""
    parts = []
    for i, w in enumerate(windows):
        for j, v in enumerate(windows):
            if i == j or v.high is None:
                continue
            for term, k in w.low:
                fits = CountAtom(MDiff(term, v.high if k == 1 else MScale(k, v.high)), "<=")
                parts.append(disj(v.unbounded, fits))
    return conj(parts)


def tc_multi(rs: Sequence[SaturatedDbs]) -> TcResult:
    """Closure of the conjunction of independent relations iterated in lockstep.

    Every component must reach its target in the same number of steps: the
    step windows of the components are intersected, and the min and max pairs
    are scaled by a shared step count. The windows are exact except for
    components that remove both extrema with neither pair strict, or whose
    target may become empty while removing both extrema; those are
    over-approximated.
    """
    seen: set[str] = set()
    for s in rs:
        pair = {s.relation.source, s.relation.target}
        if pair & seen or len(pair) != 2:
            logger.error(f"Relations share set variables: {sorted(pair & seen)}")
            raise IndependenceViolation(f"Set variables {sorted(pair & seen) or sorted(pair)} are shared between components")
        seen |= pair

    results = [tc_single(s) for s in rs]
    names = _Names(seen.union(*(all_names(res.positive) for res in results)))
    windows = [step_window(s, names) for s in rs]
    scaled: list[ScaledBound] = []
    for s in rs:
        r = s.relation
        for bd in partition(r, MIN_PAIR) + partition(r, MAX_PAIR):
            scaled.append(ScaledBound(r.anchor_term(bd.lhs), r.anchor_term(bd.rhs), bd.c))
    x = names.int_var("x").name
    identity = conj(set_eq(SetVar(s.relation.source), SetVar(s.relation.target)) for s in rs)
    positive = exists(
        [v for w in windows for v in w.bound],
        conj(
            [res.positive for res in results],
            [w.definition for w in windows],
            _same_steps(windows),
            quant_elim_scale(scaled, x),
        ),
    )
    trace = TcTrace(
        case="multi",
        subcase=",".join(res.trace.case for res in results),
        auxiliaries=[n for res in results for n in res.trace.auxiliaries] + list(names.introduced),
        notes=[
            f"{len(scaled)} scaled bounds synchronised on {x}",
            f"{sum(w.high is not None for w in windows)} of {len(windows)} step windows bounded above",
        ],
    )
    logger.info(f"Synchronised closure of {len(rs)} relations with {len(scaled)} scaled bounds")
    return TcResult(disj(identity, positive), positive, trace)


def quant_elim_scale(bounds: Sequence[ScaledBound], x: str = "x") -> Formula:
    """Quantifier-free equivalent of ``exists x > 0`` of the scaled bounds."""
    terms: dict[str, IntTerm] = {}

    def lin(t: IntTerm) -> Lin:
        if isinstance(t, IntConst):
            return Lin.constant(t.value)
        if not isinstance(t, (Min, Max, IntVar)):
            raise NonLinear(f"Scaled bounds relate anchor terms only, got {show(t)}")
        name = show(t)
        if name == x:
            raise NonLinear(f"Term {name} clashes with the step variable")
        terms[name] = t
        return Lin.var(name)

    exprs: list[Lin] = [lin(b.lhs) - lin(b.rhs) - Lin.var(x, b.coeff) for b in bounds]
    atoms: list[QfpaFormula] = []
    for e in exprs:
        if -e in exprs:
            canon = max(e, -e, key=lambda v: (v.coeffs, v.const))
            atom = lin_atom(canon, "=")
        else:
            atom = lin_atom(e, "<=")
        if atom not in atoms:
            atoms.append(atom)
    result = eliminate_exists(qand(atoms), x, lower=1)
    return _from_qfpa(result, terms)


def _from_qfpa(f: QfpaFormula, terms: dict[str, IntTerm]) -> Formula:
    if isinstance(f, QConst):
        return conj() if f.value else disj()
    if isinstance(f, QAnd):
        return conj(_from_qfpa(a, terms) for a in f.args)
    if isinstance(f, QOr):
        return disj(_from_qfpa(a, terms) for a in f.args)
    if isinstance(f, QNot):
        return neg(_from_qfpa(f.arg, terms))
    if isinstance(f, LinDiv):
        return DivAtom(from_linear({terms[k]: c for k, c in f.expr.coeffs}, f.expr.const), f.modulus)
    return _from_lin_atom(f, terms)


def _from_lin_atom(f: LinAtom, terms: dict[str, IntTerm]) -> Formula:
    coeffs, k = f.expr.as_dict(), f.expr.const
    if f.op == "!=":
        return neg(_from_lin_atom(LinAtom(f.expr, "="), terms))
    if len(coeffs) == 1:
        (name, c), = coeffs.items()
        if c == 1:
            return IntCmp(terms[name], f.op, IntConst(-k))
        if c == -1:
            return IntCmp(terms[name], _FLIP[f.op], IntConst(k))
    if len(coeffs) == 2 and sorted(coeffs.values()) == [-1, 1]:
        pos = next(n for n, c in coeffs.items() if c == 1)
        negv = next(n for n, c in coeffs.items() if c == -1)
        return IntCmp(terms[pos], f.op, terms[negv], -k)
    return CountAtom(from_linear({terms[n]: c for n, c in coeffs.items()}, k), f.op)
