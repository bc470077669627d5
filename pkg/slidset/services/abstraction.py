"""
Satisfiability of separation-logic formulas through their abstraction.

Every spatial atom gets an allocation flag, a 0/1 integer variable that is 1
exactly when the atom owns a nonempty part of the heap. Predicate atoms are
abstracted by three alternatives: the empty segment, one unfolding, or two
unfoldings followed by the closure of the data constraint. Separation is
enforced by forbidding two flagged atoms of different positions to share a
root. The resulting set formula goes to the set-constraint solver.
"""
from __future__ import annotations

import itertools
import logging
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping

from slidset.config import get_fuel
from slidset.core.errors import (
    InvalidDefinition, MissingTc, MixedPredicates, SlidsetError, StageError,
)
from slidset.core.evaluation import BoundedModel, eval_term
from slidset.core.formula import (
    FALSE, TRUE, Formula, IntCmp, IntConst, IntTerm, IntVar, SetVar, Sort, conj, disj, int_eq, neg, set_eq,
)
from slidset.core.printer import show
from slidset.core.transform import all_names, fresh_name, substitute
from slidset.services.closure import TcResult, tc_multi, tc_single
from slidset.services.dbs import SaturatedDbs, saturate
from slidset.services.models import HeapCell, StageTiming, TcTrace, Unsat, Verdict
from slidset.services.rqspa_solver import RqspaSolver
from slidset.services.slid import (
    DataConstraint, DataVector, InductiveDef, PointsTo, PredAtom, SlidFormula, State,
    data_vector, eval_slid, extract_phi_P, loc, materialize, set_equalities, step_successors,
    validate_defs, var_of,
)

logger = logging.getLogger(__name__)


class Depth(str, Enum):
    ONE = "one"
    GE_TWO = "ge_two"


# === Closure of a predicate ===

@dataclass(frozen=True)
class PredicateClosure:
    """Data constraint of a predicate and the closure of its iterations."""

    definition: InductiveDef
    constraint: DataConstraint
    saturated: tuple[SaturatedDbs, ...] | None
    tc: TcResult | None = None


def extract(d: InductiveDef) -> DataConstraint:
    report = validate_defs(d)
    if not report.ok:
        message = f"Definition of {d.name} violates {', '.join(report.conditions())}: " + "; ".join(
            v.message for v in report.violations
        )
        logger.error(message)
        raise InvalidDefinition(message, report)
    return extract_phi_P(d)


def saturate_all(constraint: DataConstraint) -> tuple[SaturatedDbs, ...] | None:
    """Saturated relations of every set position; None when one is unsatisfiable."""
    out = []
    for relation in constraint.relations:
        s = saturate(relation)
        if isinstance(s, Unsat):
            logger.info(f"Data constraint {relation.source}->{relation.target} is unsatisfiable")
            return None
        out.append(s)
    return tuple(out)


def close(constraint: DataConstraint, saturated: tuple[SaturatedDbs, ...] | None) -> TcResult:
    if saturated is None:
        identity = conj(set_eq(SetVar(r.source), SetVar(r.target)) for r in constraint.relations)
        return TcResult(identity, FALSE, TcTrace(case="Unsat", notes=["unsatisfiable relation"]))
    if not saturated:
        return TcResult(TRUE, TRUE, TcTrace(case="I", notes=["no set parameters"]))
    if len(saturated) == 1:
        return tc_single(saturated[0])
    return tc_multi(saturated)


def predicate_closure(d: InductiveDef) -> PredicateClosure:
    constraint = extract(d)
    saturated = saturate_all(constraint)
    return PredicateClosure(d, constraint, saturated, close(constraint, saturated))


# === Unfolding formulas ===

class _Fresh:
    def __init__(self, avoid):
        self.used = set(avoid)
        self.introduced: list[str] = []

    def name(self, base: str) -> str:
        name = base if base not in self.used else fresh_name(base, self.used)
        self.used.add(name)
        self.introduced.append(name)
        return name


def _final_substitution(a: PredAtom, d: InductiveDef) -> dict:
    params = (*d.source, *d.dest, *d.static)
    args = (*a.source, *a.dest, *a.static)
    if len(params) != len(args):
        raise SlidsetError(f"{a.pred} expects {len(params)} arguments, got {len(args)}")
    return {var_of(p.name, p.sort): var_of(arg, p.sort) for p, arg in zip(params, args)}


def ufld(
    a: PredAtom,
    d: InductiveDef,
    depth: Depth,
    closure: PredicateClosure,
    fresh: _Fresh | None = None,
) -> Formula:
    """The data constraint of ``a`` unfolded once, or at least twice."""
    fresh = fresh or _Fresh(all_names(closure.constraint.formula) | set(d.sorts))
    phi = closure.constraint.formula
    positions = d.data_positions()
    alpha = [SetVar(d.alpha[i].name) for i in positions]
    beta = [SetVar(d.beta[i].name) for i in positions]
    idx = d.idx()
    e = IntVar(d.E)

    if depth == Depth.ONE:
        body = phi
        if idx is not None:
            body = conj(int_eq(e, IntVar(d.beta[idx].name)), body)
    else:
        if closure.tc is None:
            logger.error(f"No closure computed for {d.name}")
            raise MissingTc(f"Unfolding {d.name} twice needs the closure of its data constraint")
        gamma1 = [SetVar(fresh.name(v.name)) for v in alpha]
        gamma2 = [SetVar(fresh.name(v.name)) for v in alpha]
        first = substitute(phi, dict(zip(beta, gamma1)))
        second = substitute(phi, {**dict(zip(alpha, gamma1)), **dict(zip(beta, gamma2))})
        rest = substitute(closure.tc.formula, dict(zip(alpha, gamma2)))
        body = conj(first, second, rest)
        if idx is not None:
            second_last = IntVar(fresh.name(d.alpha[idx].name))
            body = conj(neg(int_eq(e, IntVar(d.beta[idx].name))), neg(int_eq(e, second_last)), body)
    return substitute(body, _final_substitution(a, d))


# === Abstraction ===

@dataclass(frozen=True)
class Flag:
    """Allocation flag of the spatial atom at ``position`` for the cell at ``location``."""

    name: str
    location: IntTerm
    position: int
    tail: bool = False

    def on(self) -> Formula:
        return int_eq(IntVar(self.name), IntConst(1))


@dataclass(frozen=True)
class AbsFormula:
    formula: Formula
    flags: tuple[Flag, ...]
    locations: frozenset[str]
    auxiliaries: frozenset[str] = frozenset()

    @property
    def booleans(self) -> list[str]:
        return sorted({f.name for f in self.flags})


def check_formula(f: SlidFormula, defs: Mapping[str, InductiveDef]) -> InductiveDef | None:
    """The single predicate used by ``f``, after checking its atoms against it."""
    used = f.predicates()
    if len(used) > 1:
        logger.error(f"Formula uses predicates {sorted(used)}")
        raise MixedPredicates(f"A formula may use one predicate, found {', '.join(sorted(used))}")
    d = None
    if used:
        name = used.pop()
        if name not in defs:
            logger.error(f"Predicate {name} is not defined")
            raise SlidsetError(f"Predicate {name} is not defined")
        d = defs[name]
    shapes = {atom.field_names for atom in f.spatial if isinstance(atom, PointsTo)}
    if d is not None:
        shapes.add(d.fields)
    if len(shapes) > 1:
        logger.error(f"Points-to atoms use field sets {[sorted(s) for s in shapes]}")
        raise SlidsetError("All points-to atoms must use the same fields as the predicate")
    return d


def abstract(f: SlidFormula, defs: Mapping[str, InductiveDef], closures: Mapping[str, PredicateClosure]) -> AbsFormula:
    """Equisatisfiable set formula over the variables of ``f`` and allocation flags."""
    check_formula(f, defs)
    fresh = _Fresh(all_names(f.data) | f.location_vars(defs) | _spatial_names(f)
                   | {n for d in defs.values() for n in d.sorts})
    flags: list[Flag] = []
    parts: list[Formula] = [conj(a.formula() for a in f.pure), f.data]

    for position, atom in enumerate(f.spatial, start=1):
        flag = Flag(fresh.name(f"alloc_{position}"), loc(atom.root), position)
        flags.append(flag)
        if isinstance(atom, PointsTo):
            parts.append(flag.on())
            continue
        d = defs[atom.pred]
        closure = closures[atom.pred]
        guards = [flag.on()]
        idx = d.idx()
        if idx is not None:
            tail = Flag(fresh.name(f"tail_{position}"), loc(atom.dest[1 + idx]), position, tail=True)
            flags.append(tail)
            guards.append(tail.on())
        parts.append(disj(
            set_equalities(atom, d),
            conj(guards, ufld(atom, d, Depth.ONE, closure, fresh)),
            conj(guards, ufld(atom, d, Depth.GE_TWO, closure, fresh)),
        ))

    for flag in flags:
        v = IntVar(flag.name)
        parts.append(IntCmp(v, ">=", IntConst(0)))
        parts.append(IntCmp(v, "<=", IntConst(1)))
        parts.append(neg(conj(flag.on(), int_eq(flag.location, IntConst(0)))))
    for first, second in itertools.combinations(flags, 2):
        if first.position != second.position:
            parts.append(neg(conj(int_eq(first.location, second.location), first.on(), second.on())))

    formula = conj(parts)
    locations = frozenset(f.location_vars(defs))
    aux = frozenset(fresh.introduced) - {fl.name for fl in flags}
    logger.info(f"Abstraction has {len(flags)} flags and {len(aux)} auxiliary variables")
    return AbsFormula(formula, tuple(flags), locations, aux)


def _spatial_names(f: SlidFormula) -> set[str]:
    names: set[str] = set()
    for atom in f.spatial:
        if isinstance(atom, PointsTo):
            names.add(atom.root)
            for _, t in atom.fields:
                names |= t.free_names
        else:
            names |= {*atom.source, *atom.dest, *atom.static}
    return names


# === Heap witnesses ===

def _assignment(f: SlidFormula, defs: Mapping[str, InductiveDef], model: BoundedModel) -> State:
    """The solver model extended to every variable of ``f``, unconstrained ones at 0 or empty."""
    ints = dict(model.ints)
    sets = {k: frozenset(v) for k, v in model.sets.items()}
    for name in f.location_vars(defs) | {n for a in f.pure for n in (a.left, a.right)}:
        if name != "nil":
            ints.setdefault(name, 0)
    for atom in f.spatial:
        if isinstance(atom, PointsTo):
            for _, t in atom.fields:
                for name in t.free_names:
                    ints.setdefault(name, 0)
        else:
            d = defs[atom.pred]
            for p, arg in zip((*d.source, *d.dest, *d.static), (*atom.source, *atom.dest, *atom.static)):
                if p.sort == Sort.SET:
                    sets.setdefault(arg, frozenset())
                elif arg != "nil":
                    ints.setdefault(arg, 0)
    for v in f.data.free:
        if isinstance(v, SetVar):
            sets.setdefault(v.name, frozenset())
        else:
            ints.setdefault(v.name, 0)
    return State(ints=ints, sets=sets)


def _chain(
    d: InductiveDef,
    phi: Formula,
    start: DataVector,
    end: DataVector,
    single: bool | None,
    universe: list[int],
    max_steps: int,
) -> list[DataVector] | None:
    """Shortest data-vector path from ``start`` to ``end`` with at least one step.

    ``single`` demands exactly one step (True) or at least two (False).
    """
    first = (start, 0)
    parent: dict[tuple[DataVector, int], tuple[DataVector, int] | None] = {first: None}
    queue = deque([(first, 0)])
    while queue:
        (vector, clipped), steps = queue.popleft()
        if steps >= max_steps:
            continue
        for nxt in step_successors(d, phi, vector, universe):
            key = (nxt, min(clipped + 1, 2))
            if key in parent:
                continue
            parent[key] = (vector, clipped)
            done = nxt == end and (single is None or (key[1] == 1) == single)
            if done:
                path = [nxt]
                back = parent[key]
                while back is not None:
                    path.append(back[0])
                    back = parent[back]
                return list(reversed(path))
            if single is not True:
                queue.append((key, steps + 1))
    return None


def reconstruct_heap(
    f: SlidFormula,
    defs: Mapping[str, InductiveDef],
    closures: Mapping[str, PredicateClosure],
    abstraction: AbsFormula,
    model: BoundedModel,
) -> State:
    """A state whose heap realises the flags of ``model``."""
    st = _assignment(f, defs, model)
    used = {abs(v) for v in st.ints.values()}
    next_free = itertools.count(max(used, default=0) + 1)
    heap: dict[int, dict[str, int]] = {}
    flagged = {fl.position for fl in abstraction.flags if not fl.tail and model.ints.get(fl.name) == 1}

    for position, atom in enumerate(f.spatial, start=1):
        if isinstance(atom, PointsTo):
            values = BoundedModel(ints=st.ints, sets=st.sets)
            cell = {name: eval_term(values, t) for name, t in atom.fields}
            heap[st.value(atom.root)] = {name: v if isinstance(v, int) else 0 for name, v in cell.items()}
            continue
        if position not in flagged:
            continue
        d = defs[atom.pred]
        positions = d.data_positions()
        start = data_vector(st, [atom.source[1 + i] for i in positions])
        end = data_vector(st, [atom.dest[1 + i] for i in positions])
        idx = d.idx()
        root = st.value(atom.root)
        last = st.value(atom.dest[1 + idx]) if idx is not None else None
        single = (root == last) if idx is not None else None
        values = sorted(set().union(*start, *end)) if positions else []
        universe = list(range(values[0] - 2, values[-1] + 3)) if values else [0]
        max_steps = max(get_fuel(), sum(len(s) for s in (*start, *end)) + 2)
        path = _chain(d, closures[atom.pred].constraint.formula, start, end, single, universe, max_steps)
        if path is None:
            logger.warning(f"No unfolding of atom {position} found within {max_steps} steps")
            continue
        n = len(path) - 1
        locations = [root] + [next(next_free) for _ in range(n - 1)]
        if idx is not None and n > 1:
            locations[-1] = last
        heap.update(materialize(d, atom, st, path, locations))
    heap.pop(0, None)
    return State(ints=st.ints, sets=st.sets, heap=heap)


# === Pipeline ===

@contextmanager
def _stage(name: str, timings: list[StageTiming]) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageError(name, e) from e
    finally:
        timings.append(StageTiming(stage=name, seconds=round(time.perf_counter() - start, 6)))


@dataclass
class SatChecker:
    """Runs the pipeline on one formula and keeps its intermediate results."""

    defs: Mapping[str, InductiveDef]
    limit: int | None = None
    timeout_ms: int | None = None
    witness: bool = True
    closures: dict[str, PredicateClosure] = field(default_factory=dict)
    abstraction: AbsFormula | None = None
    timings: list[StageTiming] = field(default_factory=list)
    solver: RqspaSolver | None = None

    def prepare(self, f: SlidFormula) -> AbsFormula:
        """Closures of the predicates used by ``f`` and its abstraction."""
        constraints: dict[str, DataConstraint] = {}
        with _stage("extract", self.timings):
            d = check_formula(f, self.defs)
            if d is not None:
                constraints[d.name] = extract(d)
        saturated: dict[str, tuple[SaturatedDbs, ...] | None] = {}
        with _stage("saturate", self.timings):
            for name, constraint in constraints.items():
                saturated[name] = saturate_all(constraint)
        with _stage("tc", self.timings):
            for name, constraint in constraints.items():
                tc = close(constraint, saturated[name])
                self.closures[name] = PredicateClosure(self.defs[name], constraint, saturated[name], tc)
        with _stage("abs", self.timings):
            self.abstraction = abstract(f, self.defs, self.closures)
        return self.abstraction

    def run(self, f: SlidFormula) -> Verdict:
        abstraction = self.prepare(f)
        with _stage("solve", self.timings):
            nonneg = (abstraction.locations - f.data.free_names) | set(abstraction.booleans)
            self.solver = RqspaSolver(nonneg, self.limit, self.timeout_ms)
            result = self.solver.solve(abstraction.formula)
        traces = [c.tc.trace for c in self.closures.values() if c.tc is not None]
        if isinstance(result, Unsat):
            logger.info("Verdict: unsat")
            return Verdict(status="unsat", timings=self.timings, traces=traces, message=result.reason)

        hidden = set(abstraction.booleans) | abstraction.auxiliaries
        verdict = Verdict(
            status="sat",
            ints={k: v for k, v in sorted(result.ints.items()) if k not in hidden},
            sets={k: sorted(v) for k, v in sorted(result.sets.items()) if k not in hidden},
            booleans={k: result.ints.get(k, 0) == 1 for k in abstraction.booleans},
            timings=self.timings,
            traces=traces,
        )
        if self.witness:
            verdict = self._with_heap(f, verdict, result)
        logger.info("Verdict: sat")
        return verdict

    def _with_heap(self, f: SlidFormula, verdict: Verdict, model: BoundedModel) -> Verdict:
        assert self.abstraction is not None
        try:
            st = reconstruct_heap(f, self.defs, self.closures, self.abstraction, model)
            ok = eval_slid(st, f, self.defs, fuel=len(st.heap) + 1)
        except (SlidsetError, ValueError) as e:
            logger.warning(f"Heap witness could not be checked: {e}")
            return verdict.model_copy(update={"heap_validated": False})
        if not ok:
            logger.warning("Reconstructed heap does not satisfy the formula")
        cells = [HeapCell(location=k, fields=dict(sorted(v.items()))) for k, v in sorted(st.heap.items())]
        extra_ints = {k: v for k, v in sorted(st.ints.items()) if k not in verdict.ints and k not in verdict.booleans
                      and k not in self.abstraction.auxiliaries}
        return verdict.model_copy(update={
            "heap": cells,
            "heap_validated": ok,
            "ints": {**verdict.ints, **extra_ints},
        })


def check_sat(
    f: SlidFormula,
    defs: Mapping[str, InductiveDef],
    limit: int | None = None,
    timeout_ms: int | None = None,
    witness: bool = True,
) -> Verdict:
    """Decide ``f``; stage failures surface as StageError."""
    return SatChecker(defs, limit, timeout_ms, witness).run(f)


def describe(abstraction: AbsFormula) -> str:
    flags = ", ".join(f"{fl.name}@{show(fl.location)}" for fl in abstraction.flags)
    return f"flags: {flags or '-'}\n{show(abstraction.formula)}"
