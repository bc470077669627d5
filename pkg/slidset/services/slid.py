"""
Separation-logic formulas over linearly compositional predicates.

A predicate P(E, alpha; F, beta; xi) has the fixed base rule
``E = F /\\ alpha = beta /\\ emp`` and one inductive rule

    exists X, S. phi /\\ E |-> (rho) * P(Y, gamma; F, beta; xi)

so an ``InductiveDef`` stores only the inductive rule. Locations are
integers and ``nil`` is location 0, which is never allocated.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal, Mapping, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from slidset.config import get_fuel
from slidset.core.errors import FuelExhausted, SlidsetError
from slidset.core.evaluation import BoundedModel, eval_bounded, eval_term
from slidset.core.formula import (
    TRUE, And, Formula, IntCmp, IntConst, IntTerm, IntVar, SetCmp, SetVar, Sort, TrueF,
    conj, int_eq, neg, set_eq,
)
from slidset.core.printer import show
from slidset.core.transform import substitute
from slidset.services.dbs import DbsRelation, NotDbs, from_formula
from slidset.services.models import ValidationReport, Violation

logger = logging.getLogger(__name__)

NIL = "nil"


def loc(name: str) -> IntTerm:
    """Integer term of a location variable; ``nil`` is the constant 0."""
    return IntConst(0) if name == NIL else IntVar(name)


def var_of(name: str, sort: Sort) -> IntTerm | SetVar:
    if sort == Sort.SET:
        return SetVar(name)
    return loc(name) if sort == Sort.LOC else IntVar(name)


# === Syntax ===

@dataclass(frozen=True)
class Param:
    name: str
    sort: Sort


@dataclass(frozen=True)
class PointsTo:
    """``root |-> (field: value, ...)``; values are location or data terms."""

    root: str
    fields: tuple[tuple[str, IntTerm], ...]

    @property
    def field_names(self) -> frozenset[str]:
        return frozenset(f for f, _ in self.fields)

    def value(self, field: str) -> IntTerm:
        return dict(self.fields)[field]


@dataclass(frozen=True)
class PredAtom:
    """``pred(E, alpha; F, beta; xi)`` with variable names as arguments."""

    pred: str
    source: tuple[str, ...]
    dest: tuple[str, ...]
    static: tuple[str, ...] = ()

    @property
    def root(self) -> str:
        return self.source[0]


SpatialAtom = Union[PointsTo, PredAtom]


@dataclass(frozen=True)
class PureAtom:
    left: str
    op: Literal["=", "!="]
    right: str

    def formula(self) -> Formula:
        eq = int_eq(loc(self.left), loc(self.right))
        return eq if self.op == "=" else neg(eq)


@dataclass(frozen=True)
class InductiveDef:
    """The inductive rule of a predicate; ``source``/``dest`` start with E and F."""

    name: str
    source: tuple[Param, ...]
    dest: tuple[Param, ...]
    static: tuple[Param, ...]
    locals: tuple[Param, ...]
    data: Formula
    points_to: PointsTo
    call: PredAtom

    @property
    def E(self) -> str:
        return self.source[0].name

    @property
    def F(self) -> str:
        return self.dest[0].name

    @property
    def alpha(self) -> tuple[Param, ...]:
        return self.source[1:]

    @property
    def beta(self) -> tuple[Param, ...]:
        return self.dest[1:]

    @property
    def gamma(self) -> tuple[str, ...]:
        return self.call.source[1:]

    @property
    def Y(self) -> str:
        return self.call.root

    @cached_property
    def sorts(self) -> dict[str, Sort]:
        return {p.name: p.sort for p in (*self.source, *self.dest, *self.static, *self.locals)}

    @property
    def fields(self) -> frozenset[str]:
        return self.points_to.field_names

    @cached_property
    def location_fields(self) -> frozenset[str]:
        return frozenset(
            f for f, t in self.points_to.fields
            if isinstance(t, IntVar) and self.sorts.get(t.name) == Sort.LOC
        )

    def data_positions(self) -> list[int]:
        """Indices into alpha of the set parameters."""
        return [i for i, p in enumerate(self.alpha) if p.sort == Sort.SET]

    def idx(self) -> int | None:
        """Index into gamma of E, when E is passed on to the recursive call."""
        return self.gamma.index(self.E) if self.E in self.gamma else None


@dataclass(frozen=True)
class SlidFormula:
    """``pure /\\ data /\\ spatial``; an empty spatial part is ``emp``."""

    pure: tuple[PureAtom, ...] = ()
    data: Formula = TRUE
    spatial: tuple[SpatialAtom, ...] = ()

    def predicates(self) -> set[str]:
        return {a.pred for a in self.spatial if isinstance(a, PredAtom)}

    def location_vars(self, defs: Mapping[str, InductiveDef]) -> set[str]:
        """Variables of sort location, read off pure atoms, roots and parameter sorts."""
        loc_fields = frozenset().union(*(d.location_fields for d in defs.values()))
        names = {n for a in self.pure for n in (a.left, a.right)}
        for atom in self.spatial:
            if isinstance(atom, PointsTo):
                names.add(atom.root)
                names |= {t.name for f, t in atom.fields if f in loc_fields and isinstance(t, IntVar)}
            else:
                d = defs.get(atom.pred)
                params = (*d.source, *d.dest, *d.static) if d else ()
                args = (*atom.source, *atom.dest, *atom.static)
                names |= {a for a, p in zip(args, params) if p.sort == Sort.LOC}
                names |= {atom.root, atom.dest[0]}
        names.discard(NIL)
        return names


# === Validation ===

def _occurrences(terms: Iterable[IntTerm]) -> list[str]:
    """Variable names of the terms, with repetitions."""
    out: list[str] = []
    for t in terms:
        out.extend(sorted(t.free_names))
    return out


def validate_defs(d: InductiveDef) -> ValidationReport:
    """Check the inductive rule against conditions C1 to C6."""
    report = ValidationReport(predicate=d.name)

    def fail(condition: str, message: str) -> None:
        report.violations.append(Violation(condition=condition, message=message))

    if d.call.pred != d.name:
        fail("shape", f"the recursive call uses {d.call.pred}, not {d.name}")
    if len(d.alpha) != len(d.beta) or any(a.sort != b.sort for a, b in zip(d.alpha, d.beta)):
        fail("shape", "source and destination parameters differ in length or sort")
    if d.source[0].sort != Sort.LOC or d.dest[0].sort != Sort.LOC:
        fail("shape", "the first source and destination parameters must be locations")
    for p in d.alpha:
        if p.sort == Sort.INT:
            fail("shape", f"data parameter {p.name} must be a set")
    if d.points_to.root != d.E:
        fail("shape", f"the rule allocates {d.points_to.root}, not {d.E}")
    if tuple(d.call.dest) != tuple(p.name for p in d.dest) or tuple(d.call.static) != tuple(p.name for p in d.static):
        fail("shape", "the recursive call must pass F, beta and xi unchanged")
    if len(d.gamma) != len(d.alpha):
        fail("shape", "the recursive call has the wrong number of source arguments")

    dest_names = {p.name for p in d.dest}
    rho_names = set(_occurrences(t for _, t in d.points_to.fields))
    barred = dest_names & (d.data.free_names | rho_names | set(d.call.source))
    if barred:
        fail("C1", f"destination parameters {sorted(barred)} occur in the rule body")

    atoms = list(d.data.args) if isinstance(d.data, And) else [] if isinstance(d.data, TrueF) else [d.data]
    for a in atoms:
        if not isinstance(a, (SetCmp, IntCmp)):
            fail("C2", f"{show(a)} is not a difference-bound atom")
    pairs = [{a.name, g} for a, g in zip(d.alpha, d.gamma)]
    for a in atoms:
        if not any(a.free_names <= pair for pair in pairs):
            fail("C3", f"{show(a)} mixes variables of different parameter positions")
    for pos in d.data_positions():
        if pos >= len(d.gamma):
            continue
        mine = [a for a in atoms if a.free_names and a.free_names <= pairs[pos]]
        if not mine:
            continue
        try:
            from_formula(conj(mine), d.alpha[pos].name, d.gamma[pos])
        except NotDbs as e:
            fail("C2", f"position {pos + 1}: {e}")

    call_args = [*d.call.source, *d.call.dest, *d.call.static]
    for name in sorted(set(call_args)):
        if call_args.count(name) > 1:
            fail("C4", f"{name} occurs more than once in the recursive call")
    rho_list = _occurrences(t for _, t in d.points_to.fields)
    for name in sorted(set(rho_list)):
        if rho_list.count(name) > 1:
            fail("C4", f"{name} occurs more than once in the points-to atom")

    for p in d.static:
        if p.sort != Sort.LOC:
            fail("C5", f"static parameter {p.name} is not a location")
    for p in (*d.alpha, *d.static, *d.locals):
        if p.sort == Sort.LOC and p.name not in rho_names:
            fail("C5", f"location {p.name} does not occur in the points-to atom")

    local_names = {p.name for p in d.locals}
    if d.Y not in local_names:
        fail("C6", f"the recursive call is rooted at {d.Y}, which is not an existential variable")
    for g in d.gamma:
        if g != d.E and g not in local_names:
            fail("C6", f"recursive argument {g} is neither {d.E} nor an existential variable")

    if report.violations:
        logger.warning(f"Definition of {d.name} violates {report.conditions()}")
    return report


# === Data constraint of the rule ===

@dataclass(frozen=True)
class DataConstraint:
    """phi_P over the data parameters of alpha and beta, split per position."""

    formula: Formula
    relations: tuple[DbsRelation, ...]
    positions: tuple[int, ...]


def extract_phi_P(d: InductiveDef) -> DataConstraint:
    data = d.data_positions()
    renaming = {var_of(d.gamma[i], d.alpha[i].sort): var_of(d.beta[i].name, d.alpha[i].sort) for i in data}
    phi = substitute(d.data, renaming)
    atoms = list(phi.args) if isinstance(phi, And) else [] if isinstance(phi, TrueF) else [phi]
    relations: list[DbsRelation] = []
    positions: list[int] = []
    for i in data:
        pair = {d.alpha[i].name, d.beta[i].name}
        mine = [a for a in atoms if a.free_names and a.free_names <= pair]
        if mine:
            relations.append(from_formula(conj(mine), d.alpha[i].name, d.beta[i].name))
            positions.append(i)
    logger.debug(f"Data constraint of {d.name}: {show(phi)}")
    return DataConstraint(phi, tuple(relations), tuple(positions))


# === Heap semantics ===

class State(BaseModel):
    """An assignment (locations and integers, sets) together with a heap."""
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    ints: dict[str, int] = Field(default_factory=dict)
    sets: dict[str, frozenset[int]] = Field(default_factory=dict)
    heap: dict[int, dict[str, int]] = Field(default_factory=dict)

    @field_validator("heap")
    @classmethod
    def validate_heap(cls, v: dict[int, dict[str, int]]) -> dict[int, dict[str, int]]:
        if 0 in v:
            raise ValueError("nil (location 0) cannot be allocated")
        shapes = {frozenset(cell) for cell in v.values()}
        if len(shapes) > 1:
            raise ValueError("all cells of a heap must have the same fields")
        return v

    def value(self, name: str) -> int:
        if name == NIL:
            return 0
        return self.ints[name]


def eval_slid(st: State, f: SlidFormula, defs: Mapping[str, InductiveDef], fuel: int | None = None) -> bool:
    """Truth of ``f`` in ``st``, unfolding predicates at most ``fuel`` times.

    Raises FuelExhausted when the answer would be false only because the
    unfolding bound was reached.
    """
    evaluator = _HeapEvaluator(st, defs, get_fuel() if fuel is None else fuel)
    result = evaluator.formula(f)
    if not result and evaluator.exhausted:
        raise FuelExhausted(f"No model found within {evaluator.fuel} unfoldings")
    return result


class _HeapEvaluator:
    def __init__(self, st: State, defs: Mapping[str, InductiveDef], fuel: int):
        self.st = st
        self.defs = defs
        self.fuel = fuel
        self.exhausted = False

    def formula(self, f: SlidFormula) -> bool:
        for atom in f.pure:
            left, right = self.st.value(atom.left), self.st.value(atom.right)
            if (left == right) != (atom.op == "="):
                return False
        model = BoundedModel(ints=self.st.ints, sets=self.st.sets)
        if not eval_bounded(model, f.data):
            return False
        return self.spatial(f.spatial, frozenset(self.st.heap))

    def spatial(self, atoms: tuple[SpatialAtom, ...], cells: frozenset[int]) -> bool:
        if not atoms:
            return not cells
        remaining = set(cells)
        predicates: list[PredAtom] = []
        for atom in atoms:
            if isinstance(atom, PointsTo):
                root = self.st.value(atom.root)
                if root not in remaining or not self._cell_matches(root, atom, self.st.ints, self.st.sets):
                    return False
                remaining.discard(root)
            else:
                predicates.append(atom)
        if not predicates:
            return not remaining
        order = sorted(remaining)
        for owners in itertools.product(range(len(predicates)), repeat=len(order)):
            parts = [frozenset(c for c, o in zip(order, owners) if o == k) for k in range(len(predicates))]
            if all(self._atom(a, part) for a, part in zip(predicates, parts)):
                return True
        return False

    def _cell_matches(self, location: int, atom: PointsTo, ints: Mapping[str, int], sets) -> bool:
        cell = self.st.heap[location]
        if set(cell) != atom.field_names:
            return False
        model = BoundedModel(ints=dict(ints), sets=dict(sets))
        for field, term in atom.fields:
            value = eval_term(model, term)
            if value is None or cell[field] != value:
                return False
        return True

    def _atom(self, atom: PredAtom, cells: frozenset[int]) -> bool:
        d = self.defs.get(atom.pred)
        if d is None:
            raise SlidsetError(f"No definition for predicate {atom.pred}")
        args = (*atom.source, *atom.dest, *atom.static)
        params = (*d.source, *d.dest, *d.static)
        env_ints: dict[str, int] = {}
        env_sets: dict[str, frozenset[int]] = {}
        for p, a in zip(params, args):
            if p.sort == Sort.SET:
                env_sets[p.name] = frozenset(self.st.sets[a])
            else:
                env_ints[p.name] = self.st.value(a)
        return self.unfold(d, env_ints, env_sets, cells, self.fuel)

    def unfold(self, d: InductiveDef, ints: dict[str, int], sets: dict[str, frozenset[int]],
               cells: frozenset[int], fuel: int) -> bool:
        if not cells:
            return self._base(d, ints, sets)
        if fuel <= 0:
            self.exhausted = True
            return False
        here = ints[d.E]
        if here not in cells:
            return False
        cell = self.st.heap[here]
        if set(cell) != d.fields:
            return False
        local_ints = dict(ints)
        for field, term in d.points_to.fields:
            if isinstance(term, IntVar) and d.sorts.get(term.name) == Sort.LOC:
                bound = local_ints.setdefault(term.name, cell[field])
                if bound != cell[field]:
                    return False
        open_sets = [p.name for p in d.locals if p.sort == Sort.SET]
        open_ints = [p.name for p in d.locals if p.sort == Sort.INT and p.name not in local_ints]
        universe = self._universe(sets, cells)
        for chosen in itertools.product(*(self._set_candidates(d, s, sets, universe) for s in open_sets)):
            set_env = {**sets, **dict(zip(open_sets, chosen))}
            for values in itertools.product(*(sorted(universe) for _ in open_ints)):
                int_env = {**local_ints, **dict(zip(open_ints, values))}
                model = BoundedModel(ints=int_env, sets=set_env)
                if not eval_bounded(model, d.data):
                    continue
                if any(eval_term(model, t) != cell[f] for f, t in d.points_to.fields):
                    continue
                next_ints = {p.name: int_env[p.name] for p in (*d.dest, *d.static) if p.sort != Sort.SET}
                next_sets = {p.name: set_env[p.name] for p in d.dest if p.sort == Sort.SET}
                next_ints[d.E] = int_env[d.Y]
                for p, g in zip(d.alpha, d.gamma):
                    if p.sort == Sort.SET:
                        next_sets[p.name] = set_env[g]
                    else:
                        next_ints[p.name] = int_env[g]
                if self.unfold(d, next_ints, next_sets, cells - {here}, fuel - 1):
                    return True
        return False

    @staticmethod
    def _base(d: InductiveDef, ints: dict[str, int], sets: dict[str, frozenset[int]]) -> bool:
        if ints[d.E] != ints[d.F]:
            return False
        for a, b in zip(d.alpha, d.beta):
            table = sets if a.sort == Sort.SET else ints
            if table[a.name] != table[b.name]:
                return False
        return True

    def _universe(self, sets: dict[str, frozenset[int]], cells: frozenset[int]) -> set[int]:
        values: set[int] = set()
        for s in sets.values():
            values |= s
        for c in cells:
            values |= set(self.st.heap[c].values())
        return values

    @staticmethod
    def _set_candidates(d: InductiveDef, name: str, sets: dict[str, frozenset[int]], universe: set[int]):
        """Sets within two elements of the source parameter they are passed on for."""
        anchor: frozenset[int] | None = None
        for p, g in zip(d.alpha, d.gamma):
            if g == name and p.sort == Sort.SET:
                anchor = sets[p.name]
        pool = sorted(universe)
        if anchor is None:
            return [frozenset(c) for size in range(len(pool) + 1) for c in itertools.combinations(pool, size)]
        return _neighbours(anchor, pool)


def set_equalities(a: PredAtom, d: InductiveDef) -> Formula:
    """``Z1 = Z2 /\\ mu = nu`` for a predicate atom."""
    parts = [int_eq(loc(a.source[0]), loc(a.dest[0]))]
    for p, mu, nu in zip(d.alpha, a.source[1:], a.dest[1:]):
        if p.sort == Sort.SET:
            parts.append(set_eq(SetVar(mu), SetVar(nu)))
        else:
            parts.append(int_eq(var_of(mu, p.sort), var_of(nu, p.sort)))
    return conj(parts)


# === Building heaps from unfoldings ===

DataVector = tuple[frozenset[int], ...]


def data_vector(st: State, names: Iterable[str]) -> DataVector:
    return tuple(frozenset(st.sets.get(n, frozenset())) for n in names)


def step_successors(d: InductiveDef, phi: Formula, current: DataVector, universe: Iterable[int]) -> list[DataVector]:
    """Data vectors reachable from ``current`` in one application of the rule.

    Each set parameter gains or loses at most two elements per step, so the
    candidates are drawn from that neighbourhood within ``universe``.
    """
    positions = d.data_positions()
    pool = sorted(set(universe))
    per_position = [_neighbours(current[k], pool) for k in range(len(positions))]
    out: list[DataVector] = []
    for candidate in itertools.product(*per_position):
        sets = {d.alpha[i].name: current[k] for k, i in enumerate(positions)}
        sets.update({d.beta[i].name: candidate[k] for k, i in enumerate(positions)})
        if eval_bounded(BoundedModel(sets=sets), phi):
            out.append(tuple(candidate))
    return out


def _neighbours(s: frozenset[int], pool: list[int]) -> list[frozenset[int]]:
    inside = sorted(s)
    outside = [v for v in pool if v not in s]
    found: list[frozenset[int]] = []
    for removed in range(min(2, len(inside)) + 1):
        for gone in itertools.combinations(inside, removed):
            for added in range(2 - removed + 1):
                for new in itertools.combinations(outside, added):
                    found.append((s - set(gone)) | set(new))
    return found


def materialize(
    d: InductiveDef,
    atom: PredAtom,
    st: State,
    vectors: list[DataVector],
    locations: list[int],
) -> dict[int, dict[str, int]]:
    """Cells of ``atom`` unfolded ``len(locations)`` times along ``vectors``.

    ``vectors`` holds the data parameters before each step and after the
    last one; ``locations`` the address of each allocated cell.
    """
    n = len(locations)
    if len(vectors) != n + 1:
        raise SlidsetError(f"Unfolding {n} cells needs {n + 1} data vectors, got {len(vectors)}")
    args = dict(zip((p.name for p in (*d.source, *d.dest, *d.static)), (*atom.source, *atom.dest, *atom.static)))
    positions = d.data_positions()

    def arg_value(param: str) -> int:
        return st.value(args[param])

    previous: dict[str, int] = {p.name: arg_value(p.name) for p in d.alpha if p.sort != Sort.SET}
    cells: dict[int, dict[str, int]] = {}
    for k in range(n):
        ints: dict[str, int] = {p.name: arg_value(p.name) for p in (*d.dest, *d.static) if p.sort != Sort.SET}
        ints.update(previous)
        ints[d.E] = locations[k]
        ints[d.Y] = locations[k + 1] if k + 1 < n else arg_value(d.F)
        sets: dict[str, frozenset[int]] = {p.name: frozenset() for p in d.locals if p.sort == Sort.SET}
        for j, i in enumerate(positions):
            sets[d.alpha[i].name] = vectors[k][j]
            sets[d.gamma[i]] = vectors[k + 1][j]
        following: dict[str, int] = {}
        for p, g in zip(d.alpha, d.gamma):
            if p.sort == Sort.SET:
                continue
            if g not in ints:
                # A location handed on without constraint ends at the destination value.
                ints[g] = arg_value(_dest_of(d, p.name))
            following[p.name] = ints[g]
        for p in d.locals:
            if p.sort != Sort.SET:
                ints.setdefault(p.name, 0)
        model = BoundedModel(ints=ints, sets=sets)
        cell: dict[str, int] = {}
        for field, term in d.points_to.fields:
            value = eval_term(model, term)
            cell[field] = value if isinstance(value, int) else 0
        cells[locations[k]] = cell
        previous = following
    return cells


def _dest_of(d: InductiveDef, alpha_name: str) -> str:
    for a, b in zip(d.alpha, d.beta):
        if a.name == alpha_name:
            return b.name
    raise SlidsetError(f"{alpha_name} is not a source parameter of {d.name}")
