"""
Brute-force cross-checks for the decision procedure.

Closures are compared with the reflexive-transitive closure of the relation
computed by iteration over all sets of a small universe; satisfiability
verdicts are compared with an exhaustive search for heaps of a few cells.
"""
from __future__ import annotations

import itertools
import logging
from collections import deque
from typing import Iterator, Mapping, Sequence

from slidset.config import get_oracle_universe
from slidset.core.evaluation import BoundedModel, eval_bounded, eval_term
from slidset.core.formula import Formula, SetVar
from slidset.services.closure import TcResult
from slidset.services.dbs import DbsRelation
from slidset.services.models import OracleReport, TcOracleReport, Verdict
from slidset.services.slid import (
    NIL, DataVector, InductiveDef, PointsTo, PredAtom, SlidFormula, State,
    eval_slid, extract_phi_P, materialize, step_successors,
)

logger = logging.getLogger(__name__)

Vector = tuple[frozenset[int], ...]


def subsets(universe: int) -> list[frozenset[int]]:
    """All subsets of {0..universe}, smallest first."""
    values = range(universe + 1)
    return [frozenset(c) for size in range(universe + 2) for c in itertools.combinations(values, size)]


# === Closures ===

def _successors(relations: Sequence[DbsRelation], universe: int) -> dict[Vector, list[Vector]]:
    """One lockstep step of the relations, as a successor table."""
    candidates = subsets(universe)
    tables: list[dict[frozenset[int], list[frozenset[int]]]] = []
    for r in relations:
        table: dict[frozenset[int], list[frozenset[int]]] = {}
        for s in candidates:
            table[s] = [t for t in candidates
                        if eval_bounded(BoundedModel(universe=universe, domain="nat", sets={r.source: s, r.target: t}), r.formula())]
        tables.append(table)
    out: dict[Vector, list[Vector]] = {}
    for vector in itertools.product(candidates, repeat=len(relations)):
        out[vector] = [tuple(v) for v in itertools.product(*(t[s] for t, s in zip(tables, vector)))]
    return out


def _reachable(step: dict[Vector, list[Vector]], start: Vector) -> set[Vector]:
    seen = {start}
    queue = deque([start])
    while queue:
        for nxt in step[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def tc_oracle(tc: TcResult, relations: Sequence[DbsRelation], universe: int | None = None) -> TcOracleReport:
    """Compare ``tc`` with iterated composition over all set vectors in {0..universe}."""
    universe = get_oracle_universe() if universe is None else universe
    step = _successors(relations, universe)
    report = TcOracleReport(universe=universe)
    for source in step:
        reachable = _reachable(step, source)
        for target in step:
            sets = {r.source: s for r, s in zip(relations, source)}
            sets.update({r.target: t for r, t in zip(relations, target)})
            claimed = eval_bounded(BoundedModel(universe=universe, domain="nat", sets=sets), tc.formula)
            report.pairs += 1
            if claimed != (target in reachable):
                report.disagreements.append(
                    f"{_show_vector(source)} -> {_show_vector(target)}: closure says {claimed}"
                )
    if report.disagreements:
        logger.warning(f"Closure disagrees with iteration on {len(report.disagreements)} of {report.pairs} pairs")
    else:
        logger.info(f"Closure agrees with iteration on {report.pairs} pairs")
    return report


def _show_vector(v: Vector) -> str:
    return "(" + ", ".join("{" + ", ".join(map(str, sorted(s))) + "}" for s in v) + ")"


# === Heaps ===

def _location_classes(names: list[str]) -> Iterator[dict[str, int]]:
    """Every way of making location variables equal, nil being one of the classes."""
    items = [NIL, *names]

    def grow(i: int, blocks: list[int], count: int) -> Iterator[list[int]]:
        if i == len(items):
            yield blocks
            return
        for b in range(count + 1):
            yield from grow(i + 1, blocks + [b], max(count, b + 1))

    for blocks in grow(1, [0], 1):
        yield {name: block for name, block in zip(items, blocks) if name != NIL}


class HeapSearch:
    """Exhaustive search for states of at most ``max_cells`` cells with data in {0..data_max}."""

    def __init__(self, f: SlidFormula, defs: Mapping[str, InductiveDef], max_cells: int = 4, data_max: int | None = None):
        self.f = f
        self.defs = defs
        self.max_cells = max_cells
        self.data_max = get_oracle_universe() if data_max is None else data_max
        self.checked = 0
        self._sets = subsets(self.data_max)
        self._phis: dict[str, Formula] = {}
        self.predicates = [a for a in f.spatial if isinstance(a, PredAtom)]
        self.points_to = [a for a in f.spatial if isinstance(a, PointsTo)]
        self.locations = sorted(f.location_vars(defs))

    def _phi(self, d: InductiveDef) -> Formula:
        if d.name not in self._phis:
            self._phis[d.name] = extract_phi_P(d).formula
        return self._phis[d.name]

    def _free_vars(self, assigned_sets: set[str]) -> tuple[list[str], list[str]]:
        ints: set[str] = set()
        sets: set[str] = set()
        for v in self.f.data.free:
            (sets if isinstance(v, SetVar) else ints).add(v.name)
        for atom in self.points_to:
            for _, t in atom.fields:
                ints |= t.free_names
        ints -= set(self.locations) | {NIL}
        return sorted(ints), sorted(sets - assigned_sets)

    def search(self) -> State | None:
        budget = self.max_cells - len(self.points_to)
        if budget < 0:
            return None
        for locations in _location_classes(self.locations):
            st = State(ints=locations)
            if not all((st.value(a.left) == st.value(a.right)) == (a.op == "=") for a in self.f.pure):
                continue
            for sets, plan in self._atoms(0, {}, budget, []):
                found = self._complete(locations, sets, plan)
                if found is not None:
                    return found
        return None

    def _atoms(self, i: int, sets: dict[str, frozenset[int]], budget: int, plan: list) -> Iterator[tuple[dict, list]]:
        if i == len(self.predicates):
            yield sets, plan
            return
        atom = self.predicates[i]
        d = self.defs[atom.pred]
        positions = d.data_positions()
        sources = [atom.source[1 + k] for k in positions]
        targets = [atom.dest[1 + k] for k in positions]
        choices = [[sets[n]] if n in sets else self._sets for n in sources]
        for start in itertools.product(*choices):
            base = _bind(sets, sources, start)
            if base is None:
                continue
            for k in range(budget + 1):
                for path in self._paths(d, tuple(start), k):
                    bound = _bind(base, targets, path[-1])
                    if bound is not None:
                        yield from self._atoms(i + 1, bound, budget - k, plan + [(atom, d, path)])

    def _paths(self, d: InductiveDef, start: DataVector, k: int) -> Iterator[list[DataVector]]:
        if k == 0:
            yield [start]
            return
        for nxt in step_successors(d, self._phi(d), start, range(self.data_max + 1)):
            for rest in self._paths(d, nxt, k - 1):
                yield [start, *rest]

    def _complete(self, locations: dict[str, int], sets: dict[str, frozenset[int]], plan: list) -> State | None:
        ints, free_sets = self._free_vars(set(sets))
        values = range(self.data_max + 1)
        for chosen_sets in itertools.product(self._sets, repeat=len(free_sets)):
            all_sets = {**sets, **dict(zip(free_sets, chosen_sets))}
            for chosen_ints in itertools.product(values, repeat=len(ints)):
                st = State(ints={**locations, **dict(zip(ints, chosen_ints))}, sets=all_sets)
                if not eval_bounded(BoundedModel(ints=st.ints, sets=st.sets), self.f.data):
                    continue
                heap = self._heap(st, plan)
                if heap is None:
                    continue
                self.checked += 1
                candidate = State(ints=st.ints, sets=st.sets, heap=heap)
                if eval_slid(candidate, self.f, self.defs, fuel=len(heap) + 1):
                    logger.debug(f"Bounded search found a model with {len(heap)} cells")
                    return candidate
        return None

    def _heap(self, st: State, plan: list) -> dict[int, dict[str, int]] | None:
        heap: dict[int, dict[str, int]] = {}
        fresh = itertools.count(max(st.ints.values(), default=0) + 1)

        def place(cells: dict[int, dict[str, int]]) -> bool:
            if 0 in cells or any(c in heap for c in cells):
                return False
            heap.update(cells)
            return True

        model = BoundedModel(ints=st.ints, sets=st.sets)
        for atom in self.points_to:
            cell = {name: eval_term(model, t) for name, t in atom.fields}
            if any(not isinstance(v, int) for v in cell.values()) or not place({st.value(atom.root): cell}):
                return None
        for atom, d, path in plan:
            n = len(path) - 1
            if n == 0:
                continue
            locations = [st.value(atom.root)] + [next(fresh) for _ in range(n - 1)]
            idx = d.idx()
            if idx is not None and n > 1:
                locations[-1] = st.value(atom.dest[1 + idx])
            if not place(materialize(d, atom, st, path, locations)):
                return None
        return heap


def _bind(sets: dict[str, frozenset[int]], names: list[str], values: Sequence[frozenset[int]]) -> dict | None:
    out = dict(sets)
    for name, value in zip(names, values):
        if out.setdefault(name, value) != value:
            return None
    return out


def search_heap_models(
    f: SlidFormula,
    defs: Mapping[str, InductiveDef],
    max_cells: int = 4,
    data_max: int | None = None,
) -> State | None:
    """A state of at most ``max_cells`` cells satisfying ``f``, if one exists with data in {0..data_max}."""
    return HeapSearch(f, defs, max_cells, data_max).search()


def sat_oracle(
    f: SlidFormula,
    defs: Mapping[str, InductiveDef],
    verdict: Verdict,
    universe: int | None = None,
    max_cells: int = 4,
) -> OracleReport:
    """Compare a verdict with the bounded heap search."""
    search = HeapSearch(f, defs, max_cells, universe)
    found = search.search()
    decided = "sat" if verdict.status == "sat" else "unsat"
    report = OracleReport(
        universe=search.data_max,
        decided=decided,
        bounded_found=found is not None,
        agrees=(decided == "sat") == (found is not None),
        checked=search.checked,
    )
    if not report.agrees:
        logger.warning(f"Oracle disagreement: decided {decided}, bounded search found model: {report.bounded_found}")
    return report
