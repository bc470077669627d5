"""
Satisfiability of quantified set formulas with counting constraints.

Pipeline:
    1. lift positive existentials, distribute disjunctions into conjunctive
       cases tried cheapest first, and break each case into components that
       share no variable;
    2. separate the count atoms from the core, one case per truth
       assignment to the count atoms (enumerated lazily);
    3. translate the core to natural numbers, compile it into an automaton,
       attach trackers for the count atoms and test emptiness of the
       resulting Presburger automaton.
The first nonempty case yields a witness word, decoded back into an
integer model.
"""
from __future__ import annotations

import heapq
import itertools
import logging
from typing import Iterable, Iterator

import networkx as nx

from slidset.core.errors import UnexpressibleTerm
from slidset.core.evaluation import BoundedModel
from slidset.core.formula import (
    ATOMS, FALSE, TRUE, And, Card, CountAtom, DivAtom, EmptySet, Exists, FalseF, Forall,
    Formula, IntConst, IntVar, Max, MDiff, Min, MScale, MSum, Not, Or, SetVar, children,
    conj, set_eq,
)
from slidset.core.printer import show
from slidset.core.transform import (
    all_names, desugar, fresh_name, lift_existentials, map_atoms, rename_bound_apart, simplify,
)
from slidset.services.automata import Nfa
from slidset.services.models import UNSAT, Unsat
from slidset.services.msow import decode_word, msow_to_nfa
from slidset.services.parikh import Witness, assemble_pa, count_tracks, pa_emptiness
from slidset.services.translate import decode_model, translate_z_to_n, validity

logger = logging.getLogger(__name__)


# === Count atoms ===

def _is_count_atom(f: Formula) -> bool:
    return isinstance(f, (CountAtom, DivAtom))


def count_atoms(f: Formula) -> list[Formula]:
    """Distinct count atoms of ``f`` in order of first occurrence."""
    found: list[Formula] = []

    def collect(a: Formula) -> Formula:
        if _is_count_atom(a) and a not in found:
            found.append(a)
        return a

    map_atoms(f, collect)
    return found


def _mentions_anchor(t) -> bool:
    if isinstance(t, (Min, Max)):
        return True
    if isinstance(t, (MSum, MDiff)):
        return _mentions_anchor(t.left) or _mentions_anchor(t.right)
    if isinstance(t, MScale):
        return _mentions_anchor(t.arg)
    return False


def negate_count(a: Formula) -> Formula:
    """Negation of a count atom, as a positive atom when that keeps the meaning."""
    if isinstance(a, CountAtom) and not _mentions_anchor(a.term):
        if a.op == ">=":
            return CountAtom(MSum(a.term, IntConst(1)), "<=")
        if a.op == "<=":
            return CountAtom(MDiff(a.term, IntConst(1)), ">=")
    return Not(a)


def split_core_count(f: Formula) -> Iterator[tuple[Formula, list[Formula]]]:
    """Cases (core, count literals), one per truth assignment to the count atoms.

    The core is ``f`` with each count atom replaced by its assigned truth
    value; ``f`` is equivalent to the disjunction of core and literals over
    all cases. Cases whose core is false are still produced.
    """
    f = map_atoms(f, lambda a: desugar(a) if _is_count_atom(a) else a)
    atoms = count_atoms(f)
    free = f.free_names
    for a in atoms:
        if not a.free_names <= free:
            logger.error(f"Count atom {show(a)} mentions a quantified variable")
            raise UnexpressibleTerm(f"Count atom {show(a)} mentions a quantified variable")
    for choice in itertools.product((True, False), repeat=len(atoms)):
        table = dict(zip(atoms, choice))
        core = simplify(map_atoms(f, lambda a: _truth(table[a]) if a in table else a))
        literals = [a if chosen else negate_count(a) for a, chosen in zip(atoms, choice)]
        yield core, literals


def _truth(value: bool) -> Formula:
    return TRUE if value else FALSE


def name_count_sets(f: Formula) -> Formula:
    """Give every compound set term under min, max or card in a count atom its own variable."""
    avoid = all_names(f)
    named: dict = {}

    def rename(t):
        if isinstance(t, (Min, Max, Card)):
            if isinstance(t.arg, (SetVar, EmptySet)):
                return t
            if t.arg not in named:
                name = fresh_name("N", avoid)
                avoid.add(name)
                named[t.arg] = SetVar(name)
            return type(t)(named[t.arg])
        if isinstance(t, (MSum, MDiff)):
            return type(t)(rename(t.left), rename(t.right))
        if isinstance(t, MScale):
            return MScale(t.coeff, rename(t.arg))
        return t

    def atom(a: Formula) -> Formula:
        if isinstance(a, CountAtom):
            return CountAtom(rename(a.term), a.op)
        if isinstance(a, DivAtom):
            return DivAtom(rename(a.term), a.modulus, a.residue)
        return a

    f = map_atoms(f, atom)
    return conj(f, [set_eq(var, term) for term, var in named.items()])


# === Decomposition ===

_QUANTIFIER_COST = 50
_MAX_ALTERNATIVES = 256


def _is_literal(f: Formula) -> bool:
    if isinstance(f, Not):
        f = f.arg
    return isinstance(f, ATOMS)


def cost(f: Formula) -> int:
    """Rough price of compiling ``f``: its atoms plus a heavy charge per quantifier."""
    if isinstance(f, ATOMS):
        return 1
    own = _QUANTIFIER_COST if isinstance(f, (Forall, Exists)) else 0
    return own + sum(cost(c) for c in children(f))


def alternatives(f: Formula) -> list[Formula]:
    """Conjunctive cases whose disjunction is ``f``, cheapest first.

    Disjunctions of literals stay whole; anything under a quantifier or a
    negation is left alone.
    """
    if isinstance(f, Or) and not all(_is_literal(a) for a in f.args):
        out = [c for a in f.args for c in alternatives(a)]
    elif isinstance(f, And):
        out = [conj(combo) for combo in itertools.islice(
            itertools.product(*(alternatives(a) for a in f.args)), _MAX_ALTERNATIVES + 1)]
        if len(out) > _MAX_ALTERNATIVES:
            out = [f]
    else:
        out = [f]
    out = [c for c in dict.fromkeys(simplify(c) for c in out) if not isinstance(c, FalseF)]
    return sorted(out, key=cost)


def cases(f: Formula) -> Iterator[Formula]:
    """Distribute the disjunctions of ``f`` lazily, in order of increasing cost."""
    conjuncts = list(f.args) if isinstance(f, And) else [f]
    options = [alternatives(c) for c in conjuncts]
    if any(not o for o in options):
        return
    prices = [[cost(c) for c in o] for o in options]
    start = (0,) * len(options)
    heap = [(sum(p[0] for p in prices), start)]
    seen = {start}
    while heap:
        price, index = heapq.heappop(heap)
        yield conj(o[i] for o, i in zip(options, index))
        for k, i in enumerate(index):
            if i + 1 < len(options[k]):
                step = index[:k] + (i + 1,) + index[k + 1:]
                if step not in seen:
                    seen.add(step)
                    heapq.heappush(heap, (price - prices[k][i] + prices[k][i + 1], step))


def components(f: Formula) -> list[Formula]:
    """Conjuncts of ``f`` grouped so that no two groups share a free variable."""
    parts = list(f.args) if isinstance(f, And) else [f]
    graph = nx.Graph()
    for i, part in enumerate(parts):
        graph.add_node(("part", i))
        for name in part.free_names:
            graph.add_edge(("part", i), ("var", name))
    groups = [sorted(i for kind, i in comp if kind == "part") for comp in nx.connected_components(graph)]
    return [conj(parts[i] for i in group) for group in sorted(g for g in groups if g)]


# === Solving ===

class RqspaSolver:
    """Decides one formula; ``nonneg`` names variables known to be nonnegative."""

    def __init__(self, nonneg: Iterable[str] = (), limit: int | None = None, timeout_ms: int | None = None):
        self.nonneg = frozenset(nonneg)
        self.limit = limit
        self.timeout_ms = timeout_ms
        self.automata: list[Nfa] = []
        self._memo: dict[Formula, BoundedModel | Unsat] = {}

    def solve(self, f: Formula) -> BoundedModel | Unsat:
        ints = sorted(v.name for v in f.free if isinstance(v, IntVar))
        sets = sorted(v.name for v in f.free if isinstance(v, SetVar))
        body, lifted = lift_existentials(rename_bound_apart(f))
        if lifted:
            logger.debug(f"Lifted {len(lifted)} existential variables")
        for index, case in enumerate(cases(simplify(body))):
            model = self._conjunction(case)
            if isinstance(model, BoundedModel):
                logger.info(f"Case {index} is satisfiable")
                return _restrict(model, ints, sets)
            logger.debug(f"Case {index} is unsatisfiable")
        logger.info("All cases are unsatisfiable")
        return UNSAT

    def _conjunction(self, f: Formula) -> BoundedModel | Unsat:
        if isinstance(f, FalseF):
            return UNSAT
        merged = BoundedModel(universe=0, domain="int")
        for part in sorted(components(name_count_sets(f)), key=cost):
            model = self._memo.get(part)
            if model is None:
                model = self._memo[part] = self._component(part)
            if isinstance(model, Unsat):
                return model
            merged = _merge(merged, model)
        return merged

    def _component(self, f: Formula) -> BoundedModel | Unsat:
        for case, (core, count) in enumerate(split_core_count(f)):
            if isinstance(core, FalseF):
                continue
            logger.debug(f"Case {case}: {len(count)} count literals")
            witness = self._case(core, count)
            if isinstance(witness, BoundedModel):
                return witness
        return UNSAT

    def _case(self, core: Formula, count: list[Formula]) -> BoundedModel | Unsat:
        count_only = set()
        for literal in count:
            count_only |= literal.free - core.free
        nat = translate_z_to_n(core, mode="local", nonneg=self.nonneg)
        nat = conj(nat, [validity(v, self.nonneg) for v in sorted(count_only, key=lambda v: v.name)])
        automaton: Nfa = msow_to_nfa(nat, self.limit)
        self.automata.append(automaton)
        pa = assemble_pa(automaton, count, nonneg=self.nonneg, limit=self.limit)
        logger.debug(f"Core automaton has {automaton.size} states, product {pa.nfa.size}")
        result = pa_emptiness(pa, self.timeout_ms)
        if isinstance(result, Unsat):
            return result
        return self._decode(result, core, count, nat)

    def _decode(self, w: Witness, core: Formula, count: list[Formula], nat: Formula) -> BoundedModel:
        int_tracks = {v.name for v in nat.free if isinstance(v, IntVar)}
        set_tracks = {v.name for v in nat.free if isinstance(v, SetVar)}
        extra_ints, extra_sets = count_tracks(count, nonneg=self.nonneg)
        words = decode_word(w.word, int_tracks | extra_ints, set_tracks | extra_sets)
        names = conj(core, count).free
        return decode_model(
            words,
            sorted(v.name for v in names if isinstance(v, IntVar)),
            sorted(v.name for v in names if isinstance(v, SetVar)),
        )


def _merge(a: BoundedModel, b: BoundedModel) -> BoundedModel:
    return BoundedModel(
        universe=max(a.universe, b.universe),
        ints={**a.ints, **b.ints},
        sets={**a.sets, **b.sets},
        domain="int",
    )


def _restrict(m: BoundedModel, ints: list[str], sets: list[str]) -> BoundedModel:
    """Keep the given variables, filling those no component constrained."""
    values = {x: m.ints.get(x, 0) for x in ints}
    contents = {s: frozenset(m.sets.get(s, frozenset())) for s in sets}
    largest = [abs(v) for v in values.values()] + [abs(v) for s in contents.values() for v in s]
    return BoundedModel(universe=max(largest, default=0), ints=values, sets=contents, domain="int")


def rqspa_sat(
    f: Formula,
    nonneg: Iterable[str] = (),
    limit: int | None = None,
    timeout_ms: int | None = None,
) -> BoundedModel | Unsat:
    """A model of ``f`` over the integers, or UNSAT."""
    return RqspaSolver(nonneg, limit, timeout_ms).solve(f)
