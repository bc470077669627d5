"""
Unit tests for the transitive closure engine.

Closure formulas are checked structurally (case selection, traces) and
semantically against iterated composition over small universes.
"""
import itertools
import random

import pytest

from slidset.core.errors import IndependenceViolation, NonLinear, NotSaturated
from slidset.core.evaluation import BoundedModel, eval_bounded
from slidset.core.formula import (
    DivAtom, Exists, Forall, IntVar, Max, Min, SetDiff, SetVar, Spacing, children, conj, disj, exists, forall,
    implies, int_eq, le, lt, nonempty, set_eq, singleton, subset, succ_formula, union,
)
from slidset.services.closure import (
    ScaledBound, quant_elim_scale, tc_multi, tc_relation, tc_single, unfold_n,
)
from slidset.services.dbs import Anchor, Bound, DbsRelation, SaturatedDbs, bounds_eq, saturate
from slidset.services.oracle import subsets, tc_oracle

S, T = SetVar("S"), SetVar("S'")


def relation(t_s=(), bounds=(), source="S", target="S'") -> DbsRelation:
    return DbsRelation(source, target, frozenset(t_s), tuple(sorted(bounds)))


def plseg(source="S", target="S'") -> DbsRelation:
    return relation({Anchor.MIN_S}, bounds_eq(Anchor.MIN_T, Anchor.MIN_S, 1), source, target)


def ldllseg(source="S", target="S'") -> DbsRelation:
    return relation({Anchor.MAX_S}, bounds_eq(Anchor.MAX_T, Anchor.MAX_S, -1), source, target)


def contains(node, kind) -> bool:
    if isinstance(node, kind):
        return True
    return any(contains(c, kind) for c in children(node))


@pytest.mark.unit
@pytest.mark.services
class TestBuildingBlocks:
    """Test the successor formula and bounded unfolding."""

    def test_succ_on_sorted_set(self):
        """Test succ holds for consecutive elements only."""
        y, z = IntVar("y"), IntVar("z")
        f = succ_formula(S, y, z)
        sets = {"S": {1, 4, 9}}
        assert eval_bounded(BoundedModel(universe=10, ints={"y": 1, "z": 4}, sets=sets), f)
        assert eval_bounded(BoundedModel(universe=10, ints={"y": 4, "z": 9}, sets=sets), f)
        assert not eval_bounded(BoundedModel(universe=10, ints={"y": 1, "z": 9}, sets=sets), f)
        assert not eval_bounded(BoundedModel(universe=10, ints={"y": 4, "z": 1}, sets=sets), f)

    def test_unfold_two_steps(self):
        """Test the two-fold composition of plseg removes two consecutive minima."""
        f = unfold_n(plseg(), 2)
        assert isinstance(f, Exists)
        assert eval_bounded(BoundedModel(universe=3, sets={"S": {1, 2, 3}, "S'": {3}}), f)
        assert not eval_bounded(BoundedModel(universe=3, sets={"S": {1, 2, 3}, "S'": {2, 3}}), f)

    def test_unfold_one_step_is_relation(self):
        """Test a single unfolding is the relation itself."""
        assert unfold_n(plseg(), 1) == plseg().formula()

    def test_unfold_needs_a_step(self):
        """Test zero unfoldings are rejected."""
        with pytest.raises(ValueError):
            unfold_n(plseg(), 0)

    @pytest.mark.parametrize("r", [plseg(), ldllseg()], ids=["min", "max"])
    def test_gap_guard_has_no_quantifier(self, r):
        """Test gaps between removed elements are constrained without a universal quantifier."""
        tc = tc_relation(r)
        assert contains(tc.positive, Spacing)
        assert not contains(tc.formula, Forall)

    def test_gap_guard_reads_both_bounds(self):
        """Test a min pair bounded on both sides gives a two-sided gap."""
        r = relation({Anchor.MIN_S}, (Bound(Anchor.MIN_S, Anchor.MIN_T, -2), Bound(Anchor.MIN_T, Anchor.MIN_S, 3)))
        guards = []

        def collect(node):
            if isinstance(node, Spacing):
                guards.append(node)
            for c in children(node):
                collect(c)

        collect(tc_relation(r).positive)
        assert guards
        assert all((g.low, g.high) == (2, 3) for g in guards)


@pytest.mark.unit
@pytest.mark.services
class TestCaseSelection:
    """Test which construction handles which relation."""

    def test_case_one_is_identity(self):
        """Test S = S' closes to itself."""
        tc = tc_relation(relation())
        assert tc.trace.case == "I"
        assert tc.formula == set_eq(S, T)

    def test_case_two_surely_nonempty(self):
        """Test plseg takes the min-only construction with a nonempty target."""
        tc = tc_relation(plseg())
        assert tc.trace.case == "II"
        assert tc.trace.subcase == "SurelyNonempty"
        assert tc.trace.strict_min is True
        assert tc.trace.strict_max is False
        assert "min-min" in tc.trace.partitions

    def test_case_two_possibly_empty(self):
        """Test removing minima without bounds on S' takes the possibly-empty branch."""
        tc = tc_relation(relation({Anchor.MIN_S}))
        assert tc.trace.case == "II"
        assert tc.trace.subcase == "PossiblyEmpty"
        assert tc.trace.auxiliaries

    def test_case_three_mirrors(self):
        """Test removing maxima is handled by the mirror of case II."""
        r = relation({Anchor.MAX_S}, bounds_eq(Anchor.MAX_T, Anchor.MAX_S, -1))
        tc = tc_relation(r)
        assert tc.trace.case == "III"
        assert tc.trace.strict_max is True
        assert "mirror of case II" in tc.trace.notes

    def test_case_four(self):
        """Test removing both extrema takes the two-sided construction."""
        r = relation(
            {Anchor.MIN_S, Anchor.MAX_S},
            bounds_eq(Anchor.MIN_T, Anchor.MIN_S, 1) + bounds_eq(Anchor.MAX_T, Anchor.MAX_S, -1),
        )
        tc = tc_relation(r)
        assert tc.trace.case == "IV"
        assert tc.trace.subcase == "SurelyNonempty"

    def test_unsat_relation(self):
        """Test an unsatisfiable relation closes to the identity."""
        r = relation(bounds=(Bound(Anchor.MIN_S, Anchor.MIN_T, -1), Bound(Anchor.MIN_T, Anchor.MIN_S, -1)))
        tc = tc_relation(r)
        assert tc.trace.case == "Unsat"
        assert tc.formula == set_eq(S, T)

    def test_reversed_relation(self):
        """Test a reversed set part is closed through its inverse."""
        r = DbsRelation(t_s=frozenset({Anchor.MIN_T}), bounds=tuple(sorted(bounds_eq(Anchor.MIN_S, Anchor.MIN_T, 1))),
                        reversed=True)
        tc = tc_relation(r)
        assert tc.trace.reversed is True
        assert tc.trace.case == "II"

    def test_rejects_unsaturated(self):
        """Test tc_single validates its input."""
        with pytest.raises(NotSaturated):
            tc_single(SaturatedDbs(plseg(), True, True))

    def test_closure_contains_identity(self):
        """Test the empty iteration is always included."""
        tc = tc_relation(plseg())
        m = BoundedModel(universe=3, sets={"S": {0, 2}, "S'": {0, 2}})
        assert eval_bounded(m, tc.formula)
        assert not eval_bounded(m, tc.positive)


@pytest.mark.unit
@pytest.mark.services
class TestClosureSemantics:
    """Test closures against iterated composition."""

    def test_plseg_closure_on_samples(self):
        """Test plseg reaches exactly the suffixes of a consecutive prefix."""
        tc = tc_relation(plseg())

        def reaches(s, t) -> bool:
            return eval_bounded(BoundedModel(universe=4, sets={"S": s, "S'": t}), tc.formula)

        assert reaches({1, 2, 3, 4}, {3, 4})
        assert reaches({1, 2, 3, 4}, {4})
        assert not reaches({1, 3, 4}, {4})
        assert not reaches({1, 2, 3}, set())

    def test_plseg_matches_iteration(self):
        """Test the plseg closure agrees with iteration over {0..3}."""
        r = plseg()
        report = tc_oracle(tc_relation(r), [r], universe=3)
        assert report.agrees, report.disagreements[:3]
        assert report.pairs == 16 * 16

    def test_possibly_empty_matches_iteration(self):
        """Test the possibly-empty construction agrees with iteration."""
        r = relation({Anchor.MIN_S})
        report = tc_oracle(tc_relation(r), [r], universe=3)
        assert report.agrees, report.disagreements[:3]

    def test_mirror_matches_iteration(self):
        """Test the max-only construction agrees with iteration."""
        r = relation({Anchor.MAX_S}, bounds_eq(Anchor.MAX_T, Anchor.MAX_S, -1))
        report = tc_oracle(tc_relation(r), [r], universe=3)
        assert report.agrees, report.disagreements[:3]

    def test_non_strict_min_matches_iteration(self):
        """Test a non-strict min pair agrees with iteration."""
        r = relation({Anchor.MIN_S}, (Bound(Anchor.MIN_T, Anchor.MIN_S, 2),))
        report = tc_oracle(tc_relation(r), [r], universe=3)
        assert report.agrees, report.disagreements[:3]

    @pytest.mark.slow
    def test_two_sided_matches_iteration(self):
        """Test removing both extrema agrees with iteration over {0..4}."""
        r = relation(
            {Anchor.MIN_S, Anchor.MAX_S},
            bounds_eq(Anchor.MIN_T, Anchor.MIN_S, 1) + bounds_eq(Anchor.MAX_T, Anchor.MAX_S, -1),
        )
        report = tc_oracle(tc_relation(r), [r], universe=4)
        assert report.agrees, report.disagreements[:3]

    @pytest.mark.slow
    @pytest.mark.parametrize("r", [plseg(), relation({Anchor.MIN_S}), ldllseg()], ids=["plseg", "sdllseg", "ldllseg"])
    def test_list_segments_match_iteration(self, r):
        """Test the list-segment closures over every pair of subsets of {0..6}."""
        report = tc_oracle(tc_relation(r), [r], universe=6)
        assert report.agrees, report.disagreements[:3]
        assert report.pairs == 128 * 128

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(12))
    def test_random_relations_match_iteration(self, seed):
        """Test seeded random relations of every set part against iteration over {0..3}."""
        rng = random.Random(seed)
        set_parts = [(), (Anchor.MIN_S,), (Anchor.MAX_S,), (Anchor.MIN_S, Anchor.MAX_S)]
        pairs = [
            (Anchor.MIN_S, Anchor.MAX_S), (Anchor.MAX_S, Anchor.MIN_S),
            (Anchor.MIN_S, Anchor.MIN_T), (Anchor.MIN_T, Anchor.MIN_S),
            (Anchor.MAX_T, Anchor.MAX_S), (Anchor.MAX_S, Anchor.MAX_T),
        ]
        bounds = [Bound(*rng.choice(pairs), rng.randint(-2, 2)) for _ in range(rng.randint(0, 3))]
        r = relation(set_parts[seed % 4], bounds)
        report = tc_oracle(tc_relation(r), [r], universe=3)
        assert report.agrees, (r, report.disagreements[:3])


@pytest.mark.unit
@pytest.mark.services
class TestWorkedExamples:
    """Test closures against hand-written closed forms."""

    @pytest.mark.slow
    def test_consecutive_minima(self):
        """Test removing consecutive minima while keeping the maximum, over {0..6}."""
        r = relation(
            {Anchor.MIN_S},
            bounds_eq(Anchor.MAX_S, Anchor.MAX_T) + bounds_eq(Anchor.MIN_T, Anchor.MIN_S, 1)
            + (Bound(Anchor.MIN_S, Anchor.MAX_S, -1), Bound(Anchor.MIN_T, Anchor.MAX_T, 0)),
        )
        s1, s2 = SetVar("S1"), SetVar("S2")
        y, z = IntVar("y"), IntVar("z")
        removed = SetDiff(s1, s2)
        block = exists([s1, s2], conj(
            set_eq(S, union(s1, singleton(Min(S)))),
            set_eq(s2, union(T, singleton(Min(s2)))),
            nonempty(s2),
            nonempty(removed),
            subset(s2, s1),
            lt(Max(removed), Min(s2)),
            int_eq(Min(s1), Min(S), 1),
            int_eq(Min(T), Min(s2), 1),
            forall([y, z], implies(succ_formula(union(removed, singleton(Min(s2))), y, z), int_eq(z, y, 1))),
        ))
        expected = disj(set_eq(S, T), r.formula(), unfold_n(r, 2), block)
        tc = tc_relation(r)
        assert (tc.trace.case, tc.trace.subcase) == ("II", "SurelyNonempty")
        everything = subsets(6)
        for s, t in itertools.product(everything, repeat=2):
            m = BoundedModel(universe=6, domain="nat", sets={"S": s, "S'": t})
            assert eval_bounded(m, tc.formula) == eval_bounded(m, expected), (sorted(s), sorted(t))

    @pytest.mark.slow
    def test_both_extrema_with_wide_span(self):
        """Test removing either extremum of sets spanning 10 to 100."""
        r = relation(
            {Anchor.MIN_S, Anchor.MAX_S},
            (Bound(Anchor.MIN_S, Anchor.MAX_S, -10), Bound(Anchor.MAX_S, Anchor.MIN_S, 100)),
        )
        s1, s2, s3 = SetVar("S1"), SetVar("S2"), SetVar("S3")

        def span(x):
            return [le(Min(x), Max(x), -10), le(Max(x), Min(x), 100)]

        expected = disj(set_eq(S, T), exists([s2, s1, s3], conj(
            set_eq(s2, union(T, singleton(Min(s2)), singleton(Max(s2)))),
            set_eq(S, union(s1, s2, s3)),
            span(S),
            span(s2),
            implies(nonempty(s1), lt(Max(s1), Min(s2))),
            implies(nonempty(s3), lt(Max(s2), Min(s3))),
        )))
        tc = tc_relation(r)
        assert (tc.trace.case, tc.trace.subcase) == ("IV", "PossiblyEmpty")
        palette = (0, 10, 100, 111)
        everything = [frozenset(c) for k in range(len(palette) + 1) for c in itertools.combinations(palette, k)]
        agreed = 0
        for s, t in itertools.product(everything, repeat=2):
            m = BoundedModel(universe=111, domain="nat", sets={"S": s, "S'": t})
            claimed = eval_bounded(m, tc.formula)
            assert claimed == eval_bounded(m, expected), (sorted(s), sorted(t))
            agreed += claimed
        assert agreed > len(everything)


@pytest.mark.unit
@pytest.mark.services
class TestMultiClosure:
    """Test closures of relations iterated in lockstep."""

    def test_independent_pair(self):
        """Test two plseg relations over disjoint sets close together."""
        rs = [saturate(plseg()), saturate(plseg("U", "U'"))]
        tc = tc_multi(rs)
        assert tc.trace.case == "multi"
        assert tc.trace.subcase == "II,II"
        sets = {"S": {1, 2, 3}, "S'": {3}, "U": {0, 1, 2}, "U'": {2}}
        assert eval_bounded(BoundedModel(universe=3, sets=sets), tc.formula)

    def test_lockstep_counts(self):
        """Test both components must take the same number of steps."""
        tc = tc_multi([saturate(plseg()), saturate(plseg("U", "U'"))])
        sets = {"S": {1, 2, 3}, "S'": {3}, "U": {0, 1, 2}, "U'": {1, 2}}
        assert not eval_bounded(BoundedModel(universe=3, sets=sets), tc.formula)

    def test_shared_variables_rejected(self):
        """Test relations sharing a set variable are not independent."""
        with pytest.raises(IndependenceViolation):
            tc_multi([saturate(plseg()), saturate(plseg("S'", "V"))])

    def test_non_strict_component_needs_enough_steps(self):
        """Test a component removing one minimum per step cannot finish two removals in one step."""
        loose = relation({Anchor.MIN_S}, (Bound(Anchor.MIN_T, Anchor.MIN_S, 2),))
        tc = tc_multi([saturate(loose), saturate(plseg("U", "U'"))])

        def joint(s, t, u, v) -> bool:
            return eval_bounded(BoundedModel(universe=3, sets={"S": s, "S'": t, "U": u, "U'": v}), tc.formula)

        assert not joint({0, 1, 2}, {2}, {0, 1}, {1})
        assert joint({0, 1, 2}, {1, 2}, {0, 1}, {1})
        assert joint({0, 2}, {2}, {0, 1}, {1})
        # the loose component may repeat a set while the other one moves
        assert joint({0, 1}, {1}, {0, 1, 2}, {2})

    def test_unbounded_component_needs_enough_steps(self):
        """Test emptying a two-element set takes two steps even without bounds."""
        tc = tc_multi([saturate(plseg()), saturate(relation({Anchor.MIN_S}, (), "U", "U'"))])

        def joint(s, t, u, v) -> bool:
            return eval_bounded(BoundedModel(universe=3, sets={"S": s, "S'": t, "U": u, "U'": v}), tc.formula)

        assert not joint({0, 1}, {1}, {0, 1}, set())
        assert joint({0, 1, 2}, {2}, {0, 1}, set())
        assert joint({0, 1, 2}, {2}, {0, 1}, {1})
        assert not joint({0, 1}, {1}, set(), set())

    def test_window_notes(self):
        """Test the trace counts components with a bounded number of steps."""
        tc = tc_multi([saturate(plseg()), saturate(plseg("U", "U'"))])
        assert "2 of 2 step windows bounded above" in tc.trace.notes
        tc = tc_multi([saturate(plseg()), saturate(relation((), (), "U", "U'"))])
        assert "1 of 2 step windows bounded above" in tc.trace.notes

    @pytest.mark.slow
    @pytest.mark.parametrize("first, second", [
        (plseg(), plseg("U", "U'")),
        (ldllseg(), ldllseg("U", "U'")),
        (relation({Anchor.MIN_S}, (Bound(Anchor.MIN_T, Anchor.MIN_S, 2),)), plseg("U", "U'")),
        (plseg(), relation({Anchor.MIN_S}, (), "U", "U'")),
    ], ids=["plseg-plseg", "ldllseg-ldllseg", "loose-plseg", "plseg-unbounded"])
    def test_matches_joint_iteration(self, first, second):
        """Test lockstep closures against joint iteration over {0..3}."""
        rs = [first, second]
        report = tc_oracle(tc_multi([saturate(r) for r in rs]), rs, universe=3)
        assert report.agrees, report.disagreements[:3]
        assert report.pairs == 256 * 256


@pytest.mark.unit
@pytest.mark.services
class TestQuantElimScale:
    """Test elimination of the scaled step count."""

    def test_even_distance(self):
        """Test exists x > 0. min(S') = min(S) + 2x is a strict bound plus parity."""
        bounds = [ScaledBound(Min(T), Min(S), 2), ScaledBound(Min(S), Min(T), -2)]
        f = quant_elim_scale(bounds)
        assert contains(f, DivAtom)
        for low, high, expected in ((1, 3, True), (1, 2, False), (1, 1, False), (0, 6, True), (2, 7, False)):
            m = BoundedModel(sets={"S": {low}, "S'": {high}})
            assert eval_bounded(m, f) is expected

    def test_inequality_only(self):
        """Test max(S') <= max(S) - x for some x > 0 is max(S') <= max(S) - 1."""
        f = quant_elim_scale([ScaledBound(Max(T), Max(S), -1)])
        assert eval_bounded(BoundedModel(sets={"S": {5}, "S'": {4}}), f)
        assert not eval_bounded(BoundedModel(sets={"S": {5}, "S'": {5}}), f)

    def test_rejects_clashing_names(self):
        """Test a term named like the step variable is rejected."""
        with pytest.raises(NonLinear):
            quant_elim_scale([ScaledBound(IntVar("x"), Min(S), 1)], "x")
