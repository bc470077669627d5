"""
Unit tests for the set-constraint solver: case splitting, decomposition and
end-to-end satisfiability with model checks.
"""
import pytest

from slidset.core.errors import UnexpressibleTerm
from slidset.core.evaluation import BoundedModel, eval_bounded
from slidset.core.formula import (
    FALSE, TRUE, And, Card, CountAtom, Exists, Forall, IntCmp, IntConst, IntVar, MDiff, MSum,
    Max, Member, Min, Not, Or, SetCmp, SetUnion, SetVar, Singleton, conj, disj, int_eq, is_empty, nonempty,
)
from slidset.services.closure import tc_relation
from slidset.services.dbs import Anchor, DbsRelation, bounds_eq
from slidset.services.models import Unsat
from slidset.services.rqspa_solver import (
    RqspaSolver, alternatives, cases, components, cost, count_atoms, name_count_sets, negate_count, rqspa_sat,
    split_core_count,
)

x, y = IntVar("x"), IntVar("y")
S, T = SetVar("S"), SetVar("T")


def card_eq(s, n):
    return CountAtom(MDiff(Card(s), IntConst(n)), "=")


def card_ge(s, n):
    return CountAtom(MDiff(Card(s), IntConst(n)), ">=")


@pytest.mark.unit
@pytest.mark.services
class TestCountSplitting:
    """Test separation of count atoms from the core."""

    def test_count_atoms_in_order(self):
        """Test count atoms are collected once in order of occurrence."""
        a, b = card_ge(S, 1), card_eq(T, 2)
        f = conj(a, disj(b, is_empty(S)), Not(a))
        assert count_atoms(f) == [a, b]

    def test_negate_without_anchor(self):
        """Test negated cardinality bounds become positive atoms."""
        a = CountAtom(Card(S), ">=")
        assert negate_count(a) == CountAtom(MSum(Card(S), IntConst(1)), "<=")
        assert negate_count(CountAtom(Card(S), "<=")) == CountAtom(MDiff(Card(S), IntConst(1)), ">=")

    def test_negate_with_anchor(self):
        """Test atoms over min or max stay negated since they may be undefined."""
        a = CountAtom(MDiff(Card(S), Min(S)), ">=")
        assert negate_count(a) == Not(a)

    def test_one_case_per_assignment(self):
        """Test two count atoms give four cases."""
        f = disj(card_ge(S, 2), conj(card_eq(T, 1), nonempty(S)))
        cases = list(split_core_count(f))
        assert len(cases) == 4
        cores = [core for core, _ in cases]
        assert cores[0] == TRUE
        assert cores[-1] == FALSE

    def test_literals_follow_choice(self):
        """Test each case lists the atoms it assumes, negated when false."""
        a = card_ge(S, 2)
        (_, first), (_, second) = split_core_count(a)
        assert first == [a]
        assert second == [negate_count(a)]

    def test_quantified_count_rejected(self):
        """Test count atoms may not mention quantified variables."""
        f = Forall(T, card_ge(T, 0))
        with pytest.raises(UnexpressibleTerm) as exc_info:
            list(split_core_count(f))
        assert "quantified" in str(exc_info.value)

    def test_name_compound_sets(self):
        """Test compound set terms under card get their own variable."""
        f = name_count_sets(card_ge(SetUnion(S, T), 2))
        assert isinstance(f, And)
        atom = next(a for a in f.args if isinstance(a, CountAtom))
        named = atom.term.left.arg
        assert isinstance(named, SetVar)
        assert named not in (S, T)
        assert SetCmp(named, "=", SetUnion(S, T)) in f.args


@pytest.mark.unit
@pytest.mark.services
class TestComponents:
    """Test splitting conjunctions into independent parts."""

    def test_groups_by_shared_variables(self):
        """Test conjuncts sharing a variable stay together."""
        a, b, c = IntCmp(x, "=", y), SetCmp(S, "=", T), IntCmp(y, "<=", IntConst(3))
        assert components(conj(a, b, c)) == [conj(a, c), b]

    def test_single_formula(self):
        """Test a formula that is not a conjunction is one component."""
        a = Member(x, S)
        assert components(a) == [a]


def heavy(v: IntVar, s: SetVar) -> Exists:
    u = SetVar(f"{s.name}0")
    return Exists(u, conj(SetCmp(u, "<=", s), card_ge(u, 1), Member(v, u)))


@pytest.mark.unit
@pytest.mark.services
class TestCases:
    """Test distribution of disjunctions into conjunctive cases."""

    def test_cost_charges_quantifiers(self):
        """Test a quantifier costs far more than an atom."""
        assert cost(IntCmp(x, "=", IntConst(1))) == 1
        assert cost(heavy(x, S)) > 50

    def test_literal_disjunction_stays_whole(self):
        """Test a clause of literals is one case."""
        f = Or((Member(x, S), IntCmp(x, "<", IntConst(0))))
        (only,) = alternatives(f)
        assert isinstance(only, Or)

    def test_cheapest_alternative_first(self):
        """Test the quantifier-free side of a disjunction comes first."""
        f = Or((heavy(x, S), IntCmp(x, "=", IntConst(5))))
        first, second = alternatives(f)
        assert set(first.free_names) == {"x"}
        assert isinstance(second, Exists)

    def test_cases_in_increasing_cost(self):
        """Test two binary disjunctions give four cases, cheapest first."""
        f = conj(
            Or((heavy(x, S), IntCmp(x, "=", IntConst(5)))),
            Or((heavy(y, T), conj(IntCmp(y, ">", IntConst(0)), IntCmp(y, "<", IntConst(9))))),
        )
        out = list(cases(f))
        assert len(out) == 4
        costs = [cost(c) for c in out]
        assert costs == sorted(costs)
        assert costs[0] == 3
        assert not any(isinstance(c, Exists) for c in out[0].args)

    def test_distribution_is_capped(self):
        """Test a conjunction with too many cases is kept whole."""
        clauses = [
            Or((conj(IntCmp(v, "<", IntConst(0)), IntCmp(v, ">", IntConst(-5))), IntCmp(v, "=", IntConst(3))))
            for v in (IntVar(f"x{i}") for i in range(9))
        ]
        assert len(alternatives(conj(clauses))) == 1
        alts = alternatives(Or((conj(clauses), Member(x, S))))
        assert len(alts) == 2
        assert alts[0] == Member(x, S)

    def test_shared_component_solved_once(self, monkeypatch):
        """Test a component seen in an earlier case is not solved again."""
        calls = []
        original = RqspaSolver._component

        def counting(solver, f):
            calls.append(f)
            return original(solver, f)

        monkeypatch.setattr(RqspaSolver, "_component", counting)
        shared = card_eq(S, 1)
        f = Or((
            conj(shared, Member(x, T), is_empty(T)),
            conj(shared, IntCmp(x, "=", IntConst(3)), IntCmp(y, "=", x, 1), IntCmp(y, ">", IntConst(0))),
        ))
        model = rqspa_sat(f)
        assert model.ints["x"] == 3
        assert sum("S" in part.free_names for part in calls) == 1


@pytest.mark.unit
@pytest.mark.services
class TestSolving:
    """Test satisfiability end to end."""

    def check_model(self, f, model):
        assert isinstance(model, BoundedModel)
        assert eval_bounded(model, f)

    def test_consecutive_set(self):
        """Test a set of three consecutive integers."""
        f = conj(
            SetCmp(S, "=", SetUnion(T, Singleton(Min(S)))),
            IntCmp(Min(T), "=", Min(S), 1),
            Not(Member(Min(S), T)),
            card_eq(S, 3),
        )
        model = rqspa_sat(f)
        self.check_model(f, model)
        assert len(model.sets["S"]) == 3

    def test_negative_values(self):
        """Test models may use negative integers."""
        f = conj(IntCmp(x, "<", IntConst(0)), Member(x, S), card_ge(S, 2))
        model = rqspa_sat(f)
        self.check_model(f, model)
        assert model.ints["x"] < 0

    def test_nonneg_variables(self):
        """Test variables declared nonnegative cannot be negative."""
        assert isinstance(rqspa_sat(IntCmp(x, "<", IntConst(0)), nonneg=["x"]), Unsat)

    @pytest.mark.parametrize("f", [
        conj(card_ge(S, 1), is_empty(S)),
        IntCmp(Min(S), ">", Max(S)),
        conj(Member(x, S), is_empty(S)),
        conj(card_eq(S, 2), card_eq(T, 1), SetCmp(S, "<=", T)),
    ])
    def test_unsat(self, f):
        """Test contradictory constraints."""
        assert isinstance(rqspa_sat(f), Unsat)

    def test_existential_lifted(self):
        """Test a positive existential becomes a free variable of the search."""
        f = Exists(T, conj(SetCmp(S, "=", SetUnion(T, Singleton(Max(S)))), nonempty(T), Not(Member(Max(S), T))))
        model = rqspa_sat(f)
        self.check_model(f, model)
        assert set(model.sets) == {"S"}
        assert len(model.sets["S"]) >= 2

    def test_disjunction(self):
        """Test the first satisfiable disjunct provides the model."""
        f = Or((conj(is_empty(S), card_ge(S, 1)), IntCmp(x, "=", IntConst(5))))
        model = rqspa_sat(f)
        assert model.ints["x"] == 5

    def test_independent_components_merge(self):
        """Test models of independent parts are combined."""
        f = conj(IntCmp(x, "=", IntConst(-3)), card_eq(S, 2), Member(IntConst(4), S))
        model = rqspa_sat(f)
        self.check_model(f, model)
        assert model.ints == {"x": -3}
        assert 4 in model.sets["S"]

    def test_solver_keeps_automata(self):
        """Test the solver records the automata it built."""
        solver = RqspaSolver()
        solver.solve(conj(Member(x, S), card_eq(S, 1)))
        assert solver.automata
        assert all(a.size >= 1 for a in solver.automata)

    def test_false_is_unsat(self):
        """Test the false formula has no model."""
        assert isinstance(rqspa_sat(FALSE), Unsat)


@pytest.mark.unit
@pytest.mark.services
@pytest.mark.slow
class TestClosureFormulas:
    """Test formulas produced by the closure engine."""

    segment = DbsRelation("S", "T", frozenset({Anchor.MIN_S}), tuple(sorted(bounds_eq(Anchor.MIN_T, Anchor.MIN_S, 1))))

    def test_suffix_across_zero(self):
        """Test the closure of a consecutive list segment reaches a suffix past zero."""
        f = conj(tc_relation(self.segment).formula, int_eq(Min(S), IntConst(-2)), int_eq(Min(T), IntConst(1)))
        model = rqspa_sat(f)
        assert isinstance(model, BoundedModel)
        assert eval_bounded(model, f)
        assert {-2, -1, 0, 1} <= model.sets["S"]

    def test_gap_blocks_the_suffix(self):
        """Test a missing element between the minima makes the target unreachable."""
        f = conj(
            tc_relation(self.segment).formula,
            int_eq(Min(S), IntConst(-2)),
            int_eq(Min(T), IntConst(1)),
            Not(Member(IntConst(0), S)),
        )
        assert isinstance(rqspa_sat(f), Unsat)
