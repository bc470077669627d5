"""
Unit tests for the formula algebra.

Tests free variables, the flattening builders and linear decomposition of counting terms.
"""
import pytest

from slidset.core.formula import (
    EMPTY, FALSE, TRUE, And, Card, Exists, Forall, IntCmp, IntConst, IntVar, Max, MDiff, Min,
    MScale, MSum, Not, Or, SetCmp, SetUnion, SetVar, Singleton, Sort, children, conj, disj,
    exists, free_int_vars, free_set_vars, from_linear, implies, le, linearize, neg, nonempty,
    singleton, sort_of, union,
)

x, y = IntVar("x"), IntVar("y")
A, B = SetVar("A"), SetVar("B")


@pytest.mark.unit
@pytest.mark.core
class TestFreeVariables:
    """Test free variable computation."""

    def test_atom_free_variables(self):
        """Test every variable of an atom is free."""
        atom = IntCmp(Min(A), "<=", x, 2)
        assert atom.free == frozenset({A, x})
        assert atom.free_names == frozenset({"A", "x"})

    def test_quantifier_binds_its_variable(self):
        """Test a quantified variable is not free in the quantified formula."""
        f = Exists(x, le(x, y))
        assert f.free_names == frozenset({"y"})

    def test_split_by_sort(self):
        """Test integer and set variables are reported separately."""
        f = conj(le(Max(A), x), SetCmp(A, "<=", B))
        assert free_int_vars(f) == frozenset({"x"})
        assert free_set_vars(f) == frozenset({"A", "B"})

    def test_sort_of_variables(self):
        """Test sort_of distinguishes integer from set variables."""
        assert sort_of(x) == Sort.INT
        assert sort_of(A) == Sort.SET

    def test_children_in_field_order(self):
        """Test children returns the direct sub-nodes left to right."""
        atom = SetCmp(A, "=", B)
        assert children(atom) == (A, B)
        assert children(Forall(x, TRUE)) == (x, TRUE)
        assert children(x) == ()


@pytest.mark.unit
@pytest.mark.core
class TestBuilders:
    """Test the constant-folding builders."""

    def test_conj_drops_true_and_flattens(self):
        """Test nested conjunctions are flattened and true is dropped."""
        a, b, c = le(x, y), le(y, x), SetCmp(A, "=", B)
        assert conj(TRUE, And((a, b)), c) == And((a, b, c))

    def test_conj_false_absorbs(self):
        """Test a false conjunct makes the conjunction false."""
        assert conj(le(x, y), FALSE) == FALSE

    def test_conj_of_nothing_is_true(self):
        """Test the empty conjunction is true."""
        assert conj() == TRUE
        assert conj([]) == TRUE

    def test_conj_removes_duplicates(self):
        """Test repeated conjuncts appear once."""
        a = le(x, y)
        assert conj(a, a) == a

    def test_disj_mirrors_conj(self):
        """Test disjunction folds constants the other way round."""
        a, b = le(x, y), le(y, x)
        assert disj(a, FALSE) == a
        assert disj(a, TRUE) == TRUE
        assert disj() == FALSE
        assert disj(Or((a, b)), a) == Or((a, b))

    def test_neg_removes_double_negation(self):
        """Test negating a negation returns the inner formula."""
        a = le(x, y)
        assert neg(Not(a)) == a
        assert neg(TRUE) == FALSE
        assert neg(a) == Not(a)

    def test_implies_folds_constants(self):
        """Test implication simplifies trivial antecedents and consequents."""
        a = le(x, y)
        assert implies(TRUE, a) == a
        assert implies(FALSE, a) == TRUE
        assert implies(a, TRUE) == TRUE

    def test_exists_nests_in_order(self):
        """Test the first variable becomes the outermost quantifier."""
        body = le(x, y)
        f = exists([x, y], body)
        assert f == Exists(x, Exists(y, body))

    def test_union_skips_empty_sets(self):
        """Test empty operands of a union are dropped."""
        assert union(EMPTY, A) == A
        assert union() == EMPTY
        assert union(A, EMPTY, B) == SetUnion(A, B)

    def test_singleton_accepts_int(self):
        """Test singleton wraps plain integers as constants."""
        assert singleton(3) == Singleton(IntConst(3))
        assert singleton(x) == Singleton(x)

    def test_nonempty_is_negated_equality(self):
        """Test nonempty is expressed as the negation of equality with the empty set."""
        assert nonempty(A) == Not(SetCmp(A, "=", EMPTY))


@pytest.mark.unit
@pytest.mark.core
class TestLinearize:
    """Test decomposition of counting terms."""

    def test_collects_coefficients(self):
        """Test coefficients of repeated items are summed."""
        term = MDiff(MSum(x, MScale(2, Card(A))), MSum(IntConst(3), x))
        coeffs, const = linearize(term)
        assert coeffs == {Card(A): 2}
        assert const == -3

    def test_min_and_max_are_items(self):
        """Test anchors of sets are treated as atomic items."""
        coeffs, const = linearize(MDiff(Max(A), Min(A)))
        assert coeffs == {Max(A): 1, Min(A): -1}
        assert const == 0

    def test_rejects_set_terms(self):
        """Test a set term is not a counting term."""
        with pytest.raises(TypeError):
            linearize(A)

    def test_from_linear_orders_items(self):
        """Test rebuilding sorts items by their printed form."""
        term = from_linear({y: -1, x: 1}, 2)
        assert term == MSum(MDiff(x, y), IntConst(2))

    def test_from_linear_constant_only(self):
        """Test an empty coefficient map gives a constant."""
        assert from_linear({}, 5) == IntConst(5)

    def test_from_linear_is_inverse(self):
        """Test linearizing a rebuilt term recovers the decomposition."""
        coeffs = {x: 3, Min(A): -2, Card(B): 1}
        assert linearize(from_linear(coeffs, -4)) == (coeffs, -4)


@pytest.mark.unit
@pytest.mark.core
class TestSpacing:
    """Test the spacing atom and its quantified reading."""

    @pytest.mark.parametrize("low,high", [(1, None), (2, None), (1, 1), (2, 3)])
    def test_expand_agrees(self, low, high):
        """Test the atom and its expansion agree on every subset of {-2..2}."""
        import itertools

        from slidset.core.evaluation import BoundedModel, eval_bounded
        from slidset.core.formula import Spacing

        atom = Spacing(A, low, high)
        expanded = atom.expand()
        assert isinstance(expanded, Forall)
        values = range(-2, 3)
        for n in range(len(values) + 1):
            for chosen in itertools.combinations(values, n):
                m = BoundedModel(universe=2, sets={"A": frozenset(chosen)})
                assert eval_bounded(m, atom) == eval_bounded(m, expanded), chosen

    def test_expand_requires_definedness(self):
        """Test the expansion of a chain with an anchor demands a nonempty argument."""
        from slidset.core.evaluation import BoundedModel, eval_bounded
        from slidset.core.formula import Spacing, defined

        chain = SetUnion(A, Singleton(Min(B)))
        assert defined(chain) == nonempty(B)
        m = BoundedModel(universe=3, sets={"A": {0, 2}, "B": set()})
        assert not eval_bounded(m, Spacing(chain).expand())

    def test_free_variables(self):
        """Test bounds do not introduce variables."""
        from slidset.core.formula import Spacing

        assert Spacing(SetUnion(A, Singleton(Max(B))), 2, 5).free_names == {"A", "B"}
        assert children(Spacing(A)) == (A,)
