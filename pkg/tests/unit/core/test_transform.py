"""
Unit tests for syntactic transformations.

Covers substitution (sort checks, capture avoidance), desugaring,
the min/max mirror, bound-variable hygiene and simplification.
"""
import random

import pytest

from slidset.core.errors import SortError
from slidset.core.evaluation import BoundedModel, eval_bounded
from slidset.core.formula import (
    EMPTY, FALSE, TRUE, And, CountAtom, DivAtom, Exists, Forall, Iff, Implies, IntCmp, IntConst,
    IntVar, Max, MDiff, Member, Min, Not, Or, SetCmp, SetUnion, SetVar, Singleton, Spacing, conj, le,
)
from slidset.core.transform import (
    all_names, desugar, fresh_name, lift_existentials, mirror, rename_bound_apart, simplify,
    substitute,
)

x, y, z = IntVar("x"), IntVar("y"), IntVar("z")
A, B = SetVar("A"), SetVar("B")


@pytest.mark.unit
@pytest.mark.core
class TestFreshNames:
    """Test generation of fresh variable names."""

    def test_first_free_suffix(self):
        """Test the counter starts at one and skips taken names."""
        assert fresh_name("x", set()) == "x#1"
        assert fresh_name("x", {"x#1", "x#2"}) == "x#3"

    def test_strips_existing_suffix(self):
        """Test renaming a renamed variable keeps a single suffix."""
        assert fresh_name("x#4", {"x#1"}) == "x#2"

    def test_all_names_includes_bound(self):
        """Test all_names reports bound and free names."""
        f = Forall(x, le(x, y))
        assert all_names(f) == {"x", "y"}


@pytest.mark.unit
@pytest.mark.core
class TestSubstitute:
    """Test simultaneous capture-avoiding substitution."""

    def test_replaces_variables(self):
        """Test free occurrences are replaced."""
        f = le(x, y, 1)
        assert substitute(f, {x: z}) == le(z, y, 1)

    def test_simultaneous(self):
        """Test swapping two variables in one substitution."""
        f = le(x, y)
        assert substitute(f, {x: y, y: x}) == le(y, x)

    def test_replaces_anchor_terms(self):
        """Test min(T) can be used as a substitution key."""
        f = IntCmp(Min(B), "=", Min(A), 1)
        assert substitute(f, {Min(B): x}) == IntCmp(x, "=", Min(A), 1)

    def test_bound_variable_shadows_key(self):
        """Test bound occurrences are left alone."""
        f = Exists(x, le(x, y))
        assert substitute(f, {x: z}) == f

    def test_avoids_capture(self):
        """Test the binder is renamed when it would capture a value."""
        f = Exists(x, le(x, y))
        result = substitute(f, {y: x})
        assert isinstance(result, Exists)
        assert result.var != x
        assert result.body == le(result.var, x)

    def test_rejects_set_for_int(self):
        """Test sort mismatches raise SortError."""
        with pytest.raises(SortError) as exc_info:
            substitute(le(x, y), {x: A})
        assert "set term" in str(exc_info.value)

    def test_rejects_int_for_set(self):
        """Test an integer term cannot replace a set variable."""
        with pytest.raises(SortError):
            substitute(SetCmp(A, "=", B), {A: x})


@pytest.mark.unit
@pytest.mark.core
class TestDesugar:
    """Test rewriting into core connectives."""

    def test_member_becomes_inclusion(self):
        """Test membership is a singleton inclusion."""
        assert desugar(Member(x, A)) == SetCmp(Singleton(x), "<=", A)

    def test_strict_comparison_shifts_offset(self):
        """Test x < y + 2 becomes x <= y + 1."""
        assert desugar(IntCmp(x, "<", y, 2)) == IntCmp(x, "<=", y, 1)
        assert desugar(IntCmp(x, ">", y)) == IntCmp(x, ">=", y, 1)

    def test_or_becomes_negated_and(self):
        """Test De Morgan rewriting of disjunction."""
        a, b = le(x, y), le(y, x)
        assert desugar(Or((a, b))) == Not(And((Not(a), Not(b))))

    def test_exists_becomes_negated_forall(self):
        """Test existentials are expressed with universals."""
        f = Exists(x, le(x, y))
        assert desugar(f) == Not(Forall(x, Not(le(x, y))))

    def test_preserves_truth(self):
        """Test desugaring preserves the truth value on sample models."""
        f = Iff(Member(x, A), Implies(IntCmp(x, "<", Max(A)), Exists(y, IntCmp(y, ">", x))))
        for xv in range(-2, 3):
            for a in (frozenset(), frozenset({0}), frozenset({-1, 2})):
                m = BoundedModel(universe=3, ints={"x": xv}, sets={"A": a})
                assert eval_bounded(m, f) == eval_bounded(m, desugar(f))


@pytest.mark.unit
@pytest.mark.core
class TestMirror:
    """Test the min/max mirror."""

    def test_swaps_anchors_and_flips(self):
        """Test min becomes max, comparisons flip and offsets change sign."""
        f = IntCmp(Min(A), "<=", Min(B), 1)
        assert mirror(f) == IntCmp(Max(A), ">=", Max(B), -1)

    def test_semantics(self):
        """Test m satisfies f iff the negated model satisfies the mirror."""
        f = conj(SetCmp(A, "=", SetUnion(B, Singleton(Min(A)))), IntCmp(Min(B), "=", Min(A), 1))
        for a, b in ((frozenset({1, 2}), frozenset({2})), (frozenset({1, 3}), frozenset({3}))):
            m = BoundedModel(universe=4, sets={"A": a, "B": b})
            neg_m = BoundedModel(universe=4, sets={"A": frozenset(-v for v in a), "B": frozenset(-v for v in b)})
            assert eval_bounded(m, f) == eval_bounded(neg_m, mirror(f))

    def test_spacing(self):
        """Test distances between elements survive negation while anchors swap."""
        f = Spacing(SetUnion(A, Singleton(Min(B))), 2, 3)
        assert mirror(f) == Spacing(SetUnion(A, Singleton(Max(B))), 2, 3)
        m = BoundedModel(universe=4, sets={"A": {0, 2}, "B": {4}})
        neg_m = BoundedModel(universe=4, sets={"A": {0, -2}, "B": {-4}})
        assert eval_bounded(m, f) == eval_bounded(neg_m, mirror(f)) is True

    def test_involution(self):
        """Test mirroring twice is the identity on comparison atoms."""
        f = IntCmp(Max(A), "<", x, 3)
        assert mirror(mirror(f)) == f


@pytest.mark.unit
@pytest.mark.core
class TestHygiene:
    """Test renaming apart and existential lifting."""

    def test_rename_bound_apart(self):
        """Test two quantifiers over the same name get distinct names."""
        f = And((Exists(x, le(x, y)), Exists(x, le(y, x))))
        result = rename_bound_apart(f)
        first, second = result.args
        assert first.var != second.var

    def test_rename_avoids_free_names(self):
        """Test a binder clashing with a free variable is renamed."""
        f = And((le(x, y), Exists(x, le(x, z))))
        result = rename_bound_apart(f)
        assert result.args[1].var.name != "x"

    def test_lift_positive_existentials(self):
        """Test existentials in positive position become free variables."""
        f = And((Exists(x, le(x, y)), Not(Forall(z, le(z, y)))))
        body, lifted = lift_existentials(f)
        assert set(lifted) == {x, z}
        assert body == And((le(x, y), Not(le(z, y))))

    def test_keeps_existentials_under_forall(self):
        """Test existentials below a universal stay quantified."""
        f = Forall(z, Exists(x, le(x, z)))
        body, lifted = lift_existentials(f)
        assert lifted == []
        assert body == f


@pytest.mark.unit
@pytest.mark.core
class TestSimplify:
    """Test folding of ground atoms."""

    def test_folds_ground_comparisons(self):
        """Test comparisons between constants are evaluated."""
        assert simplify(IntCmp(IntConst(1), "<=", IntConst(0), 1)) == TRUE
        assert simplify(IntCmp(x, "<", x)) == FALSE

    def test_folds_count_atoms(self):
        """Test counting atoms without items are evaluated."""
        assert simplify(CountAtom(MDiff(IntConst(3), IntConst(1)), ">=")) == TRUE
        assert simplify(DivAtom(IntConst(7), 3, 1)) == TRUE

    def test_keeps_anchor_equalities(self):
        """Test {min(A)} = {min(A)} is not folded since min(A) may be undefined."""
        atom = SetCmp(Singleton(Min(A)), "=", Singleton(Min(A)))
        assert simplify(atom) == atom

    def test_reflattens(self):
        """Test simplification removes true conjuncts."""
        f = And((SetCmp(A, "=", A), le(x, y)))
        assert simplify(f) == le(x, y)

    def test_drops_vacuous_quantifier(self):
        """Test a quantifier whose variable disappears is removed."""
        f = Exists(x, conj(le(y, z), IntCmp(x, "=", x)))
        assert simplify(f) == le(y, z)

    def test_empty_set_equality(self):
        """Test equality of a set with itself is true."""
        assert simplify(SetCmp(EMPTY, "=", EMPTY)) == TRUE

    def test_spacing_of_fixed_sets(self):
        """Test spacing over the empty set or a constant singleton holds."""
        assert simplify(Spacing(EMPTY, 5)) == TRUE
        assert simplify(Spacing(Singleton(IntConst(3)), 2, 2)) == TRUE
        assert simplify(Spacing(Singleton(Min(A)))) == Spacing(Singleton(Min(A)))


def _core_only(f) -> bool:
    from slidset.core.formula import children

    if isinstance(f, (Or, Exists, Implies, Iff, Member)):
        return False
    if isinstance(f, SetCmp) and f.op in ("<", ">"):
        return False
    return all(_core_only(c) for c in children(f))


@pytest.mark.unit
@pytest.mark.core
class TestRandomized:
    """Test transformations preserve meaning on random formulas."""

    def test_desugar_preserves_truth(self, random_formula, random_model):
        """Test desugared formulas keep their truth value and use core connectives only."""
        rng = random.Random(7)
        for _ in range(40):
            f = random_formula(rng, 3, ["x"], ["A", "B"])
            core = desugar(f)
            assert _core_only(core)
            for _ in range(10):
                m = random_model(rng, ["x"], ["A", "B"], bound=3)
                assert eval_bounded(m, core) == eval_bounded(m, f), (f, m.ints, m.sets)

    def test_substitutions_compose(self, random_formula, random_model):
        """Test two substitutions in a row equal their composition."""
        rng = random.Random(11)
        for _ in range(40):
            f = random_formula(rng, 3, ["x", "y"], ["A", "B"])
            first = {x: rng.choice([y, IntConst(1), Min(B)]), A: rng.choice([B, SetUnion(B, Singleton(y))])}
            second = {y: rng.choice([IntConst(-1), Max(A)]), B: rng.choice([A, EMPTY])}
            composed = {k: substitute(v, second) for k, v in first.items()}
            composed.update({k: v for k, v in second.items() if k not in composed})
            stepwise = substitute(substitute(f, first), second)
            together = substitute(f, composed)
            for _ in range(8):
                m = random_model(rng, ["x", "y"], ["A", "B"], bound=3)
                assert eval_bounded(m, stepwise) == eval_bounded(m, together), (f, m.ints, m.sets)

    def test_mirror_preserves_truth(self, random_formula, random_model):
        """Test a model satisfies a formula iff its negation satisfies the mirror."""
        rng = random.Random(13)
        for _ in range(30):
            f = random_formula(rng, 2, ["x"], ["A", "B"])
            for _ in range(8):
                m = random_model(rng, ["x"], ["A", "B"], bound=3)
                neg_m = BoundedModel(
                    universe=m.universe,
                    ints={k: -v for k, v in m.ints.items()},
                    sets={k: frozenset(-v for v in s) for k, s in m.sets.items()},
                )
                assert eval_bounded(m, f) == eval_bounded(neg_m, mirror(f)), (f, m.ints, m.sets)
