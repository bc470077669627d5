"""
Unit tests for symbolic finite automata.

Languages are compared on every word of length at most three over two tracks.
"""
import itertools

import pytest

from slidset.core.errors import StateBlowup
from slidset.services.automata import (
    TOP, accepts, complement, cube, cube_admits_zero, cube_and, cube_letter, cube_matches,
    cube_negation, cube_text, determinize, dump, empty, is_empty, lit, make_nfa, minimize,
    pad_close, product, project, reverse, shortest_word, trim, union, universal,
)

LETTERS = [frozenset(s) for s in ([], ["a"], ["b"], ["a", "b"])]
WORDS = [list(w) for n in range(4) for w in itertools.product(LETTERS, repeat=n)]


def no_a():
    """Words whose letters all have a false."""
    return make_nfa(1, [0], [0], [(0, lit("a", False), 0)])


def some_a():
    """Words with at least one letter having a true."""
    return make_nfa(2, [0], [1], [(0, lit("a", False), 0), (0, lit("a"), 1), (1, TOP, 1)])


def first_a():
    return make_nfa(2, [0], [1], [(0, lit("a"), 1), (1, TOP, 1)])


def language(nfa):
    return [accepts(nfa, w) for w in WORDS]


@pytest.mark.unit
@pytest.mark.services
class TestCubes:
    """Test cube helpers."""

    def test_conjunction(self):
        """Test contradictory cubes have no conjunction."""
        assert cube_and(lit("a"), lit("a", False)) is None
        assert cube_and(lit("a"), lit("b", False)) == cube(a=True, b=False)
        assert cube_and(TOP, lit("a")) == lit("a")

    def test_negation_partitions(self):
        """Test the negation cubes are disjoint and cover the complement."""
        c = cube(a=True, b=False)
        pieces = cube_negation(c)
        for letter in LETTERS:
            hits = [p for p in pieces if cube_matches(p, letter)]
            assert len(hits) == (0 if cube_matches(c, letter) else 1)

    def test_letters(self):
        """Test matching and the smallest letter of a cube."""
        c = cube(a=True, b=False)
        assert cube_matches(c, frozenset({"a"}))
        assert not cube_matches(c, frozenset({"a", "b"}))
        assert cube_letter(c) == frozenset({"a"})
        assert cube_admits_zero(lit("a", False))
        assert not cube_admits_zero(c)
        assert cube_text(c) == "{a,!b}"


@pytest.mark.unit
@pytest.mark.services
class TestConstructions:
    """Test Boolean operations on automata."""

    def test_basic_languages(self):
        """Test the universal and empty automata."""
        assert all(language(universal()))
        assert not any(language(empty()))

    def test_product_is_intersection(self):
        """Test the product of disjoint languages is empty."""
        assert is_empty(product(no_a(), some_a()))
        both = product(some_a(), first_a())
        assert language(both) == [x and y for x, y in zip(language(some_a()), language(first_a()))]

    def test_union(self):
        """Test the union of complementary languages is everything."""
        assert all(language(union(no_a(), some_a())))

    def test_complement(self):
        """Test complementing some_a gives no_a."""
        assert language(complement(some_a())) == language(no_a())
        assert language(complement(complement(first_a()))) == language(first_a())

    def test_determinize_is_deterministic(self):
        """Test every letter has exactly one successor in the subset automaton."""
        d = determinize(union(some_a(), first_a()))
        assert len(d.initial) == 1
        for q in range(d.size):
            for letter in LETTERS:
                assert sum(cube_matches(c, letter) for c, _ in d.successors(q)) == 1
        assert language(d) == language(union(some_a(), first_a()))

    def test_minimize_keeps_language(self):
        """Test minimization does not grow the automaton or change its language."""
        d = determinize(some_a())
        m = minimize(d)
        assert m.size <= d.size
        assert language(m) == language(some_a())

    def test_reverse(self):
        """Test reversal turns a first-letter condition into a last-letter one."""
        r = reverse(first_a())
        assert accepts(r, [frozenset(), frozenset({"a"})])
        assert not accepts(r, [frozenset({"a"}), frozenset()])

    def test_project_forgets_track(self):
        """Test projecting a away accepts every word."""
        p = project(some_a(), "a")
        assert "a" not in p.tracks
        assert all(language(p))

    def test_pad_close(self):
        """Test states reaching acceptance through all-false letters become final."""
        a = make_nfa(2, [0], [1], [(0, lit("b", False), 1)])
        assert not accepts(a, [])
        assert accepts(pad_close(a), [])

    def test_trim_drops_useless_states(self):
        """Test unreachable and dead states are removed."""
        a = make_nfa(4, [0], [1], [(0, lit("a"), 1), (2, TOP, 1), (0, lit("b"), 3)])
        t = trim(a)
        assert t.size == 2
        assert language(t) == language(a)

    def test_trim_of_empty_language(self):
        """Test trimming an automaton without final states yields the empty automaton."""
        assert trim(make_nfa(2, [0], [], [(0, TOP, 1)])).size == 1


@pytest.mark.unit
@pytest.mark.services
class TestQueriesAndBudget:
    """Test witnesses, state budgets and dumps."""

    def test_shortest_word(self):
        """Test the shortest witness of some_a is a single letter with a."""
        assert shortest_word(some_a()) == [frozenset({"a"})]
        assert shortest_word(no_a()) == []
        assert shortest_word(empty()) is None

    def test_product_budget(self):
        """Test the product stops at the state budget."""
        with pytest.raises(StateBlowup) as exc_info:
            product(some_a(), some_a(), limit=1)
        assert exc_info.value.limit == 1

    def test_determinize_budget(self):
        """Test the subset construction stops at the state budget."""
        with pytest.raises(StateBlowup):
            determinize(some_a(), limit=1)

    def test_dump(self):
        """Test the plain-text listing."""
        assert dump(no_a()) == "states 1\ninitial 0\nfinal 0\n0 {!a} 0"
