"""
Configuration file for pytest.
"""
import os
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# Load .env file for test configuration
from dotenv import load_dotenv
load_dotenv()

# Keep budgets small and deterministic (fallbacks if not in .env)
os.environ.setdefault("SLIDSET_MAX_STATES", "20000")
os.environ.setdefault("SLIDSET_SOLVER_TIMEOUT_MS", "60000")
os.environ.setdefault("SLIDSET_EVAL_WINDOW", "4")
os.environ.setdefault("SLIDSET_FUEL", "6")
os.environ.setdefault("SLIDSET_LOG_LEVEL", "WARNING")

import pytest


PLSEG = """
fields next: loc, data: int;
vars x: loc, y: loc, z: loc, A: set, B: set, C: set;
pred plseg(E: loc, S: set; F: loc, S2: set) :=
    exists X: loc, S1: set.
    S = S1 u {min(S)} /\\ min(S1) = min(S) + 1 /\\
    E |-> (next: X, data: min(S)) * plseg(X, S1; F, S2);
"""

SDLLSEG = """
fields next: loc, prev: loc, data: int;
vars x: loc, p: loc, y: loc, l: loc, A: set, B: set;
pred sdllseg(E: loc, P: loc, S: set; F: loc, L: loc, S2: set) :=
    exists X: loc, S1: set.
    S = S1 u {min(S)} /\\
    E |-> (next: X, prev: P, data: min(S)) * sdllseg(X, E, S1; F, L, S2);
"""

LDLLSEG = """
fields next: loc, prev: loc;
vars x: loc, p: loc, y: loc, l: loc, A: set, B: set;
pred ldllseg(E: loc, P: loc, S: set; F: loc, L: loc, S2: set) :=
    exists X: loc, S1: set.
    S = S1 u {max(S)} /\\ max(S1) = max(S) - 1 /\\
    E |-> (next: X, prev: P) * ldllseg(X, E, S1; F, L, S2);
"""


@pytest.fixture(autouse=True)
def reset_overrides():
    """Drop command-line overrides installed by a previous test."""
    from slidset.config import clear_overrides
    yield
    clear_overrides()


@pytest.fixture
def plseg_source():
    """Declarations and the plseg predicate, ready to append a formula block."""
    return PLSEG


@pytest.fixture
def sdllseg_source():
    return SDLLSEG


@pytest.fixture
def ldllseg_source():
    return LDLLSEG


@pytest.fixture
def plseg_def():
    """Parsed plseg definition."""
    from slidset.cli.parser import parse_problem
    return parse_problem(PLSEG).defs["plseg"]


@pytest.fixture
def sdllseg_def():
    from slidset.cli.parser import parse_problem
    return parse_problem(SDLLSEG).defs["sdllseg"]


@pytest.fixture
def ldllseg_def():
    from slidset.cli.parser import parse_problem
    return parse_problem(LDLLSEG).defs["ldllseg"]


@pytest.fixture
def problem_file(tmp_path):
    """Factory writing problem text into a temporary .sl file."""
    def write(text: str, name: str = "problem.sl") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write


@pytest.fixture
def S():
    from slidset.core.formula import SetVar
    return SetVar("S")


@pytest.fixture
def T():
    from slidset.core.formula import SetVar
    return SetVar("S'")


def _draw_formula(rng, depth, ints, sets, natural=False, counting=True, quantifiers=True):
    """Random formula over the named variables; constants are nonnegative when ``natural``."""
    from slidset.core.formula import (
        EMPTY, And, Card, CountAtom, DivAtom, Exists, Forall, Iff, Implies, IntCmp, IntConst,
        IntVar, Max, MDiff, Member, Min, MSum, Not, Or, SetCmp, SetDiff, SetInter, SetUnion,
        SetVar, Singleton, Spacing,
    )

    def int_term(ints, sets):
        options = ["const", "anchor"] + (["var", "var"] if ints else [])
        kind = rng.choice(options)
        if kind == "var":
            return IntVar(rng.choice(ints))
        if kind == "const":
            return IntConst(rng.randint(0, 2) if natural else rng.randint(-2, 2))
        return rng.choice((Min, Max))(SetVar(rng.choice(sets)))

    def set_term(ints, sets, nested=True):
        kind = rng.choice(["var", "var", "empty", "single"] + (["op", "op"] if nested else []))
        if kind == "var":
            return SetVar(rng.choice(sets))
        if kind == "empty":
            return EMPTY
        if kind == "single":
            return Singleton(int_term(ints, sets))
        op = rng.choice((SetUnion, SetInter, SetDiff))
        return op(set_term(ints, sets, False), set_term(ints, sets, False))

    def atom(ints, sets):
        kinds = ["int", "int", "set", "member", "spacing"] + (["count", "div"] if counting else [])
        kind = rng.choice(kinds)
        if kind == "int":
            op = rng.choice(["=", "<=", "<", ">=", ">"])
            return IntCmp(int_term(ints, sets), op, int_term(ints, sets), rng.randint(-2, 2))
        if kind == "set":
            return SetCmp(set_term(ints, sets), rng.choice(["=", "<="]), set_term(ints, sets))
        if kind == "member":
            return Member(int_term(ints, sets), set_term(ints, sets))
        if kind == "spacing":
            return Spacing(set_term(ints, sets), rng.randint(1, 2), rng.choice([None, 2, 3]))
        card = Card(SetVar(rng.choice(sets)))
        if kind == "count":
            term = MSum(card, IntVar(rng.choice(ints))) if ints and rng.random() < 0.5 else card
            return CountAtom(MDiff(term, IntConst(rng.randint(0, 3))), rng.choice(["=", "<=", ">="]))
        return DivAtom(card, rng.randint(2, 3), rng.randint(0, 1))

    def formula(level, ints, sets, bound):
        if level == 0 or rng.random() < 0.3:
            return atom(ints, sets)
        kinds = ["and", "or", "not", "implies", "iff"] + (["quantifier"] if quantifiers else [])
        kind = rng.choice(kinds)
        if kind == "not":
            return Not(formula(level - 1, ints, sets, bound))
        if kind == "quantifier":
            name = f"q{bound}"
            binder = rng.choice((Exists, Forall))
            if rng.random() < 0.6:
                return binder(IntVar(name), formula(level - 1, ints + [name], sets, bound + 1))
            return binder(SetVar(name.upper()), formula(level - 1, ints, sets + [name.upper()], bound + 1))
        left = formula(level - 1, ints, sets, bound)
        right = formula(level - 1, ints, sets, bound)
        if kind == "and":
            return And((left, right))
        if kind == "or":
            return Or((left, right))
        return (Implies if kind == "implies" else Iff)(left, right)

    return formula(depth, list(ints), list(sets), 0)


@pytest.fixture
def random_formula():
    """Factory drawing random formulas from a seeded ``random.Random``."""
    return _draw_formula


@pytest.fixture
def random_model():
    """Factory drawing random integer models with values in [-bound, bound]."""
    def draw(rng, ints, sets, bound=6, universe=2):
        from slidset.core.evaluation import BoundedModel
        values = range(-bound, bound + 1)
        return BoundedModel(
            universe=universe,
            ints={x: rng.choice(values) for x in ints},
            sets={s: frozenset(rng.sample(values, rng.randint(0, 3))) for s in sets},
        )
    return draw
