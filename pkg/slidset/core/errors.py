"""
Exception hierarchy for slidset.

Unsatisfiability is never signalled through exceptions; it is returned as a value.
Everything raised here is a genuine failure (bad input, exhausted budget, broken
precondition) and is mapped to exit code 2 by the command-line front end.
"""
from __future__ import annotations

from typing import Any


class SlidsetError(Exception):
    """Base class for all slidset failures."""


class UnboundVariable(SlidsetError):
    """A free variable of a formula has no value in the model."""

    def __init__(self, name: str):
        super().__init__(f"Variable '{name}' is not assigned in the model")
        self.name = name


class SortError(SlidsetError):
    """A substitution or construction mixes integer and set sorts."""


class ParseError(SlidsetError):
    """Syntax error in a problem file, carrying the position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class NotSaturated(SlidsetError):
    """A relation handed to the closure engine fails the saturation validator."""


class IndependenceViolation(SlidsetError):
    """An atom of a multi-parameter relation mentions more than one index."""


class NonLinear(SlidsetError):
    """A term is not linear in the variable being eliminated."""


NonLinearInX = NonLinear


class MissingTc(SlidsetError):
    """Unfolding needs a transitive closure that was not computed."""


class MixedPredicates(SlidsetError):
    """A formula uses more than one inductive predicate."""


class InvalidDefinition(SlidsetError):
    """An inductive definition violates one of the C1-C6 conditions."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class StateBlowup(SlidsetError):
    """An automaton construction exceeded the configured state budget."""

    def __init__(self, limit: int):
        super().__init__(f"Automaton construction exceeded the state budget of {limit}")
        self.limit = limit


class SolverBudget(SlidsetError):
    """The arithmetic backend gave up within its resource limits."""


class UnexpressibleTerm(SlidsetError):
    """A counting constraint mentions a term the tracker automata cannot express."""


class FuelExhausted(SlidsetError):
    """Bounded unfolding ran out of fuel before the answer was determined."""


class StageError(SlidsetError):
    """Failure inside one stage of the satisfiability pipeline."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
