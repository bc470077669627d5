"""slidset: satisfiability of separation logic with linearly compositional predicates and set data."""

__version__ = "0.1.0"
