"""
Configuration module for slidset.

Budgets and defaults are read from environment variables at import time.
During development a ``.env`` file next to the project is honoured through
python-dotenv; command-line flags override these values per invocation.

Keys:
    SLIDSET_MAX_STATES         automaton state budget
    SLIDSET_SOLVER_TIMEOUT_MS  z3 timeout per Presburger query
    SLIDSET_EVAL_WINDOW        default quantifier window of the bounded evaluator
    SLIDSET_FUEL               default unfolding depth of the heap evaluator
    SLIDSET_ORACLE_UNIVERSE    default data range of the bounded heap search
    SLIDSET_LOG_LEVEL          logging level of the command-line tool
"""
from __future__ import annotations

import logging
import os

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    # dotenv not available, plain environment variables still work
    pass

logger = logging.getLogger(__name__)


def _int_env(key: str, default: int) -> int:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"Ignoring malformed {key}={raw!r}, using default {default}")
        return default


_MAX_STATES = _int_env("SLIDSET_MAX_STATES", 20000)
_SOLVER_TIMEOUT_MS = _int_env("SLIDSET_SOLVER_TIMEOUT_MS", 60000)
_EVAL_WINDOW = _int_env("SLIDSET_EVAL_WINDOW", 6)
_FUEL = _int_env("SLIDSET_FUEL", 6)
_ORACLE_UNIVERSE = _int_env("SLIDSET_ORACLE_UNIVERSE", 5)
_LOG_LEVEL = os.getenv("SLIDSET_LOG_LEVEL", "INFO")

# Per-invocation overrides installed by the command-line front end.
_overrides: dict[str, int] = {}


def get_max_states() -> int:
    """
    Get the automaton state budget.

    Returns:
        Maximum number of states a single determinization or product may create
    """
    return _overrides.get("max_states", _MAX_STATES)


def get_solver_timeout_ms() -> int:
    """
    Get the timeout of a single Presburger satisfiability query.

    Returns:
        Timeout in milliseconds
    """
    return _overrides.get("solver_timeout_ms", _SOLVER_TIMEOUT_MS)


def get_eval_window() -> int:
    """
    Get the default quantifier window U of the bounded evaluator.

    Returns:
        Window bound; quantifiers range over [-U, U]
    """
    return _EVAL_WINDOW


def get_fuel() -> int:
    """Default unfolding depth for heap evaluation."""
    return _FUEL


def get_oracle_universe() -> int:
    """Default largest data value tried by the bounded heap search."""
    return _overrides.get("oracle_universe", _ORACLE_UNIVERSE)


def get_log_level() -> str:
    return _LOG_LEVEL


def set_overrides(**values: int | None) -> None:
    """Install command-line overrides; ``None`` values are ignored."""
    for key, value in values.items():
        if value is not None:
            _overrides[key] = value


def clear_overrides() -> None:
    _overrides.clear()
