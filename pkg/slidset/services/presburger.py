"""
Quantifier-free linear integer arithmetic.

Satisfiability is delegated to z3, which is complete for this fragment; the
only answer besides sat/unsat is a timeout, surfaced as SolverBudget.
Single-variable existential elimination over conjunctions is done here by
Cooper's method so that its output stays a readable formula.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Mapping, Union

import z3

from slidset.config import get_solver_timeout_ms
from slidset.core.errors import NonLinear, SolverBudget
from slidset.services.models import UNSAT, Unsat

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Lin:
    """Linear expression sum(c * v) + const with nonzero coefficients sorted by name."""

    coeffs: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @classmethod
    def of(cls, coeffs: Mapping[str, int] | None = None, const: int = 0) -> Lin:
        items = tuple(sorted((k, v) for k, v in (coeffs or {}).items() if v != 0))
        return cls(items, const)

    @classmethod
    def var(cls, name: str, coeff: int = 1) -> Lin:
        return cls.of({name: coeff})

    @classmethod
    def constant(cls, value: int) -> Lin:
        return cls((), value)

    def as_dict(self) -> dict[str, int]:
        return dict(self.coeffs)

    def coeff(self, name: str) -> int:
        return self.as_dict().get(name, 0)

    def variables(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.coeffs)

    def drop(self, name: str) -> Lin:
        return Lin.of({k: v for k, v in self.coeffs if k != name}, self.const)

    def __add__(self, other: Lin) -> Lin:
        merged = self.as_dict()
        for k, v in other.coeffs:
            merged[k] = merged.get(k, 0) + v
        return Lin.of(merged, self.const + other.const)

    def __sub__(self, other: Lin) -> Lin:
        return self + other * -1

    def __mul__(self, k: int) -> Lin:
        return Lin.of({name: c * k for name, c in self.coeffs}, self.const * k)

    def __neg__(self) -> Lin:
        return self * -1

    def evaluate(self, env: Mapping[str, int]) -> int:
        return sum(c * env[k] for k, c in self.coeffs) + self.const


@dataclass(frozen=True)
class LinAtom:
    """``expr op 0``."""

    expr: Lin
    op: str


@dataclass(frozen=True)
class LinDiv:
    """``expr = 0 (mod modulus)``."""

    expr: Lin
    modulus: int


@dataclass(frozen=True)
class QAnd:
    args: tuple[QfpaFormula, ...]


@dataclass(frozen=True)
class QOr:
    args: tuple[QfpaFormula, ...]


@dataclass(frozen=True)
class QNot:
    arg: QfpaFormula


@dataclass(frozen=True)
class QConst:
    value: bool


QfpaFormula = Union[LinAtom, LinDiv, QAnd, QOr, QNot, QConst]
QTRUE = QConst(True)
QFALSE = QConst(False)


def qand(*parts: QfpaFormula | Iterable[QfpaFormula]) -> QfpaFormula:
    flat: list[QfpaFormula] = []
    for part in _flatten(parts):
        if part == QFALSE:
            return QFALSE
        if part == QTRUE:
            continue
        flat.extend(part.args if isinstance(part, QAnd) else (part,))
    if not flat:
        return QTRUE
    return flat[0] if len(flat) == 1 else QAnd(tuple(flat))


def qor(*parts: QfpaFormula | Iterable[QfpaFormula]) -> QfpaFormula:
    flat: list[QfpaFormula] = []
    for part in _flatten(parts):
        if part == QTRUE:
            return QTRUE
        if part == QFALSE:
            continue
        flat.extend(part.args if isinstance(part, QOr) else (part,))
    if not flat:
        return QFALSE
    return flat[0] if len(flat) == 1 else QOr(tuple(flat))


def _flatten(parts) -> Iterable[QfpaFormula]:
    for part in parts:
        if isinstance(part, (LinAtom, LinDiv, QAnd, QOr, QNot, QConst)):
            yield part
        else:
            yield from part


def lin_atom(expr: Lin, op: str) -> QfpaFormula:
    """Atom constructor that folds ground atoms and normalises strict comparisons."""
    if op == "<":
        expr, op = expr + Lin.constant(1), "<="
    elif op == ">":
        expr, op = expr - Lin.constant(1), ">="
    if not expr.coeffs:
        return QConst(_holds(expr.const, op))
    return LinAtom(expr, op)


def lin_div(expr: Lin, modulus: int) -> QfpaFormula:
    modulus = abs(modulus)
    if modulus == 1:
        return QTRUE
    expr = Lin.of({k: v % modulus for k, v in expr.coeffs}, expr.const % modulus)
    if not expr.coeffs:
        return QConst(expr.const == 0)
    return LinDiv(expr, modulus)


def _holds(value: int, op: str) -> bool:
    if op == "=":
        return value == 0
    if op == "<=":
        return value <= 0
    if op == ">=":
        return value >= 0
    if op == "!=":
        return value != 0
    raise ValueError(f"Unknown operator {op!r}")


def qfpa_vars(f: QfpaFormula) -> frozenset[str]:
    if isinstance(f, (LinAtom, LinDiv)):
        return f.expr.variables()
    if isinstance(f, (QAnd, QOr)):
        return frozenset().union(*(qfpa_vars(a) for a in f.args))
    if isinstance(f, QNot):
        return qfpa_vars(f.arg)
    return frozenset()


def qfpa_eval(f: QfpaFormula, env: Mapping[str, int]) -> bool:
    if isinstance(f, QConst):
        return f.value
    if isinstance(f, LinAtom):
        return _holds(f.expr.evaluate(env), f.op)
    if isinstance(f, LinDiv):
        return f.expr.evaluate(env) % f.modulus == 0
    if isinstance(f, QAnd):
        return all(qfpa_eval(a, env) for a in f.args)
    if isinstance(f, QOr):
        return any(qfpa_eval(a, env) for a in f.args)
    if isinstance(f, QNot):
        return not qfpa_eval(f.arg, env)
    raise TypeError(f"Not a Presburger formula: {f!r}")


# === Satisfiability ===

def to_z3(f: QfpaFormula, symbols: dict[str, z3.ArithRef]):
    """Translate into a z3 Boolean expression, creating integer symbols on demand."""
    if isinstance(f, QConst):
        return z3.BoolVal(f.value)
    if isinstance(f, (LinAtom, LinDiv)):
        expr = _lin_to_z3(f.expr, symbols)
        if isinstance(f, LinDiv):
            return expr % f.modulus == 0
        if f.op == "=":
            return expr == 0
        if f.op == "<=":
            return expr <= 0
        if f.op == ">=":
            return expr >= 0
        return expr != 0
    if isinstance(f, QAnd):
        return z3.And(*(to_z3(a, symbols) for a in f.args))
    if isinstance(f, QOr):
        return z3.Or(*(to_z3(a, symbols) for a in f.args))
    if isinstance(f, QNot):
        return z3.Not(to_z3(f.arg, symbols))
    raise TypeError(f"Not a Presburger formula: {f!r}")


def _lin_to_z3(e: Lin, symbols: dict[str, z3.ArithRef]):
    terms = []
    for name, c in e.coeffs:
        if name not in symbols:
            symbols[name] = z3.Int(name)
        terms.append(c * symbols[name])
    terms.append(z3.IntVal(e.const))
    return z3.Sum(*terms) if len(terms) > 1 else terms[0]


def qfpa_sat(
    f: QfpaFormula,
    nonneg: Iterable[str] = (),
    timeout_ms: int | None = None,
) -> dict[str, int] | Unsat:
    """Find an integer model of ``f`` with the ``nonneg`` variables at least 0."""
    symbols: dict[str, z3.ArithRef] = {}
    solver = z3.Solver()
    solver.set("timeout", timeout_ms if timeout_ms is not None else get_solver_timeout_ms())
    solver.add(to_z3(f, symbols))
    for name in nonneg:
        if name not in symbols:
            symbols[name] = z3.Int(name)
        solver.add(symbols[name] >= 0)
    result = solver.check()
    if result == z3.unsat:
        logger.debug(f"Presburger query over {len(symbols)} variables is unsatisfiable")
        return UNSAT
    if result != z3.sat:
        logger.error(f"Presburger solver gave up: {solver.reason_unknown()}")
        raise SolverBudget(f"Presburger solver gave up: {solver.reason_unknown()}")
    model = solver.model()
    return {name: model.eval(sym, model_completion=True).as_long() for name, sym in sorted(symbols.items())}


# === Existential elimination ===

def eliminate_exists(f: QfpaFormula, x: str, lower: int = 0) -> QfpaFormula:
    """Quantifier-free equivalent of ``exists x >= lower. f``.

    ``f`` must be a conjunction of linear and divisibility atoms.
    """
    atoms = _conjuncts(f)
    if atoms is None:
        raise NonLinear(f"Elimination of {x} expects a conjunction of atoms")
    if any(a == QFALSE for a in atoms):
        return QFALSE
    atoms = [a for a in atoms if a != QTRUE]
    guard = lin_atom(Lin.var(x) - Lin.constant(lower), ">=")
    keep = [a for a in atoms if a.expr.coeff(x) == 0]
    touching = [a for a in atoms if a.expr.coeff(x) != 0] + [guard]

    equality = next((a for a in touching if isinstance(a, LinAtom) and a.op == "="), None)
    if equality is not None:
        return qand(keep, _eliminate_by_equality(equality, touching, x))
    return qand(keep, _cooper(touching, x))


def _conjuncts(f: QfpaFormula) -> list | None:
    if isinstance(f, (LinAtom, LinDiv, QConst)):
        return [f]
    if isinstance(f, QAnd):
        out: list = []
        for a in f.args:
            sub = _conjuncts(a)
            if sub is None:
                return None
            out.extend(sub)
        return out
    return None


def _eliminate_by_equality(eq: LinAtom, atoms: list, x: str) -> QfpaFormula:
    # c*x + t = 0, so c*x is replaced by -t everywhere after scaling by c.
    c = eq.expr.coeff(x)
    t = eq.expr.drop(x)
    parts: list[QfpaFormula] = [lin_div(t, abs(c))]
    for a in atoms:
        if a is eq:
            continue
        b = a.expr.coeff(x)
        s = a.expr.drop(x)
        replaced = t * -b + s * c
        if isinstance(a, LinDiv):
            parts.append(lin_div(replaced, abs(c) * a.modulus))
        else:
            op = a.op if c > 0 or a.op == "=" else {"<=": ">=", ">=": "<="}[a.op]
            parts.append(lin_atom(replaced, op))
    return qand(parts)


def _cooper(atoms: list, x: str) -> QfpaFormula:
    delta = reduce(math.lcm, (abs(a.expr.coeff(x)) for a in atoms), 1)
    lowers: list[Lin] = []
    uppers: list[Lin] = []
    mods: list[tuple[Lin, int]] = []
    # After scaling, every atom speaks about x' = delta * x with coefficient +-1.
    for a in atoms:
        b = a.expr.coeff(x)
        k = delta // abs(b)
        rest = a.expr.drop(x) * k
        sign = 1 if b > 0 else -1
        if isinstance(a, LinDiv):
            # sign*x' + rest = 0 (mod m*k)  <=>  x' + sign*rest = 0 (mod m*k)
            mods.append((rest * sign, a.modulus * k))
        elif (a.op == "<=") == (sign > 0):
            # x' <= -sign*rest
            uppers.append(rest * -sign)
        else:
            # x' >= -sign*rest
            lowers.append(rest * -sign)
    if delta > 1:
        mods.append((Lin.constant(0), delta))
    period = reduce(math.lcm, (m for _, m in mods), 1)
    disjuncts: list[QfpaFormula] = []
    for low in lowers:
        for k in range(period):
            point = low + Lin.constant(k)
            parts: list[QfpaFormula] = []
            parts += [lin_atom(point - other, ">=") for other in lowers if other is not low]
            parts += [lin_atom(point - up, "<=") for up in uppers]
            parts += [lin_div(point + rest, m) for rest, m in mods]
            disjuncts.append(qand(parts))
    logger.debug(f"Cooper elimination of {x}: {len(lowers)} lower bounds, period {period}")
    return qor(disjuncts)
