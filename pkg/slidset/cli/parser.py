"""
Parser for problem files.

A problem file is a sequence of blocks::

    fields next: loc, data: int;
    vars x: loc, y: loc, A: set, B: set;

    pred plseg(E: loc, S: set; F: loc, S2: set) :=
        exists X: loc, S1: set.
        S = S1 u {min(S)} /\\ min(S1) = min(S) + 1 /\\
        E |-> (next: X, data: min(S)) * plseg(X, S1; F, S2);

    relation S -> T: S = T u {min(S)} /\\ min(T) = min(S) + 1;

    formula x != y /\\ min(A) = 0 /\\ plseg(x, A; y, B);

Every free variable of the formula block must be declared in ``vars``.
Comments run from ``//`` to the end of the line. Formulas use the syntax
printed by ``slidset.core.printer.show``.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from slidset.core.errors import IndependenceViolation, ParseError
from slidset.core.formula import (
    FALSE, INT_TERMS, SET_TERMS, TRUE, And, Card, CountAtom, DivAtom, EmptySet, Exists, Forall,
    Formula, Iff, Implies, IntCmp, IntConst, IntVar, Max, MDiff, Member, Min, MScale, MSum, Not,
    Or, SetCmp, SetDiff, SetInter, SetUnion, SetVar, Singleton, Sort, conj,
)
from slidset.services.dbs import DbsRelation, from_formula
from slidset.services.slid import NIL, InductiveDef, Param, PointsTo, PredAtom, PureAtom, SlidFormula

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>//[^\n]*)
  | (?P<number>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_#']*)
  | (?P<symbol><->|\|->|:=|/\\|\\/|->|<=|>=|!=|[=<>(){},;:.*+\-~\\])
""", re.VERBOSE)

KEYWORDS = frozenset({
    "u", "n", "in", "mod", "min", "max", "card", "exists", "forall", "true", "false",
    "emp", "nil", "pred", "fields", "vars", "relation", "formula", "int", "set", "loc",
})
_SORTS = {"int": Sort.INT, "set": Sort.SET, "loc": Sort.LOC}
_COMPARISONS = ("=", "!=", "<=", ">=", "<", ">")
_TERM_OPS = ("+", "-", "u", "n", "\\")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"Unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "newline":
            line, start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            value = m.group()
            if kind == "ident" and value in KEYWORDS:
                kind = "keyword"
            tokens.append(Token(kind, value, line, pos - start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - start + 1))
    return tokens


# === Problems ===

@dataclass(frozen=True)
class RelationBlock:
    """A relation between pairs of set variables, iterated in lockstep."""

    pairs: tuple[tuple[str, str], ...]
    formula: Formula

    def relations(self) -> list[DbsRelation]:
        atoms = list(self.formula.args) if isinstance(self.formula, And) else [self.formula]
        groups: list[list[Formula]] = [[] for _ in self.pairs]
        for atom in atoms:
            owners = [i for i, pair in enumerate(self.pairs) if atom.free_names & set(pair)]
            if len(owners) != 1 or not atom.free_names <= set(self.pairs[owners[0]]):
                raise IndependenceViolation(f"Conjunct over {sorted(atom.free_names)} mixes parameter pairs")
            groups[owners[0]].append(atom)
        return [from_formula(conj(g), s, t) for (s, t), g in zip(self.pairs, groups)]


@dataclass
class Problem:
    fields: dict[str, Sort] = field(default_factory=dict)
    variables: dict[str, Sort] = field(default_factory=dict)
    defs: dict[str, InductiveDef] = field(default_factory=dict)
    relations: list[RelationBlock] = field(default_factory=list)
    formula: SlidFormula | None = None


# === Parser ===

class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.scopes: list[dict[str, Sort]] = []
        self.predicates: set[str] = set()
        self.problem = Problem()

    # --- token helpers ---

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("symbol", "keyword") and self.tok.text in texts

    def error(self, message: str, token: Token | None = None) -> ParseError:
        token = token or self.tok
        return ParseError(message, token.line, token.column)

    def advance(self) -> Token:
        token = self.tok
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"Expected '{text}' but found '{found}'")
        return self.advance()

    def name(self) -> str:
        if self.tok.kind != "ident":
            raise self.error(f"Expected a name but found '{self.tok.text or 'end of input'}'")
        return self.advance().text

    def lookup(self, name: str, token: Token) -> Sort:
        sort = self._declared(name)
        if sort is not None:
            return sort
        raise self.error(f"Undeclared variable {name}", token)

    def scoped(self, names: dict[str, Sort], parse: Callable):
        self.scopes.append(names)
        try:
            return parse()
        finally:
            self.scopes.pop()

    # --- blocks ---

    def problem_file(self) -> Problem:
        while self.tok.kind != "eof":
            keyword = self.tok
            if self.at("fields"):
                self.advance()
                self.problem.fields.update(self.declarations(";"))
                self.expect(";")
            elif self.at("vars"):
                self.advance()
                self.problem.variables.update(self.declarations(";"))
                self.expect(";")
            elif self.at("pred"):
                d = self.pred()
                self.problem.defs[d.name] = d
            elif self.at("relation"):
                self.problem.relations.append(self.relation())
            elif self.at("formula"):
                if self.problem.formula is not None:
                    raise self.error("Only one formula block is allowed", keyword)
                self.advance()
                self.problem.formula = self.scoped(self.problem.variables, self.slid_formula)
                self.expect(";")
            else:
                raise self.error(f"Expected a block keyword but found '{keyword.text}'")
        logger.debug(f"Parsed {len(self.problem.defs)} predicates and {len(self.problem.relations)} relations")
        return self.problem

    def declarations(self, *stops: str) -> dict[str, Sort]:
        out: dict[str, Sort] = {}
        if self.at(*stops):
            return out
        while True:
            name = self.name()
            self.expect(":")
            out[name] = self.sort()
            if not self.at(","):
                return out
            self.advance()

    def params(self) -> tuple[Param, ...]:
        return tuple(Param(n, s) for n, s in self.declarations(";", ")").items())

    def sort(self) -> Sort:
        token = self.advance()
        if token.text not in _SORTS:
            raise self.error(f"Unknown sort '{token.text}'", token)
        return _SORTS[token.text]

    def pred(self) -> InductiveDef:
        self.expect("pred")
        header = self.tok
        name = self.name()
        self.predicates.add(name)
        self.expect("(")
        source = self.params()
        self.expect(";")
        dest = self.params()
        static: tuple[Param, ...] = ()
        if self.at(";"):
            self.advance()
            static = self.params()
        self.expect(")")
        self.expect(":=")
        locals_: tuple[Param, ...] = ()
        if self.at("exists"):
            self.advance()
            locals_ = self.params()
            self.expect(".")
        names = {p.name: p.sort for p in (*source, *dest, *static, *locals_)}
        body = self.scoped(names, self.slid_formula)
        self.expect(";")
        if not source or not dest:
            raise self.error(f"Predicate {name} needs source and destination parameters", header)
        points_to = [a for a in body.spatial if isinstance(a, PointsTo)]
        calls = [a for a in body.spatial if isinstance(a, PredAtom)]
        if len(points_to) != 1 or len(calls) != 1 or body.pure:
            raise self.error(f"The rule of {name} must be one points-to atom and one recursive call", header)
        return InductiveDef(name, source, dest, static, locals_, body.data, points_to[0], calls[0])

    def relation(self) -> RelationBlock:
        self.expect("relation")
        pairs: list[tuple[str, str]] = []
        while True:
            source = self.name()
            self.expect("->")
            pairs.append((source, self.name()))
            if not self.at(","):
                break
            self.advance()
        self.expect(":")
        names = {n: Sort.SET for pair in pairs for n in pair}
        body = self.scoped(names, self.formula)
        self.expect(";")
        return RelationBlock(tuple(pairs), body)

    # --- separation logic ---

    def slid_formula(self) -> SlidFormula:
        data: list[Formula] = []
        spatial: list = []
        pure: list[PureAtom] = []
        while True:
            if self.at("emp") or self._spatial_ahead():
                spatial.extend(self.spatial())
            else:
                for part in _conjuncts(self.unary()):
                    atom = self._pure(part)
                    if atom is None:
                        data.append(part)
                    else:
                        pure.append(atom)
            if not self.at("/\\"):
                break
            self.advance()
        return SlidFormula(tuple(pure), conj(data), tuple(spatial))

    def _spatial_ahead(self) -> bool:
        if self.tok.kind == "ident" or self.at("nil"):
            nxt = self.peek()
            return nxt.text == "|->" or (self.tok.text in self.predicates and nxt.text == "(")
        return False

    def spatial(self) -> list:
        atoms = []
        while True:
            if self.at("emp"):
                self.advance()
            elif self.tok.text in self.predicates and self.peek().text == "(":
                atoms.append(self.call())
            else:
                atoms.append(self.points_to())
            if not self.at("*"):
                return atoms
            self.advance()

    def location(self) -> str:
        if self.at("nil"):
            self.advance()
            return NIL
        token = self.tok
        name = self.name()
        self.lookup(name, token)
        return name

    def points_to(self) -> PointsTo:
        root = self.location()
        self.expect("|->")
        self.expect("(")
        fields: list = []
        while not self.at(")"):
            field_token = self.tok
            name = self.name()
            if self.problem.fields and name not in self.problem.fields:
                raise self.error(f"Unknown field {name}", field_token)
            self.expect(":")
            value = self.term()
            if not isinstance(value, INT_TERMS):
                raise self.error(f"Field {name} needs an integer or location value", field_token)
            fields.append((name, value))
            if not self.at(","):
                break
            self.advance()
        self.expect(")")
        return PointsTo(root, tuple(fields))

    def call(self) -> PredAtom:
        pred = self.name()
        self.expect("(")
        groups: list[list[str]] = [[]]
        while not self.at(")"):
            if self.at(";"):
                self.advance()
                groups.append([])
                continue
            groups[-1].append(self.location())
            if self.at(","):
                self.advance()
        self.expect(")")
        if len(groups) not in (2, 3):
            raise self.error(f"Call of {pred} needs source; destination[; static] arguments")
        static = tuple(groups[2]) if len(groups) == 3 else ()
        return PredAtom(pred, tuple(groups[0]), tuple(groups[1]), static)

    def _pure(self, f: Formula) -> PureAtom | None:
        positive = f.arg if isinstance(f, Not) else f
        if not (isinstance(positive, IntCmp) and positive.op == "=" and positive.offset == 0):
            return None
        names = [self._location_name(t) for t in (positive.left, positive.right)]
        if None in names or names == [NIL, NIL]:
            return None
        return PureAtom(names[0], "!=" if isinstance(f, Not) else "=", names[1])

    def _location_name(self, t) -> str | None:
        if t == IntConst(0):
            return NIL
        if isinstance(t, IntVar) and self._declared(t.name) == Sort.LOC:
            return t.name
        return None

    def _declared(self, name: str) -> Sort | None:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    # --- formulas ---

    def formula(self) -> Formula:
        left = self.implication()
        while self.at("<->"):
            self.advance()
            left = Iff(left, self.implication())
        return left

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.at("->"):
            self.advance()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.at("\\/"):
            self.advance()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.unary()]
        while self.at("/\\"):
            self.advance()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self) -> Formula:
        if self.at("~"):
            self.advance()
            return Not(self.unary())
        if self.at("exists", "forall"):
            return self.quantifier()
        if self.at("true"):
            self.advance()
            return TRUE
        if self.at("false"):
            self.advance()
            return FALSE
        if self.at("("):
            saved = self.pos
            try:
                self.advance()
                inner = self.formula()
                self.expect(")")
                if not self.at(*_COMPARISONS, *_TERM_OPS, "in", "mod"):
                    return inner
            except ParseError:
                pass
            self.pos = saved
        return self.atom()

    def quantifier(self) -> Formula:
        kind = Exists if self.advance().text == "exists" else Forall
        binders = self.declarations(".")
        self.expect(".")
        body = self.scoped(binders, self.formula)
        for name, sort in reversed(list(binders.items())):
            body = kind(SetVar(name) if sort == Sort.SET else IntVar(name), body)
        return body

    def atom(self) -> Formula:
        start = self.tok
        left = self.term()
        if self.at("in"):
            self.advance()
            right = self.term()
            if not isinstance(left, INT_TERMS) or not isinstance(right, SET_TERMS):
                raise self.error("Membership needs an integer and a set", start)
            return Member(left, right)
        if self.at("mod"):
            self.advance()
            modulus = self.number()
            self.expect("=")
            return DivAtom(left, modulus, self.number())
        if not self.at(*_COMPARISONS):
            raise self.error(f"Expected a comparison but found '{self.tok.text or 'end of input'}'")
        op = self.advance().text
        right = self.term()
        return self.comparison(left, op, right, start)

    def number(self) -> int:
        if self.tok.kind != "number":
            raise self.error("Expected a number")
        return int(self.advance().text)

    def comparison(self, left, op: str, right, token: Token) -> Formula:
        left_set, right_set = isinstance(left, SET_TERMS), isinstance(right, SET_TERMS)
        if left_set != right_set:
            raise self.error("Cannot compare a set with an integer", token)
        if op == "!=":
            return Not(self.comparison(left, "=", right, token))
        if left_set:
            return SetCmp(left, op, right)
        base, offset = _peel(right)
        if isinstance(left, INT_TERMS) and isinstance(base, INT_TERMS):
            return IntCmp(left, op, base, offset)
        term = left if right == IntConst(0) else MDiff(left, right)
        if op == "<":
            return CountAtom(MSum(term, IntConst(1)), "<=")
        if op == ">":
            return CountAtom(MDiff(term, IntConst(1)), ">=")
        return CountAtom(term, op)

    # --- terms ---

    def term(self):
        left = self.scaled()
        while self.at(*_TERM_OPS):
            token = self.advance()
            right = self.scaled()
            left = self._combine(token, left, right)
        return left

    def _combine(self, token: Token, left, right):
        sets = isinstance(left, SET_TERMS), isinstance(right, SET_TERMS)
        if token.text in ("+", "-"):
            if any(sets):
                raise self.error(f"'{token.text}' needs integer operands", token)
            return MSum(left, right) if token.text == "+" else MDiff(left, right)
        if not all(sets):
            raise self.error(f"'{token.text}' needs set operands", token)
        return {"u": SetUnion, "n": SetInter, "\\": SetDiff}[token.text](left, right)

    def scaled(self):
        if self.at("-"):
            self.advance()
            if self.tok.kind == "number":
                return IntConst(-int(self.advance().text))
            return MScale(-1, self.scaled())
        if self.tok.kind == "number" and self.peek().text == "*":
            coeff = int(self.advance().text)
            self.advance()
            return MScale(coeff, self.primary())
        return self.primary()

    def primary(self):
        token = self.tok
        if token.kind == "number":
            self.advance()
            return IntConst(int(token.text))
        if self.at("nil"):
            self.advance()
            return IntConst(0)
        if self.at("min", "max", "card"):
            self.advance()
            self.expect("(")
            arg = self.term()
            self.expect(")")
            if not isinstance(arg, SET_TERMS):
                raise self.error(f"{token.text} needs a set argument", token)
            return {"min": Min, "max": Max, "card": Card}[token.text](arg)
        if self.at("{"):
            self.advance()
            if self.at("}"):
                self.advance()
                return EmptySet()
            elem = self.term()
            self.expect("}")
            if not isinstance(elem, INT_TERMS):
                raise self.error("A singleton needs an integer element", token)
            return Singleton(elem)
        if self.at("("):
            self.advance()
            inner = self.term()
            self.expect(")")
            return inner
        name = self.name()
        sort = self.lookup(name, token)
        return SetVar(name) if sort == Sort.SET else IntVar(name)


def _peel(t):
    """Split ``base + c`` into (base, c)."""
    if isinstance(t, MSum) and isinstance(t.right, IntConst) and isinstance(t.left, INT_TERMS):
        return t.left, t.right.value
    if isinstance(t, MDiff) and isinstance(t.right, IntConst) and isinstance(t.left, INT_TERMS):
        return t.left, -t.right.value
    return t, 0


def _conjuncts(f: Formula) -> Iterator[Formula]:
    if isinstance(f, And):
        for a in f.args:
            yield from _conjuncts(a)
    else:
        yield f


def parse_problem(text: str) -> Problem:
    return Parser(text).problem_file()


def parse_formula(text: str, sorts: dict[str, Sort] | None = None) -> Formula:
    """A single formula over variables of the given sorts."""
    parser = Parser(text)
    result = parser.scoped(dict(sorts or {}), parser.formula)
    if parser.tok.kind != "eof":
        raise parser.error(f"Unexpected '{parser.tok.text}' after the formula")
    return result


def load_problem(path: Path | str) -> Problem:
    path = Path(path)
    logger.info(f"Reading problem file {path}")
    return parse_problem(path.read_text(encoding="utf-8"))
