"""
Command-line front end.

    slidset check-sat problem.sl [--emit-tc] [--emit-abs] [--emit-automata] [--oracle U]
    slidset tc problem.sl [--oracle U]

Exit codes: 0 satisfiable (or closure printed), 1 unsatisfiable (or oracle
disagreement for ``tc``), 2 any error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence, TextIO

from pydantic import ValidationError

from slidset import __version__
from slidset.cli.parser import Problem, RelationBlock, load_problem
from slidset.config import clear_overrides, get_log_level, set_overrides
from slidset.core.errors import SlidsetError, StageError
from slidset.core.printer import show, show_lines
from slidset.services.abstraction import SatChecker, describe, predicate_closure
from slidset.services.automata import dump
from slidset.services.closure import TcResult, tc_multi, tc_relation
from slidset.services.dbs import DbsRelation, saturate
from slidset.services.models import OracleReport, TcOracleReport, Unsat, Verdict
from slidset.services.oracle import sat_oracle, tc_oracle
from slidset.validation import BudgetOptions, CheckSatOptions

logger = logging.getLogger(__name__)

EXIT_SAT = 0
EXIT_UNSAT = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slidset", description="Satisfiability of SLID formulas with set data constraints")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default from SLIDSET_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("path", help="Problem file")
        p.add_argument("--format", choices=("human", "machine"), default="human")
        p.add_argument("--oracle", type=int, default=None, metavar="U", help="Cross-check with a brute-force search up to U")
        p.add_argument("--budget-states", type=int, default=None, metavar="N")
        p.add_argument("--budget-solver", type=int, default=None, metavar="MS")

    check = sub.add_parser("check-sat", help="Decide satisfiability of the formula block")
    common(check)
    check.add_argument("--emit-tc", action="store_true", help="Print the closure formulas")
    check.add_argument("--emit-abs", action="store_true", help="Print the abstraction")
    check.add_argument("--emit-automata", action="store_true", help="Print the automata built by the solver")
    check.add_argument("--oracle-cells", type=int, default=4, metavar="N", help="Heap size of the bounded search")

    tc = sub.add_parser("tc", help="Print the transitive closure of relations and predicates")
    common(tc)
    return parser


def _options(args: argparse.Namespace) -> CheckSatOptions:
    budgets = BudgetOptions(budget_states=args.budget_states, budget_solver=args.budget_solver, oracle=args.oracle)
    return CheckSatOptions(
        path=args.path,
        format=args.format,
        emit_tc=getattr(args, "emit_tc", False),
        emit_abs=getattr(args, "emit_abs", False),
        emit_automata=getattr(args, "emit_automata", False),
        oracle=args.oracle,
        oracle_cells=getattr(args, "oracle_cells", 4),
        budgets=budgets,
    )


class Report:
    """Writes either the human or the line-oriented machine format."""

    def __init__(self, machine: bool, out: TextIO):
        self.machine = machine
        self.out = out

    def line(self, text: str = "") -> None:
        print(text, file=self.out)

    def pair(self, key: str, value: object) -> None:
        if self.machine:
            self.line(f"{key}={value}")
        else:
            self.line(f"  {key.split('.', 1)[-1]} = {value}")

    def section(self, title: str) -> None:
        if not self.machine:
            self.line(f"{title}:")

    def block(self, key: str, text: str) -> None:
        if self.machine:
            for i, row in enumerate(text.splitlines()):
                self.line(f"{key}.{i}={row}")
        else:
            self.line(text)


# === check-sat ===

def _emit_tc(report: Report, checker: SatChecker) -> None:
    for name, closure in sorted(checker.closures.items()):
        if closure.tc is None:
            continue
        trace = closure.tc.trace
        if report.machine:
            report.pair(f"tc.{name}.case", f"{trace.case}{trace.subcase}")
            report.pair(f"tc.{name}", show(closure.tc.formula))
        else:
            report.line(f"closure of {name} (case {trace.case} {trace.subcase}".rstrip() + "):")
            report.line(show_lines(closure.tc.formula, 1))


def _emit_verdict(report: Report, verdict: Verdict) -> None:
    if not report.machine:
        report.line(verdict.status)
    if verdict.status == "sat":
        report.section("model")
        for name, value in verdict.ints.items():
            report.pair(f"int.{name}", value)
        for name, values in verdict.sets.items():
            text = ",".join(map(str, values)) if report.machine else "{" + ", ".join(map(str, values)) + "}"
            report.pair(f"set.{name}", text)
        for name, flag in verdict.booleans.items():
            report.pair(f"bool.{name}", int(flag) if report.machine else str(flag).lower())
        if verdict.heap:
            report.section("heap")
            for cell in verdict.heap:
                fields = ",".join(f"{k}:{v}" for k, v in cell.fields.items())
                report.pair(f"heap.{cell.location}", fields)
        if verdict.heap_validated is not None:
            report.pair("check.heap_validated", str(verdict.heap_validated).lower())
    elif verdict.message:
        report.pair("check.reason", verdict.message)
    if not report.machine and verdict.timings:
        report.section("timings")
        for t in verdict.timings:
            report.line(f"  {t.stage} {t.seconds:.4f}s")


def _emit_oracle(report: Report, oracle: OracleReport) -> None:
    report.section("oracle")
    report.pair("oracle.universe", oracle.universe)
    report.pair("oracle.bounded_found", str(oracle.bounded_found).lower())
    report.pair("oracle.checked", oracle.checked)
    report.pair("oracle.agrees", str(oracle.agrees).lower())


def cmd_check_sat(options: CheckSatOptions, out: TextIO) -> int:
    problem = load_problem(options.path)
    if problem.formula is None:
        raise SlidsetError(f"{options.path} has no formula block")
    report = Report(options.output_format == "machine", out)
    checker = SatChecker(problem.defs)
    verdict = checker.run(problem.formula)
    if options.emit_tc:
        _emit_tc(report, checker)
    if options.emit_abs and checker.abstraction is not None:
        report.section("abstraction")
        report.block("abs", describe(checker.abstraction))
    if options.emit_automata and checker.solver is not None:
        for i, automaton in enumerate(checker.solver.automata):
            report.section(f"automaton {i}")
            report.block(f"automaton.{i}", dump(automaton))
    _emit_verdict(report, verdict)
    if options.oracle is not None:
        _emit_oracle(report, sat_oracle(problem.formula, problem.defs, verdict, options.oracle, options.oracle_cells))
    if report.machine:
        report.line(f"VERDICT={verdict.status}")
    return EXIT_SAT if verdict.status == "sat" else EXIT_UNSAT


# === tc ===

def _close_block(block: RelationBlock) -> tuple[list[DbsRelation], TcResult | None]:
    relations = block.relations()
    if len(relations) == 1:
        return relations, tc_relation(relations[0])
    saturated = []
    for r in relations:
        s = saturate(r)
        if isinstance(s, Unsat):
            return relations, None
        saturated.append(s)
    return relations, tc_multi(saturated)


def _emit_closure(report: Report, key: str, relations: list[DbsRelation], tc: TcResult | None) -> None:
    for i, r in enumerate(relations):
        s = saturate(r)
        text = "unsatisfiable relation" if isinstance(s, Unsat) else show(s.relation.formula())
        report.pair(f"{key}.saturated.{i}", text)
    if tc is None or tc.trace.case == "Unsat":
        report.pair(f"{key}.closure", "unsatisfiable relation")
        if tc is not None:
            report.pair(f"{key}.formula", show(tc.formula))
        return
    trace = tc.trace
    report.pair(f"{key}.case", f"{trace.case} {trace.subcase}".strip())
    if trace.auxiliaries:
        report.pair(f"{key}.auxiliaries", ",".join(trace.auxiliaries))
    for note in trace.notes:
        report.pair(f"{key}.note", note)
    if report.machine:
        report.pair(f"{key}.formula", show(tc.formula))
    else:
        report.line(show_lines(tc.formula, 1))


def _emit_tc_oracle(report: Report, key: str, oracle: TcOracleReport) -> None:
    report.pair(f"{key}.oracle.universe", oracle.universe)
    report.pair(f"{key}.oracle.pairs", oracle.pairs)
    report.pair(f"{key}.oracle.agrees", str(oracle.agrees).lower())
    for d in oracle.disagreements[:10]:
        report.pair(f"{key}.oracle.disagreement", d)


def cmd_tc(options: CheckSatOptions, out: TextIO) -> int:
    problem: Problem = load_problem(options.path)
    report = Report(options.output_format == "machine", out)
    targets: list[tuple[str, list[DbsRelation], TcResult | None]] = []
    for i, block in enumerate(problem.relations):
        relations, tc = _close_block(block)
        targets.append((f"relation{i}", relations, tc))
    for name, d in sorted(problem.defs.items()):
        closure = predicate_closure(d)
        targets.append((name, list(closure.constraint.relations), closure.tc))
    if not targets:
        raise SlidsetError(f"{options.path} has no relation or predicate")

    agree = True
    for key, relations, tc in targets:
        report.section(key)
        _emit_closure(report, key, relations, tc)
        if options.oracle is not None and tc is not None and relations:
            oracle = tc_oracle(tc, relations, options.oracle)
            _emit_tc_oracle(report, key, oracle)
            agree = agree and oracle.agrees
    if report.machine:
        report.line(f"VERDICT={'ok' if agree else 'disagree'}")
    return EXIT_SAT if agree else EXIT_UNSAT


# === Entry point ===

def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    level = (args.log_level or get_log_level()).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        options = _options(args)
        budgets = options.budgets
        set_overrides(
            max_states=budgets.max_states,
            solver_timeout_ms=budgets.solver_timeout_ms,
            oracle_universe=budgets.oracle_universe,
        )
        if args.command == "check-sat":
            return cmd_check_sat(options, out)
        return cmd_tc(options, out)
    except ValidationError as e:
        print(f"error: invalid options: {e}", file=sys.stderr)
    except StageError as e:
        print(f"error: [{e.stage}] {e.cause}", file=sys.stderr)
    except SlidsetError as e:
        print(f"error: {e}", file=sys.stderr)
    finally:
        clear_overrides()
    if args.format == "machine":
        print("VERDICT=error", file=out)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
