"""Pretty-printer emitting the problem-file syntax understood by ``slidset.cli.parser``."""
from __future__ import annotations

from slidset.core.formula import (
    And, Card, CountAtom, DivAtom, EmptySet, Exists, FalseF, Forall, Iff, Implies,
    IntCmp, IntConst, IntVar, Max, MDiff, Member, Min, MScale, MSum, Not, Or,
    SetCmp, SetDiff, SetInter, SetUnion, SetVar, Singleton, Spacing, TrueF,
)


def show(node) -> str:
    if isinstance(node, IntConst):
        return str(node.value)
    if isinstance(node, (IntVar, SetVar)):
        return node.name
    if isinstance(node, Min):
        return f"min({show(node.arg)})"
    if isinstance(node, Max):
        return f"max({show(node.arg)})"
    if isinstance(node, EmptySet):
        return "{}"
    if isinstance(node, Singleton):
        return "{" + show(node.elem) + "}"
    if isinstance(node, SetUnion):
        return f"({show(node.left)} u {show(node.right)})"
    if isinstance(node, SetInter):
        return f"({show(node.left)} n {show(node.right)})"
    if isinstance(node, SetDiff):
        return f"({show(node.left)} \\ {show(node.right)})"
    if isinstance(node, MSum):
        return f"({show(node.left)} + {show(node.right)})"
    if isinstance(node, MDiff):
        return f"({show(node.left)} - {show(node.right)})"
    if isinstance(node, MScale):
        return f"{node.coeff}*{show(node.arg)}"
    if isinstance(node, Card):
        return f"card({show(node.arg)})"
    if isinstance(node, TrueF):
        return "true"
    if isinstance(node, FalseF):
        return "false"
    if isinstance(node, SetCmp):
        return f"{show(node.left)} {node.op} {show(node.right)}"
    if isinstance(node, IntCmp):
        text = f"{show(node.left)} {node.op} {show(node.right)}"
        if node.offset > 0:
            text += f" + {node.offset}"
        elif node.offset < 0:
            text += f" - {-node.offset}"
        return text
    if isinstance(node, CountAtom):
        return f"{show(node.term)} {node.op} 0"
    if isinstance(node, DivAtom):
        return f"{show(node.term)} mod {node.modulus} = {node.residue}"
    if isinstance(node, Member):
        return f"{show(node.elem)} in {show(node.set)}"
    if isinstance(node, Spacing):
        return show(node.expand())
    if isinstance(node, And):
        return "(" + " /\\ ".join(show(a) for a in node.args) + ")"
    if isinstance(node, Or):
        return "(" + " \\/ ".join(show(a) for a in node.args) + ")"
    if isinstance(node, Not):
        return f"~({show(node.arg)})" if not isinstance(node.arg, (And, Or)) else f"~{show(node.arg)}"
    if isinstance(node, Implies):
        return f"({show(node.left)} -> {show(node.right)})"
    if isinstance(node, Iff):
        return f"({show(node.left)} <-> {show(node.right)})"
    if isinstance(node, (Forall, Exists)):
        binder = "forall" if isinstance(node, Forall) else "exists"
        sort = "int" if isinstance(node.var, IntVar) else "set"
        return f"({binder} {node.var.name}: {sort}. {show(node.body)})"
    raise TypeError(f"Cannot print {node!r}")


def show_lines(node, indent: int = 0) -> str:
    """Multi-line rendering of top-level conjunctions/disjunctions, for reports."""
    pad = "  " * indent
    if isinstance(node, (And, Or)) and len(node.args) > 1:
        joiner = "/\\" if isinstance(node, And) else "\\/"
        parts = [show_lines(a, indent + 1) for a in node.args]
        return f"{pad}(\n" + f"\n{pad}  {joiner}\n".join(parts) + f"\n{pad})"
    return pad + show(node)
