"""Canonical pretty-printer. ``parse(pretty_print(p)) == p`` for every program."""
from __future__ import annotations

from .ast import (
    AggSpec, And, BinOp, Col, Compare, Derived, FeatureDef, Func, InList, IsNull,
    Neg, Not, Num, Or, Program, Ref, Str,
)

_PRIMARY = 8


def _prec(e) -> int:
    if isinstance(e, Or):
        return 1
    if isinstance(e, And):
        return 2
    if isinstance(e, Not):
        return 3
    if isinstance(e, (Compare, InList, IsNull)):
        return 4
    if isinstance(e, BinOp):
        return 5 if e.op in "+-" else 6
    if isinstance(e, Neg):
        return 7
    return _PRIMARY


def _num(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def _str(v: str) -> str:
    body = v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{body}"'


def _wrap(e, min_prec: int) -> str:
    text = format_expr(e)
    return f"({text})" if _prec(e) < min_prec else text


def format_expr(e) -> str:
    if isinstance(e, (Col, Ref)):
        return e.name
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Str):
        return _str(e.value)
    if isinstance(e, Func):
        return f"{e.name}({format_expr(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.operand, 7)
    if isinstance(e, BinOp):
        rhs_min = 6 if e.op in "+-" else 7
        return f"{_wrap(e.left, rhs_min - 1)} {e.op} {_wrap(e.right, rhs_min)}"
    if isinstance(e, Compare):
        return f"{_wrap(e.left, 5)} {e.op} {_wrap(e.right, 5)}"
    if isinstance(e, InList):
        items = ", ".join(format_expr(v) for v in e.values)
        return f"{_wrap(e.operand, 5)} in [{items}]"
    if isinstance(e, IsNull):
        return f"{_wrap(e.operand, 5)} is {'not ' if e.negated else ''}null"
    if isinstance(e, Not):
        return "not " + _wrap(e.operand, 3)
    if isinstance(e, And):
        return f"{_wrap(e.left, 2)} and {_wrap(e.right, 3)}"
    if isinstance(e, Or):
        return f"{_wrap(e.left, 1)} or {_wrap(e.right, 2)}"
    raise TypeError(f"not an expression node: {e!r}")


def format_def(d: FeatureDef) -> str:
    body = d.body
    if isinstance(body, Derived):
        return f"feature {d.name} = {format_expr(body.expr)}\n"
    assert isinstance(body, AggSpec)
    text = f"feature {d.name} = {body.agg}({'' if body.arg is None else format_expr(body.arg)})"
    if body.filter is not None:
        text += f" where {format_expr(body.filter)}"
    if body.window is not None:
        text += f" window last {body.window.n} {body.window.unit}"
    return text + "\n"


def pretty_print(program: Program) -> str:
    return "".join(format_def(d) for d in program.defs)
