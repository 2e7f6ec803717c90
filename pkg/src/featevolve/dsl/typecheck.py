"""Static checks of a parsed program against a dataset schema."""
from __future__ import annotations

from ..dataset import DataSchema
from ..errors import TypecheckError
from .ast import (
    AggSpec, And, BinOp, Col, Compare, Derived, Func, InList, IsNull, Neg, Not,
    Num, Or, Program, Ref, Str, refs_in,
)

NUMERIC_AGGS = ("sum", "mean", "min", "max", "std")

# expression types: "num", "ts" (numeric epoch seconds), "str", "bool"


def column_type(schema: DataSchema, name: str) -> str:
    if name == schema.timestamp_column or schema.dtype(name) == "timestamp":
        return "ts"
    if schema.dtype(name) in ("int", "float"):
        return "num"
    return "str"


def _numeric(t) -> bool:
    return t in ("num", "ts")


def expr_type(e, schema: DataSchema, feature: str) -> str:
    def fail(reason):
        raise TypecheckError(feature, reason)

    if isinstance(e, Col):
        if not schema.has_column(e.name):
            fail(f"unknown column {e.name!r}")
        return column_type(schema, e.name)
    if isinstance(e, Num):
        return "num"
    if isinstance(e, Str):
        return "str"
    if isinstance(e, Ref):
        fail(f"feature reference {e.name!r} is only allowed in derived definitions")
    if isinstance(e, Func):
        if expr_type(e.arg, schema, feature) != "ts":
            fail(f"{e.name}() applies only to timestamp columns")
        return "num"
    if isinstance(e, Neg):
        if not _numeric(expr_type(e.operand, schema, feature)):
            fail("unary minus needs a numeric operand")
        return "num"
    if isinstance(e, BinOp):
        lt = expr_type(e.left, schema, feature)
        rt = expr_type(e.right, schema, feature)
        if not (_numeric(lt) and _numeric(rt)):
            fail(f"operator {e.op!r} needs numeric operands (got {lt}, {rt})")
        return "num"
    if isinstance(e, Compare):
        lt = expr_type(e.left, schema, feature)
        rt = expr_type(e.right, schema, feature)
        if "bool" in (lt, rt) or _numeric(lt) != _numeric(rt):
            fail(f"cannot compare {lt} with {rt}")
        return "bool"
    if isinstance(e, InList):
        ot = expr_type(e.operand, schema, feature)
        if ot == "bool":
            fail("membership test needs a value operand")
        for v in e.values:
            vt = expr_type(v, schema, feature)
            if _numeric(vt) != _numeric(ot):
                fail(f"list literal of type {vt} does not match operand type {ot}")
        return "bool"
    if isinstance(e, IsNull):
        if expr_type(e.operand, schema, feature) == "bool":
            fail("null test needs a value operand")
        return "bool"
    if isinstance(e, Not):
        if expr_type(e.operand, schema, feature) != "bool":
            fail("'not' needs a boolean operand")
        return "bool"
    if isinstance(e, (And, Or)):
        word = "and" if isinstance(e, And) else "or"
        if expr_type(e.left, schema, feature) != "bool" or expr_type(e.right, schema, feature) != "bool":
            fail(f"'{word}' needs boolean operands")
        return "bool"
    fail(f"unsupported expression {e!r}")


def _check_derived(e, feature: str):
    if isinstance(e, (Ref, Num)):
        return
    if isinstance(e, Neg):
        return _check_derived(e.operand, feature)
    if isinstance(e, BinOp):
        _check_derived(e.left, feature)
        return _check_derived(e.right, feature)
    raise TypecheckError(feature, "derived definitions allow only arithmetic over features and numbers")


def typecheck(program: Program, schema: DataSchema) -> None:
    defined: set = set()
    for d in program.defs:
        if d.name in defined:
            raise TypecheckError(d.name, "duplicate feature name")
        body = d.body
        if isinstance(body, Derived):
            _check_derived(body.expr, d.name)
            unknown = sorted(refs_in(body.expr) - defined)
            if unknown:
                raise TypecheckError(d.name, f"references undefined or later features {unknown}")
        else:
            assert isinstance(body, AggSpec)
            if body.agg == "count":
                if body.arg is not None:
                    raise TypecheckError(d.name, "count() takes no argument")
            else:
                if body.arg is None:
                    raise TypecheckError(d.name, f"{body.agg}() requires an argument")
                t = expr_type(body.arg, schema, d.name)
                if t == "bool":
                    raise TypecheckError(d.name, f"{body.agg}() argument must be a value, not a condition")
                if body.agg in NUMERIC_AGGS and not _numeric(t):
                    raise TypecheckError(d.name, f"{body.agg}() needs a numeric argument")
                if t == "str" and not isinstance(body.arg, Col):
                    raise TypecheckError(d.name, f"{body.agg}() over text needs a plain column")
            if body.filter is not None and expr_type(body.filter, schema, d.name) != "bool":
                raise TypecheckError(d.name, "where clause must be a condition")
            if body.window is not None and body.window.n < 1:
                raise TypecheckError(d.name, "window length must be >= 1")
        defined.add(d.name)
