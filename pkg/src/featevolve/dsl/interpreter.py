"""Per-entity execution of feature programs over an event log."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..dataset import Dataset
from ..errors import ExecutionError, ExecutionTimeoutError
from ..table import FeatureTable
from .ast import (
    AggSpec, And, BinOp, Col, Compare, Derived, Func, InList, IsNull, Neg, Not,
    Num, Or, Program, Ref, Str,
)
from .typecheck import column_type, typecheck

_CMP = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _arith(op, a, b):
    if a is None or b is None:
        return None
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0:
        return None
    return a / b


def _literal_value(v):
    if isinstance(v, Neg):
        return -_literal_value(v.operand)
    return v.value


def compile_row_expr(e, columns: dict):
    """Turn an expression into ``fn(position) -> value`` (None = null)."""
    if isinstance(e, Col):
        col = columns[e.name]
        return col.__getitem__
    if isinstance(e, (Num, Str)):
        v = e.value
        return lambda p: v
    if isinstance(e, Neg):
        f = compile_row_expr(e.operand, columns)

        def neg(p):
            v = f(p)
            return None if v is None else -v
        return neg
    if isinstance(e, BinOp):
        lf, rf, op = compile_row_expr(e.left, columns), compile_row_expr(e.right, columns), e.op
        return lambda p: _arith(op, lf(p), rf(p))
    if isinstance(e, Func):
        f = compile_row_expr(e.arg, columns)
        if e.name == "hour":
            return lambda p: None if f(p) is None else (f(p) // 3600) % 24
        # 1970-01-01 was a Thursday; Monday = 0
        return lambda p: None if f(p) is None else ((f(p) // 86400) + 3) % 7
    if isinstance(e, Compare):
        lf, rf, cmp = compile_row_expr(e.left, columns), compile_row_expr(e.right, columns), _CMP[e.op]

        def compare(p):
            a, b = lf(p), rf(p)
            return a is not None and b is not None and cmp(a, b)
        return compare
    if isinstance(e, InList):
        f = compile_row_expr(e.operand, columns)
        values = [_literal_value(v) for v in e.values]
        return lambda p: (v := f(p)) is not None and v in values
    if isinstance(e, IsNull):
        f = compile_row_expr(e.operand, columns)
        if e.negated:
            return lambda p: f(p) is not None
        return lambda p: f(p) is None
    if isinstance(e, Not):
        f = compile_row_expr(e.operand, columns)
        return lambda p: not f(p)
    if isinstance(e, And):
        lf, rf = compile_row_expr(e.left, columns), compile_row_expr(e.right, columns)
        return lambda p: lf(p) and rf(p)
    if isinstance(e, Or):
        lf, rf = compile_row_expr(e.left, columns), compile_row_expr(e.right, columns)
        return lambda p: lf(p) or rf(p)
    raise TypeError(f"cannot compile {e!r}")


def aggregate(agg: str, values: list) -> float:
    """Reduce non-null values; empty input yields 0.0."""
    n = len(values)
    if agg == "count":
        return float(n)
    if n == 0:
        return 0.0
    if agg == "sum":
        return math.fsum(values)
    if agg == "mean":
        return math.fsum(values) / n
    if agg == "min":
        return float(min(values))
    if agg == "max":
        return float(max(values))
    if agg == "std":
        if n == 1:
            return 0.0
        m = math.fsum(values) / n
        return math.sqrt(math.fsum((v - m) ** 2 for v in values) / n)
    if agg == "nunique":
        return float(len(set(values)))
    if agg == "first":
        return values[0]
    if agg == "last":
        return values[-1]
    raise ValueError(f"unknown aggregate {agg!r}")


def _eval_derived(e, env: dict) -> float:
    if isinstance(e, Ref):
        return env[e.name]
    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Neg):
        return -_eval_derived(e.operand, env)
    a, b = _eval_derived(e.left, env), _eval_derived(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return a / b if b != 0 else 0.0


class _CompiledAgg:
    def __init__(self, spec: AggSpec, dataset: Dataset):
        cols = dataset.events.columns
        self.agg = spec.agg
        self.arg = compile_row_expr(spec.arg, cols) if spec.arg is not None else None
        self.filter = compile_row_expr(spec.filter, cols) if spec.filter is not None else None
        self.window_seconds = spec.window.seconds if spec.window is not None else None
        self.freq = None
        if isinstance(spec.arg, Col) and column_type(dataset.schema, spec.arg.name) == "str":
            # text-valued first/last are reported as the value's global frequency
            self.freq = dataset.events.value_frequencies(spec.arg.name)

    def __call__(self, positions, timestamps, anchor) -> float:
        if self.window_seconds is not None:
            cut = anchor - self.window_seconds
            positions = [p for p in positions if timestamps[p] > cut]
        if self.filter is not None:
            flt = self.filter
            positions = [p for p in positions if flt(p)]
        if self.arg is None:
            values = positions
        else:
            arg = self.arg
            values = [v for v in map(arg, positions) if v is not None]
        out = aggregate(self.agg, values)
        if self.freq is not None and self.agg in ("first", "last"):
            out = self.freq.get(out, 0.0) if values else 0.0
        return out


def execute(program: Program, dataset: Dataset, ids=None, *, workers: int = 1,
            anchor: str = "global", time_budget: float | None = None,
            check_types: bool = True) -> FeatureTable:
    """Compute every definition for each requested entity.

    Windows keep events with ``t > t_anchor - length``; the anchor is the
    latest timestamp in the whole log (``anchor="global"``) or in the
    entity's own events (``anchor="entity"``).
    """
    if check_types:
        typecheck(program, dataset.schema)
    ids = sorted(str(e) for e in (dataset.labeled_ids if ids is None else ids))
    log = dataset.events
    timestamps = log.timestamps
    compiled = [
        (d.name, _CompiledAgg(d.body, dataset) if isinstance(d.body, AggSpec) else d.body)
        for d in program.defs
    ]
    deadline = None if time_budget is None else time.monotonic() + time_budget

    def run_chunk(chunk):
        rows = np.zeros((len(chunk), len(compiled)))
        for i, eid in enumerate(chunk):
            if deadline is not None and time.monotonic() > deadline:
                raise ExecutionTimeoutError(f"execution exceeded {time_budget} s budget")
            positions = log.entity_rows.get(eid, [])
            if anchor == "entity":
                t_anchor = timestamps[positions[-1]] if positions else 0
            else:
                t_anchor = log.t_max
            env = {}
            for j, (name, body) in enumerate(compiled):
                try:
                    if isinstance(body, Derived):
                        v = _eval_derived(body.expr, env)
                    else:
                        v = body(positions, timestamps, t_anchor)
                    v = float(v)
                except OverflowError:
                    raise ExecutionError(name, "numeric overflow") from None
                if not math.isfinite(v):
                    raise ExecutionError(name, f"non-finite value for entity {eid!r}")
                env[name] = v
                rows[i, j] = v
        return rows

    if workers <= 1 or len(ids) < 2:
        values = run_chunk(ids)
    else:
        k = min(workers, len(ids))
        bounds = np.linspace(0, len(ids), k + 1).astype(int)
        chunks = [ids[bounds[i]:bounds[i + 1]] for i in range(k)]
        with ThreadPoolExecutor(max_workers=k) as pool:
            parts = list(pool.map(run_chunk, chunks))
        values = np.vstack(parts) if parts else np.zeros((0, len(compiled)))
    return FeatureTable(ids, program.names, values.reshape(len(ids), len(compiled)))
