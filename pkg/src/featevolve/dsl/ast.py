"""AST node types. All nodes are frozen so programs compare structurally."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Ref:
    """Reference to an earlier feature inside a derived definition."""

    name: str


@dataclass(frozen=True)
class Num:
    value: Union[int, float]


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Func:
    name: str  # hour | dayofweek
    arg: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str  # = != < <= > >=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class InList:
    operand: "Expr"
    values: tuple


@dataclass(frozen=True)
class IsNull:
    operand: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Col, Ref, Num, Str, Neg, BinOp, Func, Compare, InList, IsNull, And, Or, Not]

UNIT_SECONDS = {"hours": 3600, "days": 86400}


@dataclass(frozen=True)
class Window:
    n: int
    unit: str  # hours | days

    @property
    def seconds(self) -> int:
        return self.n * UNIT_SECONDS[self.unit]


@dataclass(frozen=True)
class AggSpec:
    agg: str
    arg: Optional[Expr] = None
    filter: Optional[Expr] = None
    window: Optional[Window] = None  # None means "all"


@dataclass(frozen=True)
class Derived:
    expr: Expr


@dataclass(frozen=True)
class FeatureDef:
    name: str
    body: Union[AggSpec, Derived]


@dataclass(frozen=True)
class Program:
    defs: tuple

    @property
    def names(self) -> list:
        return [d.name for d in self.defs]

    def __len__(self):
        return len(self.defs)


def refs_in(expr) -> set:
    """Feature names referenced by a derived expression."""
    if isinstance(expr, Ref):
        return {expr.name}
    if isinstance(expr, Neg):
        return refs_in(expr.operand)
    if isinstance(expr, BinOp):
        return refs_in(expr.left) | refs_in(expr.right)
    return set()


def rename_refs(expr, mapping: dict):
    if isinstance(expr, Ref):
        return Ref(mapping.get(expr.name, expr.name))
    if isinstance(expr, Neg):
        return Neg(rename_refs(expr.operand, mapping))
    if isinstance(expr, BinOp):
        return BinOp(expr.op, rename_refs(expr.left, mapping), rename_refs(expr.right, mapping))
    return expr
