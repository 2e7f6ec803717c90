"""Recursive-descent parser.

Grammar::

    program  := def+
    def      := "feature" IDENT "=" (agg | derived)
    agg      := AGGNAME "(" expr? ")" ["where" expr]
                ["window" ("all" | "last" INT ("hours" | "days"))]
    derived  := arithmetic over IDENT / NUMBER with parentheses

Inside ``agg`` identifiers are columns; inside ``derived`` they name
earlier features. Boolean/value typing is left to the type checker.
"""
from __future__ import annotations

from ..errors import DSLParseError
from .ast import (
    AggSpec, And, BinOp, Col, Compare, Derived, FeatureDef, Func, InList, IsNull,
    Neg, Not, Num, Or, Program, Ref, Str, Window,
)
from .lexer import AGGREGATES, TIME_FUNCTIONS, Token, tokenize

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, expected=()):
        tok = self.tok
        raise DSLParseError(message, tok.line, tok.column, expected)

    def at(self, kind, text=None) -> bool:
        tok = self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def at_kw(self, *words) -> bool:
        return self.tok.kind == "keyword" and self.tok.text in words

    def at_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def expect_kw(self, word) -> Token:
        if not self.at_kw(word):
            self.error(f"expected {word!r}, found {self._describe()}", [word])
        return self.advance()

    def expect_op(self, op) -> Token:
        if not self.at_op(op):
            self.error(f"expected {op!r}, found {self._describe()}", [op])
        return self.advance()

    def _describe(self) -> str:
        tok = self.tok
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    # -- top level -------------------------------------------------------

    def program(self) -> Program:
        defs = []
        while not self.at("eof"):
            defs.append(self.definition())
        if not defs:
            self.error("a program needs at least one feature definition", ["feature"])
        return Program(tuple(defs))

    def definition(self) -> FeatureDef:
        self.expect_kw("feature")
        if not self.at("ident"):
            self.error(f"expected a feature name, found {self._describe()}", ["IDENT"])
        name = self.advance().text
        self.expect_op("=")
        if self.at_kw(*AGGREGATES):
            body = self.aggregate()
        else:
            body = Derived(self.additive(derived=True))
        if not (self.at_kw("feature") or self.at("eof")):
            self.error(
                f"unexpected {self._describe()} after definition of {name!r}",
                ["feature", "end of input"],
            )
        return FeatureDef(name, body)

    def aggregate(self) -> AggSpec:
        agg_tok = self.advance()
        agg = agg_tok.text
        self.expect_op("(")
        arg = None
        if not self.at_op(")"):
            arg = self.expr()
        self.expect_op(")")
        if agg == "count" and arg is not None:
            raise DSLParseError("count() takes no argument", agg_tok.line, agg_tok.column)
        if agg != "count" and arg is None:
            raise DSLParseError(f"{agg}() requires an argument", agg_tok.line, agg_tok.column, ["expression"])
        flt = None
        if self.at_kw("where"):
            self.advance()
            flt = self.expr()
        window = None
        if self.at_kw("window"):
            self.advance()
            if self.at_kw("all"):
                self.advance()
            elif self.at_kw("last"):
                self.advance()
                if not (self.at("number") and isinstance(self.tok.value, int)):
                    self.error("window length must be an integer", ["INT"])
                n = self.advance().value
                if not self.at_kw("hours", "days"):
                    self.error("expected a window unit", ["hours", "days"])
                window = Window(n, self.advance().text)
            else:
                self.error("expected a window", ["all", "last"])
        return AggSpec(agg, arg, flt, window)

    # -- expressions -----------------------------------------------------

    def expr(self):
        left = self.conjunction()
        while self.at_kw("or"):
            self.advance()
            left = Or(left, self.conjunction())
        return left

    def conjunction(self):
        left = self.negation()
        while self.at_kw("and"):
            self.advance()
            left = And(left, self.negation())
        return left

    def negation(self):
        if self.at_kw("not"):
            self.advance()
            return Not(self.negation())
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.at_op(*COMPARISONS):
            op = self.advance().text
            return Compare(op, left, self.additive())
        if self.at_kw("in"):
            self.advance()
            return InList(left, self.literal_list())
        if self.at_kw("is"):
            self.advance()
            negated = False
            if self.at_kw("not"):
                self.advance()
                negated = True
            self.expect_kw("null")
            return IsNull(left, negated)
        return left

    def literal_list(self) -> tuple:
        self.expect_op("[")
        values = []
        while True:
            values.append(self.literal())
            if self.at_op(","):
                self.advance()
                continue
            break
        self.expect_op("]")
        return tuple(values)

    def literal(self):
        if self.at("number"):
            return Num(self.advance().value)
        if self.at("string"):
            return Str(self.advance().value)
        if self.at_op("-") and self.tokens[self.pos + 1].kind == "number":
            self.advance()
            return Neg(Num(self.advance().value))
        self.error(f"expected a literal, found {self._describe()}", ["NUMBER", "STRING"])

    def additive(self, derived=False):
        left = self.term(derived)
        while self.at_op("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.term(derived))
        return left

    def term(self, derived):
        left = self.unary(derived)
        while self.at_op("*", "/"):
            op = self.advance().text
            left = BinOp(op, left, self.unary(derived))
        return left

    def unary(self, derived):
        if self.at_op("-"):
            self.advance()
            return Neg(self.unary(derived))
        return self.primary(derived)

    def primary(self, derived):
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Num(tok.value)
        if tok.kind == "ident":
            self.advance()
            return Ref(tok.text) if derived else Col(tok.text)
        if tok.kind == "string" and not derived:
            self.advance()
            return Str(tok.value)
        if tok.kind == "keyword" and tok.text in TIME_FUNCTIONS and not derived:
            self.advance()
            self.expect_op("(")
            arg = self.expr()
            self.expect_op(")")
            return Func(tok.text, arg)
        if self.at_op("("):
            self.advance()
            inner = self.additive(True) if derived else self.expr()
            self.expect_op(")")
            return inner
        if derived:
            self.error(f"expected a feature name or number, found {self._describe()}",
                       ["IDENT", "NUMBER", "("])
        self.error(f"expected an expression, found {self._describe()}",
                   ["IDENT", "NUMBER", "STRING", "(", "-", "hour", "dayofweek"])


def parse(text: str) -> Program:
    return _Parser(text).program()


def parse_expr(text: str):
    """Parse a standalone row-level expression (used in tests and tooling)."""
    p = _Parser(text)
    e = p.expr()
    if not p.at("eof"):
        p.error(f"unexpected {p._describe()}", ["end of input"])
    return e
