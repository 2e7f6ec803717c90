"""Tokenizer for feature-definition programs (.fdl)."""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import DSLParseError

AGGREGATES = ("count", "sum", "mean", "min", "max", "std", "nunique", "first", "last")
TIME_FUNCTIONS = ("hour", "dayofweek")
KEYWORDS = frozenset(
    AGGREGATES
    + TIME_FUNCTIONS
    + ("feature", "where", "window", "all", "hours", "days", "and", "or", "not", "in", "is", "null")
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<op><=|>=|!=|==|[-+*/()=<>\[\],])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, number, string, op, eof
    text: str
    line: int
    column: int

    @property
    def value(self):
        if self.kind == "number":
            if re.fullmatch(r"\d+", self.text):
                return int(self.text)
            return float(self.text)
        if self.kind == "string":
            return _unescape(self.text[1:-1])
        return self.text


def _unescape(body: str) -> str:
    out, i = [], 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            out.append({"n": "\n", "t": "\t"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise DSLParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            if lexeme in KEYWORDS:
                tokens.append(Token("keyword", lexeme, line, col))
            elif lexeme.lower() != lexeme:
                raise DSLParseError(f"identifiers are lowercase: {lexeme!r}", line, col)
            else:
                tokens.append(Token("ident", lexeme, line, col))
        elif kind in ("number", "string", "op"):
            if lexeme == "==":
                lexeme = "="
            tokens.append(Token(kind, lexeme, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens
