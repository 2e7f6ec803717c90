"""Feature-definition language: parse, check, print and execute programs."""
from .ast import AggSpec, Derived, FeatureDef, Program, Window
from .interpreter import execute
from .lexer import AGGREGATES, KEYWORDS
from .parser import parse, parse_expr
from .printer import format_def, pretty_print
from .typecheck import typecheck

GRAMMAR_REFERENCE = """\
Feature definition language (one definition per line, '#' starts a comment):

  feature NAME = AGG(EXPR) [where CONDITION] [window all | window last N hours|days]
  feature NAME = ARITHMETIC over earlier feature names and numbers

AGG is one of: count() (no argument), sum, mean, min, max, std (numeric
argument), nunique, first, last (any column).
EXPR: column names, numbers, "strings", + - * /, hour(ts_col), dayofweek(ts_col)
(Monday = 0). CONDITION: = != < <= > >=, x in [a, b], x is null,
x is not null, and, or, not, parentheses.

Semantics: each entity's events are ordered by time. The window keeps events
with t > t_max - N*unit where t_max is the latest timestamp in the whole log;
then the where-filter applies; null values are dropped before aggregating.
Empty input gives 0 for every aggregate. std is the population std.
first/last of a text column give that value's frequency in the log.
Row-level x/0 is null; in derived definitions x/0 is 0. Comparisons with null
are false. Names are lowercase identifiers and must be unique.
"""

__all__ = [
    "AGGREGATES", "GRAMMAR_REFERENCE", "KEYWORDS", "AggSpec", "Derived", "FeatureDef",
    "Program", "Window", "execute", "format_def", "parse", "parse_expr",
    "pretty_print", "typecheck",
]
