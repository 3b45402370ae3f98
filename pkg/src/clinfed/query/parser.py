"""Recursive-descent parser for the query surface grammar.

    query  := "FIND" target ["WHERE" expr]
    target := "patients" | "events" | "variables"
    expr   := term {"OR" term}
    term   := factor {"AND" factor}
    factor := ["NOT"] (atom | "(" expr ")")
    atom   := "concept" "=" string
            | "concept" "IN" "[" string {"," string} "]"
            | "event_type" "=" string
            | "level" "=" level
            | "age" "IN" "[" number "," number "]"
            | "time" "IN" "[" date "," date "]"
            | "TRUE" | "FALSE"
            | ident cmp literal

Strings are double-quoted, dates are ISO-8601, comparison operators are
= != < <= > >=.
"""

from __future__ import annotations

import re
from datetime import date
from decimal import Decimal
from typing import NamedTuple, Optional

from ..core import VerticalLevel
from ..errors import QuerySyntaxError
from .ast import (
    AgeAtEventIn,
    And,
    ConceptIs,
    ConceptIsAnyOf,
    EventTypeIs,
    FalseAtom,
    LevelIs,
    Not,
    Or,
    Query,
    Target,
    TimeWindow,
    TrueAtom,
    VariableCmp,
)


class Token(NamedTuple):
    kind: str  # IDENT STRING NUMBER DATE OP PUNCT EOF
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+)
  | (?P<STRING>"[^"]*")
  | (?P<DATE>\d{4}-\d{2}-\d{2})
  | (?P<NUMBER>-?\d+(\.\d+)?)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_:]*)
  | (?P<OP>!=|<=|>=|=|<|>)
  | (?P<PUNCT>[()\[\],])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(line, col, f"a token (got {text[pos]!r})")
        kind = m.lastgroup
        lexeme = m.group()
        if kind != "WS":
            tokens.append(Token(kind, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def error(self, expected: str):
        raise QuerySyntaxError(self.cur.line, self.cur.column, expected)

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        tok = self.cur
        if tok.kind == kind and (text is None or tok.text == text):
            self.pos += 1
            return tok
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        tok = self.accept(kind, text)
        if tok is None:
            self.error(text or kind.lower())
        return tok

    # -- grammar ---------------------------------------------------------------

    def query(self) -> Query:
        self.expect("IDENT", "FIND")
        tok = self.expect("IDENT")
        try:
            target = Target(tok.text)
        except ValueError:
            raise QuerySyntaxError(
                tok.line, tok.column, "target (patients|events|variables)"
            ) from None
        predicate = TrueAtom()
        if self.accept("IDENT", "WHERE"):
            predicate = self.expr()
        self.expect("EOF")
        return Query(target, predicate)

    def expr(self):
        terms = [self.term()]
        while self.accept("IDENT", "OR"):
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def term(self):
        factors = [self.factor()]
        while self.accept("IDENT", "AND"):
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else And(tuple(factors))

    def factor(self):
        if self.accept("IDENT", "NOT"):
            return Not(self.factor_body())
        return self.factor_body()

    def factor_body(self):
        if self.accept("PUNCT", "("):
            inner = self.expr()
            self.expect("PUNCT", ")")
            return inner
        return self.atom()

    RESERVED = frozenset({"FIND", "WHERE", "AND", "OR", "NOT", "IN"})

    def atom(self):
        tok = self.cur
        if tok.kind != "IDENT" or tok.text in self.RESERVED:
            self.error("an atom")
        if tok.text == "TRUE":
            self.pos += 1
            return TrueAtom()
        if tok.text == "FALSE":
            self.pos += 1
            return FalseAtom()
        if tok.text == "concept":
            self.pos += 1
            if self.accept("OP", "="):
                return ConceptIs(self.string())
            self.expect("IDENT", "IN")
            self.expect("PUNCT", "[")
            uris = [self.string()]
            while self.accept("PUNCT", ","):
                uris.append(self.string())
            self.expect("PUNCT", "]")
            return ConceptIsAnyOf(frozenset(uris))
        if tok.text == "event_type":
            self.pos += 1
            self.expect("OP", "=")
            return EventTypeIs(self.string())
        if tok.text == "level":
            self.pos += 1
            self.expect("OP", "=")
            name = self.expect("IDENT")
            try:
                return LevelIs(VerticalLevel.from_label(name.text))
            except ValueError:
                raise QuerySyntaxError(
                    name.line, name.column, "a vertical level name"
                ) from None
        if tok.text == "age":
            self.pos += 1
            self.expect("IDENT", "IN")
            self.expect("PUNCT", "[")
            lo = self.number()
            self.expect("PUNCT", ",")
            hi = self.number()
            self.expect("PUNCT", "]")
            return AgeAtEventIn(lo, hi)
        if tok.text == "time":
            self.pos += 1
            self.expect("IDENT", "IN")
            self.expect("PUNCT", "[")
            lo = self.date_lit()
            self.expect("PUNCT", ",")
            hi = self.date_lit()
            self.expect("PUNCT", "]")
            return TimeWindow(lo, hi)
        # ident cmp literal
        self.pos += 1
        op = self.cur
        if op.kind != "OP":
            self.error("a comparison operator")
        self.pos += 1
        lit = self.cur
        if lit.kind == "STRING":
            self.pos += 1
            return VariableCmp(tok.text, op.text, lit.text[1:-1])
        if lit.kind in ("NUMBER", "DATE"):
            self.pos += 1
            return VariableCmp(tok.text, op.text, Decimal(lit.text)
                               if lit.kind == "NUMBER" else lit.text)
        self.error("a literal (number or string)")

    def string(self) -> str:
        return self.expect("STRING").text[1:-1]

    def number(self) -> Decimal:
        return Decimal(self.expect("NUMBER").text)

    def date_lit(self) -> date:
        return date.fromisoformat(self.expect("DATE").text)


def parse(text: str) -> Query:
    """Parse query text; syntax errors report line:column and the expected
    token class."""
    return _Parser(text).query()
