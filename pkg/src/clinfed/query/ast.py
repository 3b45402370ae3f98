"""Query AST nodes and the pretty-printer.

The printer emits exactly the surface grammar, so parse(pretty_print(q))
round-trips for every parser-produced AST.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from decimal import Decimal
from enum import Enum
from typing import Union

from ..core import VerticalLevel


class Target(str, Enum):
    PATIENTS = "patients"
    EVENTS = "events"
    VARIABLES = "variables"


CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class TrueAtom:
    pass


@dataclass(frozen=True)
class FalseAtom:
    pass


@dataclass(frozen=True)
class VariableCmp:
    cvt_id: str
    op: str
    literal: Union[Decimal, str]

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class ConceptIs:
    uri: str


@dataclass(frozen=True)
class ConceptIsAnyOf:
    uris: frozenset[str]

    def __post_init__(self):
        if not self.uris:
            raise ValueError("concept set must be non-empty")


@dataclass(frozen=True)
class ClassificationIs:
    cvt_id: str
    item: str


@dataclass(frozen=True)
class EventTypeIs:
    met_id: str


@dataclass(frozen=True)
class LevelIs:
    level: VerticalLevel


@dataclass(frozen=True)
class AgeAtEventIn:
    min_years: Decimal
    max_years: Decimal


@dataclass(frozen=True)
class TimeWindow:
    start: date
    end: date


@dataclass(frozen=True)
class And:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("And needs at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Or needs at least two children")


@dataclass(frozen=True)
class Not:
    child: object


Node = object


@dataclass(frozen=True)
class Query:
    target: Target
    predicate: Node


# -- pretty-printing ---------------------------------------------------------------

def pretty_print(query: Query) -> str:
    if query.predicate == TrueAtom():
        return f"FIND {query.target.value}"
    return f"FIND {query.target.value} WHERE {_pp_expr(query.predicate)}"


def _pp_expr(node) -> str:
    if isinstance(node, Or):
        return " OR ".join(_pp_term(c) for c in node.children)
    return _pp_term(node)


def _pp_term(node) -> str:
    if isinstance(node, Or):
        return f"({_pp_expr(node)})"
    if isinstance(node, And):
        return " AND ".join(_pp_factor(c) for c in node.children)
    return _pp_factor(node)


def _pp_factor(node) -> str:
    if isinstance(node, Not):
        child = node.child
        if isinstance(child, (And, Or, Not)):
            return f"NOT ({_pp_expr(child)})"
        return f"NOT {_pp_atom(child)}"
    if isinstance(node, (And, Or)):
        return f"({_pp_expr(node)})"
    return _pp_atom(node)


def _pp_atom(node) -> str:
    if isinstance(node, TrueAtom):
        return "TRUE"
    if isinstance(node, FalseAtom):
        return "FALSE"
    if isinstance(node, ConceptIs):
        return f'concept = "{node.uri}"'
    if isinstance(node, ConceptIsAnyOf):
        inner = ", ".join(f'"{u}"' for u in sorted(node.uris))
        return f"concept IN [{inner}]"
    if isinstance(node, EventTypeIs):
        return f'event_type = "{node.met_id}"'
    if isinstance(node, LevelIs):
        return f"level = {node.level.label}"
    if isinstance(node, ClassificationIs):
        return f'{node.cvt_id} = "{node.item}"'
    if isinstance(node, VariableCmp):
        lit = (
            f'"{node.literal}"' if isinstance(node.literal, str) else str(node.literal)
        )
        return f"{node.cvt_id} {node.op} {lit}"
    if isinstance(node, AgeAtEventIn):
        return f"age IN [{node.min_years}, {node.max_years}]"
    if isinstance(node, TimeWindow):
        return f"time IN [{node.start.isoformat()}, {node.end.isoformat()}]"
    raise TypeError(f"not an AST atom: {node!r}")


def atoms_of(node):
    """Iterate every atom in a predicate tree."""
    if isinstance(node, (And, Or)):
        for c in node.children:
            yield from atoms_of(c)
    elif isinstance(node, Not):
        yield from atoms_of(node.child)
    else:
        yield node
