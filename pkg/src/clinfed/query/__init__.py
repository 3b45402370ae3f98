"""Query language: parsing, semantic enhancement, optimization, execution."""

from .ast import (
    AgeAtEventIn,
    And,
    ClassificationIs,
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
    pretty_print,
)
from .parser import parse
from .enhance import DEFAULT_EXPANSION_PREDICATES, enhance
from .planner import QueryPlan, optimize, selectivity
from .executor import ResultRow, execute, naive_execute

__all__ = [
    "AgeAtEventIn",
    "And",
    "ClassificationIs",
    "ConceptIs",
    "ConceptIsAnyOf",
    "EventTypeIs",
    "FalseAtom",
    "LevelIs",
    "Not",
    "Or",
    "Query",
    "Target",
    "TimeWindow",
    "TrueAtom",
    "VariableCmp",
    "pretty_print",
    "parse",
    "enhance",
    "DEFAULT_EXPANSION_PREDICATES",
    "QueryPlan",
    "optimize",
    "selectivity",
    "ResultRow",
    "execute",
    "naive_execute",
]
