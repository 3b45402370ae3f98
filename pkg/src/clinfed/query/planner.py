"""Semantics-preserving query optimization.

Rewrites: negations pushed inward over And/Or (De Morgan, double negation
elimination), duplicate conjuncts/disjuncts removed, and top-level conjuncts
ordered by ascending estimated selectivity so the most selective filter runs
first. Selectivity estimates use only the store's count/distinct statistics;
range atoms are pinned at 0.5 and anything unknown at 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..store import StoreStats
from .ast import (
    AgeAtEventIn,
    And,
    ClassificationIs,
    ConceptIs,
    ConceptIsAnyOf,
    FalseAtom,
    Not,
    Or,
    Query,
    Target,
    TimeWindow,
    TrueAtom,
    VariableCmp,
    EventTypeIs,
)


@dataclass(frozen=True)
class QueryPlan:
    target: Target
    conjuncts: tuple[tuple[object, float], ...]  # (node, estimated selectivity)
    predicate: object  # the full rewritten predicate tree

    def explain(self) -> list[dict]:
        from .ast import _pp_expr

        return [
            {"conjunct": _pp_expr(node), "selectivity": sel}
            for node, sel in self.conjuncts
        ]


def optimize(query: Query, stats: Optional[StoreStats] = None) -> QueryPlan:
    pred = _dedup(_push_not(query.predicate, negate=False))
    if isinstance(pred, And):
        scored = [(c, selectivity(c, stats)) for c in pred.children]
        scored.sort(key=lambda t: t[1])  # stable: ties keep source order
        conjuncts = tuple(scored)
        ordered = tuple(c for c, _ in scored)
        pred = And(ordered) if len(ordered) > 1 else ordered[0]
    else:
        conjuncts = ((pred, selectivity(pred, stats)),)
    return QueryPlan(query.target, conjuncts, pred)


def _push_not(node, negate: bool):
    if isinstance(node, Not):
        return _push_not(node.child, not negate)
    if isinstance(node, And):
        children = tuple(_push_not(c, negate) for c in node.children)
        return Or(children) if negate else And(children)
    if isinstance(node, Or):
        children = tuple(_push_not(c, negate) for c in node.children)
        return And(children) if negate else Or(children)
    if negate:
        if isinstance(node, TrueAtom):
            return FalseAtom()
        if isinstance(node, FalseAtom):
            return TrueAtom()
        return Not(node)
    return node


def _dedup(node):
    if isinstance(node, (And, Or)):
        seen = []
        for c in node.children:
            c = _dedup(c)
            if c not in seen:
                seen.append(c)
        if len(seen) == 1:
            return seen[0]
        return And(tuple(seen)) if isinstance(node, And) else Or(tuple(seen))
    if isinstance(node, Not):
        return Not(_dedup(node.child))
    return node


def selectivity(node, stats: Optional[StoreStats]) -> float:
    """Estimated matching fraction in [0, 1]; 1.0 when unknown."""
    if isinstance(node, TrueAtom):
        return 1.0
    if isinstance(node, FalseAtom):
        return 0.0
    if isinstance(node, And):
        out = 1.0
        for c in node.children:
            out *= selectivity(c, stats)
        return out
    if isinstance(node, Or):
        return min(1.0, sum(selectivity(c, stats) for c in node.children))
    if isinstance(node, Not):
        return 1.0 - selectivity(node.child, stats)
    if isinstance(node, (AgeAtEventIn, TimeWindow)):
        return 0.5
    if stats is None or stats.total_events == 0:
        return 1.0
    if isinstance(node, VariableCmp) and node.op == "=":
        d = stats.distinct(node.cvt_id)
        return 1.0 / d if d else 1.0
    if isinstance(node, ClassificationIs):
        d = stats.distinct(node.cvt_id)
        return 1.0 / d if d else 1.0
    if isinstance(node, ConceptIs):
        return min(1.0, stats.concept_counts.get(node.uri, 0) / stats.total_events)
    if isinstance(node, ConceptIsAnyOf):
        hits = sum(stats.concept_counts.get(u, 0) for u in node.uris)
        return min(1.0, hits / stats.total_events)
    if isinstance(node, EventTypeIs):
        return min(1.0, stats.met_counts.get(node.met_id, 0) / stats.total_events)
    return 1.0
