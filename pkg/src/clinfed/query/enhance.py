"""Ontology-driven semantic enhancement: widen each concept predicate to
the queried concept plus everything related below it (parts, subtypes,
regional parts), so a query for a whole also finds its parts."""

from __future__ import annotations

from typing import Iterable

from ..errors import UnknownConcept
from ..ontology import Ontology
from .ast import And, ConceptIs, ConceptIsAnyOf, Not, Or, Query

DEFAULT_EXPANSION_PREDICATES = frozenset({"part_of", "is_a", "regional_part_of"})


def enhance(
    query: Query,
    ontology: Ontology,
    predicates: Iterable[str] = DEFAULT_EXPANSION_PREDICATES,
) -> Query:
    """Replace every concept atom with the closure of its concept set.

    Idempotent: the closure of an already-closed set is itself.
    """
    predicates = frozenset(predicates)
    return Query(query.target, _walk(query.predicate, ontology, predicates))


def _walk(node, ontology, predicates):
    if isinstance(node, And):
        return And(tuple(_walk(c, ontology, predicates) for c in node.children))
    if isinstance(node, Or):
        return Or(tuple(_walk(c, ontology, predicates) for c in node.children))
    if isinstance(node, Not):
        return Not(_walk(node.child, ontology, predicates))
    if isinstance(node, ConceptIs):
        return ConceptIsAnyOf(_closure({node.uri}, ontology, predicates))
    if isinstance(node, ConceptIsAnyOf):
        return ConceptIsAnyOf(_closure(node.uris, ontology, predicates))
    return node


def _closure(uris, ontology, predicates) -> frozenset[str]:
    out = set()
    for uri in uris:
        if uri not in ontology:
            raise UnknownConcept(uri)
        out.add(uri)
        out.update(ontology.descendants(uri, predicates))
    return frozenset(out)
