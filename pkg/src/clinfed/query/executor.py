"""Single-node query execution over a read snapshot of a NodeStore."""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date
from decimal import Decimal
from typing import Optional, Union

from ..core import (
    Annotation,
    ExternalResource,
    Measurement,
    MedicalConceptInstance,
    MedicalEvent,
    ObservationByClassification,
    Unresolvable,
)
from ..errors import StaleMetadata
from ..store import NodeStore
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
    atoms_of,
)
from .planner import QueryPlan

DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class ResultRow:
    patient: str
    event_id: str
    event_type: str
    time_start: Optional[str]  # ISO date of the resolved interval start
    variables: tuple[tuple[str, str], ...]
    node_id: Optional[str] = None

    def dedup_key(self) -> tuple[str, str]:
        return (self.patient, self.event_id)

    def as_dict(self) -> dict:
        return {
            "patient": self.patient,
            "event_id": self.event_id,
            "event_type": self.event_type,
            "time_start": self.time_start,
            "variables": [list(v) for v in self.variables],
            "node_id": self.node_id,
        }


def execute(plan: Union[QueryPlan, Query], store: NodeStore) -> list[ResultRow]:
    """Run a plan (or a raw query) against one store; rows come back in
    deterministic identifier order."""
    if isinstance(plan, Query):
        target, predicate = plan.target, plan.predicate
        conjuncts = [predicate]
    else:
        target, predicate = plan.target, plan.predicate
        conjuncts = [node for node, _ in plan.conjuncts]
    _check_metadata(predicate, store)

    matched: list[MedicalEvent] = []
    for event_id in sorted(store.events):
        event = store.events[event_id]
        if all(_eval(c, event, store) for c in conjuncts):
            matched.append(event)
    return _project(matched, target, store)


def naive_execute(query: Query, store: NodeStore) -> list[ResultRow]:
    """Reference evaluation: a plain tree walk of the unoptimized AST."""
    _check_metadata(query.predicate, store)
    matched = [
        store.events[eid]
        for eid in sorted(store.events)
        if _eval(query.predicate, store.events[eid], store)
    ]
    return _project(matched, query.target, store)


def _check_metadata(predicate, store: NodeStore) -> None:
    for atom in atoms_of(predicate):
        if isinstance(atom, (VariableCmp, ClassificationIs)):
            if store.registry.cvt(atom.cvt_id) is None:
                raise StaleMetadata(f"CVT {atom.cvt_id!r} unknown to this store")
        elif isinstance(atom, EventTypeIs):
            if store.registry.met(atom.met_id) is None:
                raise StaleMetadata(f"MET {atom.met_id!r} unknown to this store")


def _project(events: list[MedicalEvent], target: Target, store: NodeStore) -> list[ResultRow]:
    rows = []
    for event in events:
        patient = store.patient_of_event(event)
        pseudonym = patient.pseudonym if patient else ""
        resolved = store.resolve_event_time(event)
        start = (
            resolved.start.isoformat()
            if not isinstance(resolved, Unresolvable) and resolved.start
            else None
        )
        variables = tuple(
            (cv.cvt_id, _value_str(cv.payload)) for cv in event.variables
        )
        rows.append(
            ResultRow(pseudonym, event.event_id, event.event_type, start, variables)
        )
    if target is Target.EVENTS:
        return sorted(rows, key=lambda r: (r.patient, r.event_id))
    if target is Target.PATIENTS:
        by_patient: dict[str, ResultRow] = {}
        for r in rows:
            by_patient.setdefault(
                r.patient, ResultRow(r.patient, "", "", None, ())
            )
        return [by_patient[p] for p in sorted(by_patient)]
    # variables: one row per variable of each matching event
    out = []
    for r in rows:
        for var in r.variables:
            out.append(replace(r, variables=(var,)))
    return sorted(out, key=lambda r: (r.patient, r.event_id, r.variables))


def _value_str(payload) -> str:
    if isinstance(payload, Measurement):
        return f"{payload.value} {payload.unit}"
    if isinstance(payload, ObservationByClassification):
        return payload.item
    if isinstance(payload, Annotation):
        return payload.text
    if isinstance(payload, ExternalResource):
        return payload.uri
    if isinstance(payload, MedicalConceptInstance):
        return payload.concept_uri
    return payload.category.value


# -- predicate evaluation -----------------------------------------------------------

def _eval(node, event: MedicalEvent, store: NodeStore) -> bool:
    if isinstance(node, TrueAtom):
        return True
    if isinstance(node, FalseAtom):
        return False
    if isinstance(node, And):
        return all(_eval(c, event, store) for c in node.children)
    if isinstance(node, Or):
        return any(_eval(c, event, store) for c in node.children)
    if isinstance(node, Not):
        return not _eval(node.child, event, store)
    if isinstance(node, ConceptIs):
        return _has_concept(event, {node.uri})
    if isinstance(node, ConceptIsAnyOf):
        return _has_concept(event, node.uris)
    if isinstance(node, EventTypeIs):
        return event.event_type == node.met_id
    if isinstance(node, LevelIs):
        met = store.registry.met(event.event_type)
        return met is not None and met.vertical_level is node.level
    if isinstance(node, ClassificationIs):
        return any(
            cv.cvt_id == node.cvt_id
            and isinstance(cv.payload, ObservationByClassification)
            and cv.payload.item == node.item
            for cv in event.variables
        )
    if isinstance(node, VariableCmp):
        return any(
            cv.cvt_id == node.cvt_id and _cmp(cv.payload, node.op, node.literal)
            for cv in event.variables
        )
    if isinstance(node, AgeAtEventIn):
        return _age_in(event, node, store)
    if isinstance(node, TimeWindow):
        resolved = store.resolve_event_time(event)
        if isinstance(resolved, Unresolvable):
            return False
        return resolved.overlaps(node.start, node.end)
    raise TypeError(f"cannot evaluate {node!r}")


def _has_concept(event: MedicalEvent, uris) -> bool:
    return any(
        isinstance(cv.payload, MedicalConceptInstance)
        and cv.payload.concept_uri in uris
        for cv in event.variables
    )


def _cmp(payload, op: str, literal) -> bool:
    if isinstance(payload, Measurement):
        if not isinstance(literal, Decimal):
            return False
        value = payload.value
    else:
        if not isinstance(literal, str):
            return False
        if isinstance(payload, ObservationByClassification):
            value = payload.item
        elif isinstance(payload, Annotation):
            value = payload.text
        elif isinstance(payload, ExternalResource):
            value = payload.uri
        elif isinstance(payload, MedicalConceptInstance):
            value = payload.concept_uri
        else:
            return False
    if op == "=":
        return value == literal
    if op == "!=":
        return value != literal
    if op == "<":
        return value < literal
    if op == "<=":
        return value <= literal
    if op == ">":
        return value > literal
    return value >= literal


def _age_in(event: MedicalEvent, node: AgeAtEventIn, store: NodeStore) -> bool:
    patient = store.patient_of_event(event)
    if patient is None or patient.birth_date is None:
        return False
    resolved = store.resolve_event_time(event)
    if isinstance(resolved, Unresolvable) or resolved.start is None:
        return False
    age_years = (resolved.start - patient.birth_date).days / DAYS_PER_YEAR
    return float(node.min_years) <= age_years <= float(node.max_years)
