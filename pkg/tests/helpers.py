"""Shared test fixtures: random data generators and independent oracles.

The oracles here deliberately re-derive results by brute force (plain BFS,
exhaustive ancestor enumeration, naive tree walks) so they share no code
with the implementation paths they check.
"""

from __future__ import annotations

import random
from datetime import date, timedelta
from decimal import Decimal

from clinfed.core import (
    Category,
    ClinicalVariable,
    Instant,
    Interval,
    Measurement,
    MedicalConceptInstance,
    MedicalEvent,
    ObservationByClassification,
    PatientRecord,
    RelativeTo,
    Sex,
    TimeRelation,
    VerticalLevel,
    Visit,
)
from clinfed.ontology import ConceptRelation, MedicalConcept, Ontology
from clinfed.query.ast import (
    AgeAtEventIn,
    And,
    ConceptIs,
    ConceptIsAnyOf,
    EventTypeIs,
    LevelIs,
    Not,
    Or,
    Query,
    Target,
    TimeWindow,
    TrueAtom,
    VariableCmp,
)
from clinfed.registry import (
    Classification,
    ClinicalVariableType,
    MedicalEventType,
    Registry,
    Unit,
)
from clinfed.store import NodeStore

SEVERITY_ITEMS = ("No", "Mild", "Moderate", "Severe")


# -- oracles --------------------------------------------------------------------

def bfs_descendants_oracle(relations, root, predicates, max_depth=None):
    """Independent closure: parent -> children adjacency plus plain BFS."""
    children = {}
    for rel in relations:
        if rel.predicate in predicates:
            children.setdefault(rel.object, []).append(rel.subject)
    out = set()
    frontier = [root]
    seen = {root}
    depth = 0
    while frontier and (max_depth is None or depth < max_depth):
        nxt = []
        for node in frontier:
            for child in children.get(node, ()):
                if child not in seen:
                    seen.add(child)
                    out.add(child)
                    nxt.append(child)
        frontier = nxt
        depth += 1
    return sorted(out)


def resnik_oracle(concept_uris, isa_edges, counts, a, b):
    """Exhaustive-ancestor Resnik: no shared code with the implementation.

    isa_edges: list of (child, parent). Returns float or the strings
    'NoCommonAncestor' / 'ZeroCorpus'.
    """
    import math

    parents = {}
    for child, parent in isa_edges:
        parents.setdefault(child, set()).add(parent)

    def ancestors(u):
        out = {u}
        stack = [u]
        while stack:
            n = stack.pop()
            for p in parents.get(n, ()):
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return out

    total = sum(counts.get(u, 0) for u in concept_uris)
    if total == 0:
        return "ZeroCorpus"
    common = ancestors(a) & ancestors(b)
    if not common:
        return "NoCommonAncestor"
    best = 0.0
    for c in common:
        # effective(c): every concept whose ancestor set contains c
        eff = sum(counts.get(u, 0) for u in concept_uris if c in ancestors(u))
        p = eff / total
        if p > 0:
            best = max(best, -math.log(p))
    return best


# -- generators ------------------------------------------------------------------

def random_ontology(rng: random.Random, max_concepts: int = 50) -> Ontology:
    """Random DAG: each concept optionally attaches upward to earlier ones."""
    n = rng.randint(2, max_concepts)
    onto = Ontology()
    uris = [f"c:{i}" for i in range(n)]
    for i, uri in enumerate(uris):
        onto.add_concept(MedicalConcept(uri, f"concept {i}", "Anatomical"))
    for i in range(1, n):
        for _ in range(rng.randint(0, 2)):
            parent = uris[rng.randrange(i)]
            pred = rng.choice(("is_a", "part_of", "regional_part_of"))
            rel = ConceptRelation(uris[i], pred, parent)
            if rel not in onto.relations:
                onto.add_relation(rel)
    return onto


def base_registry() -> Registry:
    reg = Registry()
    reg.define_unit(Unit("mmHg"))
    reg.define_classification(Classification("Severity", SEVERITY_ITEMS))
    reg.define_cvt(
        ClinicalVariableType("BP", "Blood pressure", Category.MEASUREMENT,
                             unit="mmHg", vertical_level=VerticalLevel.ORGAN)
    )
    reg.define_cvt(
        ClinicalVariableType("Sev", "Severity grade", Category.CLASSIFICATION,
                             classification="Severity",
                             vertical_level=VerticalLevel.BODY)
    )
    reg.define_cvt(
        ClinicalVariableType("Tag", "Concept tag", Category.CONCEPT_INSTANCE,
                             vertical_level=VerticalLevel.ORGAN)
    )
    reg.define_met(
        MedicalEventType("Exam", "Examination", frozenset({"BP", "Sev", "Tag"}),
                         VerticalLevel.ORGAN)
    )
    reg.define_met(
        MedicalEventType("Assess", "Assessment", frozenset({"Sev"}),
                         VerticalLevel.BODY)
    )
    return reg


def random_store(
    rng: random.Random,
    ontology: Ontology,
    max_events: int = 200,
    node_id: str = "n",
    registry: Registry | None = None,
    event_prefix: str = "",
) -> NodeStore:
    registry = registry or base_registry()
    store = NodeStore(node_id, registry)
    uris = [c.uri for c in ontology.concepts]
    n_patients = rng.randint(1, 5)
    for p in range(n_patients):
        store.add_patient(
            PatientRecord(f"P{p}", Sex.UNKNOWN, date(2000 + p, 1, 1))
        )
    n_events = rng.randint(0, max_events)
    for i in range(n_events):
        patient = f"P{rng.randrange(n_patients)}"
        when = date(2008, 1, 1) + timedelta(days=rng.randint(0, 1000))
        visit_id = f"{event_prefix}V{i}"
        store.add_visit(Visit(visit_id, patient, "FollowUp", when))
        variables = []
        if rng.random() < 0.7:
            variables.append(
                ClinicalVariable("Tag", MedicalConceptInstance(rng.choice(uris)))
            )
        if rng.random() < 0.5:
            variables.append(
                ClinicalVariable("BP", Measurement(Decimal(rng.randint(60, 180)), "mmHg"))
            )
        if rng.random() < 0.5:
            variables.append(
                ClinicalVariable(
                    "Sev", ObservationByClassification(rng.choice(SEVERITY_ITEMS))
                )
            )
        roll = rng.random()
        if roll < 0.7 or i == 0:
            time_ref = Instant(when)
        elif roll < 0.85:
            time_ref = Interval(when, when + timedelta(days=rng.randint(0, 30)))
        else:
            anchor = f"{event_prefix}E{rng.randrange(i)}"
            time_ref = RelativeTo(
                anchor, rng.choice(list(TimeRelation)), rng.randint(-10, 10)
            )
        store.record_event(
            MedicalEvent(f"{event_prefix}E{i}", "Exam", visit_id, time_ref,
                         tuple(variables))
        )
    return store


def random_query(
    rng: random.Random,
    ontology: Ontology,
    max_depth: int = 4,
    positive_concepts: bool = True,
) -> Query:
    """Random predicate tree. With positive_concepts, concept atoms never
    appear under NOT, keeping enhancement monotone."""
    uris = [c.uri for c in ontology.concepts]

    def atom(allow_concept: bool):
        choices = ["cmp", "cls", "event", "level", "age", "time", "true"]
        if allow_concept:
            choices += ["concept", "concept"]
        kind = rng.choice(choices)
        if kind == "concept":
            return ConceptIs(rng.choice(uris))
        if kind == "cmp":
            return VariableCmp("BP", rng.choice(("=", "<", ">=", "!=")),
                               Decimal(rng.randint(60, 180)))
        if kind == "cls":
            return VariableCmp("Sev", "=", rng.choice(SEVERITY_ITEMS))
        if kind == "event":
            return EventTypeIs(rng.choice(("Exam", "Assess")))
        if kind == "level":
            return LevelIs(rng.choice(list(VerticalLevel)))
        if kind == "age":
            lo = rng.randint(0, 10)
            return AgeAtEventIn(Decimal(lo), Decimal(lo + rng.randint(0, 10)))
        if kind == "time":
            start = date(2008, 1, 1) + timedelta(days=rng.randint(0, 500))
            return TimeWindow(start, start + timedelta(days=rng.randint(0, 500)))
        return TrueAtom()

    def tree(depth: int, under_not: bool):
        if depth == 0 or rng.random() < 0.4:
            return atom(allow_concept=not under_not or not positive_concepts)
        kind = rng.choice(("and", "or", "not"))
        if kind == "not":
            return Not(tree(depth - 1, True))
        children = tuple(
            tree(depth - 1, under_not) for _ in range(rng.randint(2, 3))
        )
        return And(children) if kind == "and" else Or(children)

    return Query(Target.EVENTS, tree(max_depth, False))


def random_canonical_ast(rng: random.Random, max_depth: int = 4) -> Query:
    """Random AST in the parser's canonical shape (no And-in-And or
    Or-in-Or, concept sets sorted), for grammar round-trip checks."""

    def atom():
        kind = rng.choice(
            ("concept", "anyof", "event", "level", "cmp_num", "cmp_str",
             "age", "time", "true", "false")
        )
        if kind == "concept":
            return ConceptIs(f"hec:C{rng.randint(0, 30)}")
        if kind == "anyof":
            uris = frozenset(f"hec:C{rng.randint(0, 30)}"
                             for _ in range(rng.randint(1, 4)))
            return ConceptIsAnyOf(uris)
        if kind == "event":
            return EventTypeIs(f"MET{rng.randint(0, 9)}")
        if kind == "level":
            return LevelIs(rng.choice(list(VerticalLevel)))
        if kind == "cmp_num":
            value = Decimal(rng.randint(-500, 500)) / (10 ** rng.randint(0, 2))
            return VariableCmp(f"CVT{rng.randint(0, 9)}",
                               rng.choice(("=", "!=", "<", "<=", ">", ">=")), value)
        if kind == "cmp_str":
            return VariableCmp(f"CVT{rng.randint(0, 9)}",
                               rng.choice(("=", "!=")), f"item{rng.randint(0, 9)}")
        if kind == "age":
            lo = Decimal(rng.randint(0, 15))
            return AgeAtEventIn(lo, lo + Decimal(rng.randint(0, 10)))
        if kind == "time":
            start = date(2005, 1, 1) + timedelta(days=rng.randint(0, 2000))
            return TimeWindow(start, start + timedelta(days=rng.randint(0, 400)))
        if kind == "true":
            return TrueAtom()
        return FalseAtomLocal()

    def factor(depth):
        roll = rng.random()
        if depth == 0 or roll < 0.5:
            return atom()
        if roll < 0.7:
            return Not(factor(depth - 1))
        return group(depth - 1)

    def term(depth):
        n = rng.randint(1, 3)
        factors = tuple(factor(depth) for _ in range(n))
        return factors[0] if n == 1 else And(factors)

    def group(depth):
        n = rng.randint(1, 3)
        terms = []
        for _ in range(n):
            t = term(depth)
            # parser flattens Or-in-Or; keep children as terms
            while isinstance(t, Or):
                t = term(depth)
            terms.append(t)
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    pred = group(max_depth) if rng.random() < 0.9 else TrueAtom()
    target = rng.choice(list(Target))
    return Query(target, pred)


def FalseAtomLocal():
    from clinfed.query.ast import FalseAtom

    return FalseAtom()


def naive_row_set(rows):
    """Rows as a comparable set, ignoring provenance."""
    return {
        (r.patient, r.event_id, r.event_type, r.time_start, r.variables)
        for r in rows
    }
