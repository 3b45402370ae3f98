"""Semantics layer: URI-identified medical concepts, typed relations,
concept-to-CVT bindings, fragment extraction, local-to-global mapping
discovery and information-content similarity.

An Ontology is built once, then treated as an immutable snapshot; all query
operations are read-only.
"""

from __future__ import annotations

import math
import re
import shlex
from collections import deque
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .errors import (
    AmbiguousMapping,
    CycleIntroduced,
    DuplicateURI,
    NoCommonAncestor,
    UnknownConcept,
    UnknownEndpoint,
    ZeroCorpus,
)

PREDICATES = ("is_a", "part_of", "regional_part_of", "associated_with")
HIERARCHY_PREDICATES = frozenset({"is_a", "part_of", "regional_part_of"})

CONCEPT_GROUPS = ("Anatomical", "Symptom", "Disease", "TreatmentDrug")


@dataclass(frozen=True)
class MedicalConcept:
    uri: str
    label: str
    group: str = "Anatomical"

    def __post_init__(self):
        if not self.uri or not self.label:
            raise ValueError("concept uri and label must be non-empty")
        if self.group not in CONCEPT_GROUPS:
            raise ValueError(f"unknown concept group {self.group!r}")


@dataclass(frozen=True)
class ConceptRelation:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        if self.subject == self.object:
            raise ValueError("relation subject and object must differ")
        if self.predicate not in PREDICATES:
            raise ValueError(f"unknown predicate {self.predicate!r}")


@dataclass(frozen=True)
class ConceptBinding:
    cvt_id: str
    concept_uri: str


@dataclass(frozen=True)
class ConceptMapping:
    local_uri: str
    global_uri: str
    confidence: Decimal
    method: str  # ExactLabel | TokenOverlap | SharedInstances | Manual

    def __post_init__(self):
        if not Decimal(0) <= self.confidence <= Decimal(1):
            raise ValueError("mapping confidence must lie in [0, 1]")


class Ontology:
    def __init__(self):
        self._concepts: dict[str, MedicalConcept] = {}
        self._relations: list[ConceptRelation] = []
        # child -> parents, per predicate (subject pred object = child pred parent)
        self._parents: dict[str, dict[str, set[str]]] = {p: {} for p in PREDICATES}
        self._children: dict[str, dict[str, set[str]]] = {p: {} for p in PREDICATES}

    # -- construction ----------------------------------------------------------

    def add_concept(self, concept: MedicalConcept) -> None:
        if concept.uri in self._concepts:
            raise DuplicateURI(concept.uri)
        self._concepts[concept.uri] = concept

    def add_relation(self, relation: ConceptRelation) -> None:
        for endpoint in (relation.subject, relation.object):
            if endpoint not in self._concepts:
                raise UnknownEndpoint(endpoint)
        if relation.predicate in HIERARCHY_PREDICATES and self._reaches(
            relation.object, relation.subject, relation.predicate
        ):
            raise CycleIntroduced(
                relation.predicate, f"{relation.subject} .. {relation.object}"
            )
        self._relations.append(relation)
        p = relation.predicate
        self._parents[p].setdefault(relation.subject, set()).add(relation.object)
        self._children[p].setdefault(relation.object, set()).add(relation.subject)

    def _reaches(self, start: str, goal: str, predicate: str) -> bool:
        # would adding goal->start close a cycle in this predicate's graph?
        stack, seen = [start], set()
        while stack:
            node = stack.pop()
            if node == goal:
                return True
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self._parents[predicate].get(node, ()))
        return False

    # -- lookups ---------------------------------------------------------------

    def concept(self, uri: str) -> Optional[MedicalConcept]:
        return self._concepts.get(uri)

    def __contains__(self, uri: str) -> bool:
        return uri in self._concepts

    @property
    def concepts(self) -> list[MedicalConcept]:
        return sorted(self._concepts.values(), key=lambda c: c.uri)

    @property
    def relations(self) -> list[ConceptRelation]:
        return list(self._relations)

    # -- closure ---------------------------------------------------------------

    def descendants(
        self,
        root: str,
        predicates: Iterable[str],
        max_depth: Optional[int] = None,
    ) -> list[str]:
        """All concepts reaching ``root`` through chains of the given
        predicates (child -> parent direction), excluding root, sorted by uri."""
        if root not in self._concepts:
            raise UnknownConcept(root)
        preds = set(predicates)
        found: set[str] = set()
        frontier = deque([(root, 0)])
        seen = {root}
        while frontier:
            node, depth = frontier.popleft()
            if max_depth is not None and depth >= max_depth:
                continue
            for p in preds:
                for child in self._children.get(p, {}).get(node, ()):
                    if child not in seen:
                        seen.add(child)
                        found.add(child)
                        frontier.append((child, depth + 1))
        return sorted(found)

    def ancestors(self, uri: str, predicates: Iterable[str]) -> set[str]:
        """Concepts reachable upward from ``uri``, including ``uri`` itself."""
        if uri not in self._concepts:
            raise UnknownConcept(uri)
        preds = set(predicates)
        seen = {uri}
        stack = [uri]
        while stack:
            node = stack.pop()
            for p in preds:
                for parent in self._parents.get(p, {}).get(node, ()):
                    if parent not in seen:
                        seen.add(parent)
                        stack.append(parent)
        return seen

    # -- fragment extraction -----------------------------------------------------

    def extract_fragment(self, roots: Iterable[str], depth: int) -> "Ontology":
        """Self-contained sub-ontology within ``depth`` edges (any predicate,
        either direction) of any root."""
        roots = list(roots)
        for r in roots:
            if r not in self._concepts:
                raise UnknownConcept(r)
        keep = set(roots)
        frontier = deque((r, 0) for r in roots)
        while frontier:
            node, d = frontier.popleft()
            if d >= depth:
                continue
            for p in PREDICATES:
                neighbours = self._parents[p].get(node, set()) | self._children[
                    p
                ].get(node, set())
                for n in neighbours:
                    if n not in keep:
                        keep.add(n)
                        frontier.append((n, d + 1))
        fragment = Ontology()
        for uri in sorted(keep):
            fragment._concepts[uri] = self._concepts[uri]
        for rel in self._relations:
            if rel.subject in keep and rel.object in keep:
                fragment._relations.append(rel)
                fragment._parents[rel.predicate].setdefault(rel.subject, set()).add(
                    rel.object
                )
                fragment._children[rel.predicate].setdefault(rel.object, set()).add(
                    rel.subject
                )
        return fragment

    # -- persistence -----------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for c in self.concepts:
            lines.append(f'concept {c.uri} {c.group} "{c.label}"')
        for r in self._relations:
            lines.append(f"rel {r.subject} {r.predicate} {r.object}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "Ontology":
        onto = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                parts = shlex.split(line)
            except ValueError as e:
                raise ValueError(f"ontology line {lineno}: {e}") from None
            if parts[0] == "concept" and len(parts) == 4:
                onto.add_concept(MedicalConcept(parts[1], parts[3], parts[2]))
            elif parts[0] == "rel" and len(parts) == 4:
                onto.add_relation(ConceptRelation(parts[1], parts[2], parts[3]))
            else:
                raise ValueError(f"ontology line {lineno}: unrecognized: {raw!r}")
        return onto

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Ontology":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


# -- mapping discovery -----------------------------------------------------------

_PUNCT_RE = re.compile(r"[^\w\s]", re.UNICODE)


def normalize_label(label: str) -> tuple[str, ...]:
    """Lowercase, strip punctuation, split and sort tokens."""
    cleaned = _PUNCT_RE.sub(" ", label.lower())
    return tuple(sorted(cleaned.split()))


def token_jaccard(a: str, b: str) -> Decimal:
    sa, sb = set(normalize_label(a)), set(normalize_label(b))
    if not sa or not sb:
        return Decimal(0)
    return Decimal(len(sa & sb)) / Decimal(len(sa | sb))


def instance_jaccard(a: set, b: set) -> Decimal:
    if not a or not b:
        return Decimal(0)
    return Decimal(len(a & b)) / Decimal(len(a | b))


def discover_mappings(
    local: Ontology,
    global_: Ontology,
    shared_instances: Optional[Mapping[str, set]] = None,
    threshold: Decimal = Decimal("0.5"),
) -> list[ConceptMapping]:
    """Heuristic local-to-global alignment.

    Per local concept the candidate score is the max of: 1.0 on equal
    normalized labels, token-set Jaccard of labels, and instance-set Jaccard
    when shared instances are supplied. The best global candidate is emitted
    iff its score reaches the threshold; a tie at the top raises.
    """
    threshold = Decimal(threshold)
    if not Decimal(0) < threshold <= Decimal(1):
        raise ValueError("threshold must lie in (0, 1]")
    instances = shared_instances or {}
    mappings: list[ConceptMapping] = []
    for lc in local.concepts:
        best: list[tuple[str, Decimal, str]] = []
        for gc in global_.concepts:
            signals: list[tuple[Decimal, str]] = []
            if normalize_label(lc.label) == normalize_label(gc.label):
                signals.append((Decimal(1), "ExactLabel"))
            signals.append((token_jaccard(lc.label, gc.label), "TokenOverlap"))
            if shared_instances is not None:
                signals.append(
                    (
                        instance_jaccard(
                            set(instances.get(lc.uri, ())),
                            set(instances.get(gc.uri, ())),
                        ),
                        "SharedInstances",
                    )
                )
            score, method = max(signals, key=lambda s: s[0])
            if score < threshold:
                continue
            if not best or score > best[0][1]:
                best = [(gc.uri, score, method)]
            elif score == best[0][1]:
                best.append((gc.uri, score, method))
        if not best:
            continue
        if len(best) > 1:
            raise AmbiguousMapping(
                lc.uri, "ties: " + ", ".join(sorted(b[0] for b in best))
            )
        guri, score, method = best[0]
        mappings.append(ConceptMapping(lc.uri, guri, score, method))
    return mappings


def mappings_to_text(mappings: Iterable[ConceptMapping]) -> str:
    lines = [
        f"map {m.local_uri} {m.global_uri} {m.confidence} {m.method}"
        for m in mappings
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def mappings_from_text(text: str) -> list[ConceptMapping]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5 or parts[0] != "map":
            raise ValueError(f"mapping line {lineno}: unrecognized: {raw!r}")
        out.append(ConceptMapping(parts[1], parts[2], Decimal(parts[3]), parts[4]))
    return out


def load_mappings(path: Union[str, Path]) -> list[ConceptMapping]:
    return mappings_from_text(Path(path).read_text(encoding="utf-8"))


# -- information-content similarity ------------------------------------------------

def resnik_similarity(
    ontology: Ontology,
    a: str,
    b: str,
    annotation_counts: Mapping[str, int],
) -> float:
    """Resnik similarity over the is_a hierarchy: the maximum information
    content -ln p(c) over common ancestors of a and b (both inclusive).

    Counts propagate upward: a concept's effective count is its own plus all
    its is_a-descendants'; p(c) = effective(c) / total corpus count.
    """
    for uri in (a, b):
        if uri not in ontology:
            raise UnknownConcept(uri)

    effective: dict[str, int] = {}
    total = 0
    for c in ontology.concepts:
        own = int(annotation_counts.get(c.uri, 0))
        if own < 0:
            raise ValueError(f"negative annotation count for {c.uri}")
        total += own
        if own:
            for anc in ontology.ancestors(c.uri, {"is_a"}):
                effective[anc] = effective.get(anc, 0) + own
    if total == 0:
        raise ZeroCorpus("no annotations anywhere in the corpus")

    common = ontology.ancestors(a, {"is_a"}) & ontology.ancestors(b, {"is_a"})
    if not common:
        raise NoCommonAncestor(f"{a} and {b}")

    best = 0.0
    for c in common:
        p = effective.get(c, 0) / total
        if p > 0:
            best = max(best, -math.log(p))
    return best
