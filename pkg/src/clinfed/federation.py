"""Horizontal integration: a gateway that enhances a global query once,
translates it per node through local-to-global concept mappings, fans out to
simulated in-process nodes, and merges person-centric, provenance-tagged
results. Node failures yield explicit partial results, never errors.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Union

from .errors import DuplicateNode, NoNodes, UnknownNode
from .ontology import ConceptMapping, Ontology, load_mappings
from .query import (
    And,
    ConceptIs,
    ConceptIsAnyOf,
    FalseAtom,
    Not,
    Or,
    Query,
    enhance,
    execute,
    naive_execute,
)
from .query.executor import ResultRow
from .registry import Registry
from .store import NodeStore


@dataclass
class FederationNode:
    node_id: str
    store: NodeStore
    local_ontology: Ontology
    mapping: tuple[ConceptMapping, ...] = ()

    def inverse_map(self) -> dict[str, set[str]]:
        """global uri -> the local uris that map onto it."""
        inv: dict[str, set[str]] = {}
        for m in self.mapping:
            inv.setdefault(m.global_uri, set()).add(m.local_uri)
        return inv


@dataclass
class FederatedResult:
    rows: list[ResultRow]
    partial: bool
    unreachable: list[str]
    dropped_predicates: list[tuple[str, str]]  # (node_id, global concept uri)

    def as_dict(self) -> dict:
        return {
            "rows": [r.as_dict() for r in self.rows],
            "partial": self.partial,
            "unreachable": self.unreachable,
            "dropped_predicates": [list(d) for d in self.dropped_predicates],
        }


@dataclass(frozen=True)
class Fault:
    mode: str  # "Unreachable" | "SlowBy"
    delay_ms: int = 0


def translate(
    global_query: Query, node: FederationNode
) -> tuple[Query, list[str]]:
    """Rewrite a globally-enhanced query into the node's local concept
    vocabulary. Returns the local query plus the global uris that had no
    local mapping (the node contributes nothing for those)."""
    inv = node.inverse_map()
    dropped: list[str] = []

    def walk(n):
        if isinstance(n, And):
            return And(tuple(walk(c) for c in n.children))
        if isinstance(n, Or):
            return Or(tuple(walk(c) for c in n.children))
        if isinstance(n, Not):
            return Not(walk(n.child))
        if isinstance(n, ConceptIs):
            return walk(ConceptIsAnyOf(frozenset({n.uri})))
        if isinstance(n, ConceptIsAnyOf):
            local: set[str] = set()
            for uri in sorted(n.uris):
                mapped = inv.get(uri)
                if mapped:
                    local.update(mapped)
                else:
                    dropped.append(uri)
            return ConceptIsAnyOf(frozenset(local)) if local else FalseAtom()
        return n

    return Query(global_query.target, walk(global_query.predicate)), dropped


class Gateway:
    """Registers nodes and runs federated queries against a snapshot of the
    registered set."""

    def __init__(self, global_ontology: Ontology):
        self.global_ontology = global_ontology
        self._lock = threading.Lock()
        self._nodes: dict[str, FederationNode] = {}
        self._faults: dict[str, Fault] = {}

    # -- membership ---------------------------------------------------------------

    def register_node(self, node: FederationNode) -> None:
        with self._lock:
            if node.node_id in self._nodes:
                raise DuplicateNode(node.node_id)
            self._nodes[node.node_id] = node

    def remove_node(self, node_id: str) -> None:
        with self._lock:
            if node_id not in self._nodes:
                raise UnknownNode(node_id)
            del self._nodes[node_id]
            self._faults.pop(node_id, None)

    def node_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._nodes)

    # -- fault injection ------------------------------------------------------------

    def inject_fault(self, node_id: str, fault: Fault) -> None:
        with self._lock:
            if node_id not in self._nodes:
                raise UnknownNode(node_id)
            self._faults[node_id] = fault

    def clear_fault(self, node_id: str) -> None:
        with self._lock:
            if node_id not in self._nodes:
                raise UnknownNode(node_id)
            self._faults.pop(node_id, None)

    # -- execution -------------------------------------------------------------------

    def federated_execute(
        self, global_query: Query, expand_concepts: bool = True
    ) -> FederatedResult:
        with self._lock:
            nodes = list(self._nodes.values())
            faults = dict(self._faults)
        if not nodes:
            raise NoNodes("no registered federation nodes")

        if expand_concepts:
            global_query = enhance(global_query, self.global_ontology)

        unreachable: list[str] = []
        dropped: list[tuple[str, str]] = []
        per_node_rows: dict[str, list[ResultRow]] = {}

        def run(node: FederationNode) -> Optional[list[ResultRow]]:
            fault = faults.get(node.node_id)
            if fault and fault.mode == "Unreachable":
                return None
            if fault and fault.mode == "SlowBy":
                time.sleep(fault.delay_ms / 1000.0)
            local_query, node_dropped = translate(global_query, node)
            for uri in node_dropped:
                dropped.append((node.node_id, uri))
            rows = naive_execute(local_query, node.store)
            return [replace(r, node_id=node.node_id) for r in rows]

        with ThreadPoolExecutor(max_workers=max(1, len(nodes))) as pool:
            futures = {node.node_id: pool.submit(run, node) for node in nodes}
        for node_id in sorted(futures):
            rows = futures[node_id].result()
            if rows is None:
                unreachable.append(node_id)
            else:
                per_node_rows[node_id] = rows

        merged: dict[tuple[str, str], ResultRow] = {}
        for node_id in sorted(per_node_rows):
            for row in per_node_rows[node_id]:
                merged.setdefault(row.dedup_key(), row)
        rows = sorted(
            merged.values(),
            key=lambda r: (r.patient, r.time_start or "9999-12-31", r.event_id),
        )
        return FederatedResult(
            rows=rows,
            partial=bool(unreachable),
            unreachable=sorted(unreachable),
            dropped_predicates=sorted(set(dropped)),
        )


# -- configuration file ---------------------------------------------------------------

def load_gateway(
    config_path: Union[str, Path], registry: Optional[Registry] = None
) -> Gateway:
    """Build a gateway from a federation config file.

    JSON shape: {"global_ontology": path, "registry": path,
    "nodes": [{"node_id", "data_dir", "ontology_file", "mapping_file"}]}.
    Paths are resolved relative to the config file.
    """
    config_path = Path(config_path)
    config = json.loads(config_path.read_text(encoding="utf-8"))
    base = config_path.parent

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    global_ontology = Ontology.load(resolve(config["global_ontology"]))
    if registry is None:
        registry = Registry.load(resolve(config["registry"]))
    gateway = Gateway(global_ontology)
    for entry in config.get("nodes", []):
        local_onto = (
            Ontology.load(resolve(entry["ontology_file"]))
            if entry.get("ontology_file")
            else global_ontology
        )
        mapping = (
            tuple(load_mappings(resolve(entry["mapping_file"])))
            if entry.get("mapping_file")
            else ()
        )
        store = NodeStore(
            entry["node_id"],
            registry,
            data_dir=resolve(entry["data_dir"]),
            known_concepts=[c.uri for c in local_onto.concepts],
        )
        gateway.register_node(
            FederationNode(entry["node_id"], store, local_onto, mapping)
        )
    return gateway


def identity_mapping(ontology: Ontology) -> tuple[ConceptMapping, ...]:
    """Map every concept to itself; used when all nodes share one vocabulary."""
    from decimal import Decimal

    return tuple(
        ConceptMapping(c.uri, c.uri, Decimal(1), "Manual") for c in ontology.concepts
    )
