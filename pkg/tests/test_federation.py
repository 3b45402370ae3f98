import random

import pytest

from clinfed.demo import DEMO_QUERY, build_demo_gateway, demo_global_ontology
from clinfed.errors import DuplicateNode, NoNodes, UnknownNode
from clinfed.federation import (
    Fault,
    FederationNode,
    Gateway,
    identity_mapping,
    translate,
)
from clinfed.query import ConceptIs, ConceptIsAnyOf, FalseAtom, Query, Target
from clinfed.query import enhance, naive_execute, parse
from clinfed.store import NodeStore

from helpers import (
    base_registry,
    naive_row_set,
    random_ontology,
    random_query,
    random_store,
)


@pytest.fixture
def gateway():
    return build_demo_gateway()


class TestDemoFederation:
    def test_enhanced_query_reaches_all_three_nodes(self, gateway):
        result = gateway.federated_execute(parse(DEMO_QUERY))
        assert [r.event_id for r in result.rows] == [
            "A-xray-1", "B-xray-1", "C-xray-1"
        ]
        assert not result.partial
        assert result.unreachable == [] and result.dropped_predicates == []

    def test_unenhanced_query_misses_part_annotations(self, gateway):
        result = gateway.federated_execute(parse(DEMO_QUERY), expand_concepts=False)
        assert [r.event_id for r in result.rows] == ["A-xray-1", "C-xray-1"]

    def test_rows_carry_node_provenance(self, gateway):
        result = gateway.federated_execute(parse(DEMO_QUERY))
        assert [r.node_id for r in result.rows] == ["A", "B", "C"]

    def test_rows_are_person_centric_and_time_ordered(self, gateway):
        rows = gateway.federated_execute(parse(DEMO_QUERY)).rows
        patients = [r.patient for r in rows]
        # each patient's rows are contiguous and sorted by time within
        assert patients == sorted(patients)
        for p in set(patients):
            starts = [r.time_start for r in rows if r.patient == p]
            assert starts == sorted(starts)


class TestTranslate:
    def _node_c(self, gateway):
        return next(
            n for n in (gateway._nodes[i] for i in gateway.node_ids())
            if n.node_id == "C"
        )

    def test_mapped_concept_becomes_local_uri(self, gateway):
        node = self._node_c(gateway)
        local, dropped = translate(
            Query(Target.EVENTS, ConceptIs("hec:Jaw")), node
        )
        assert local.predicate == ConceptIsAnyOf(frozenset({"locC:Mandible"}))
        assert dropped == []

    def test_unmapped_concepts_are_dropped(self, gateway):
        node = self._node_c(gateway)
        local, dropped = translate(
            Query(Target.EVENTS, ConceptIsAnyOf(frozenset({"hec:Jaw", "fma:Brain"}))),
            node,
        )
        assert local.predicate == ConceptIsAnyOf(frozenset({"locC:Mandible"}))
        assert dropped == ["fma:Brain"]

    def test_fully_unmapped_set_becomes_false(self, gateway):
        node = self._node_c(gateway)
        local, dropped = translate(
            Query(Target.EVENTS, ConceptIs("fma:Brain")), node
        )
        assert local.predicate == FalseAtom()
        assert dropped == ["fma:Brain"]

    def test_identity_mapping_is_transparent(self, gateway):
        node_a = gateway._nodes["A"]
        q = Query(Target.EVENTS, ConceptIsAnyOf(frozenset({"hec:Jaw", "hec:Tooth"})))
        local, dropped = translate(q, node_a)
        assert local == q and dropped == []

    def test_dropped_predicates_reported_per_node(self, gateway):
        result = gateway.federated_execute(
            parse('FIND events WHERE concept = "fma:Brain"')
        )
        assert ("C", "fma:Brain") in result.dropped_predicates
        assert result.rows == []


class TestMembership:
    def test_duplicate_registration(self, gateway):
        with pytest.raises(DuplicateNode):
            gateway.register_node(gateway._nodes["A"])

    def test_remove_unknown(self, gateway):
        with pytest.raises(UnknownNode):
            gateway.remove_node("Z")

    def test_remove_excludes_node_from_queries(self, gateway):
        gateway.remove_node("B")
        assert gateway.node_ids() == ["A", "C"]
        rows = gateway.federated_execute(parse(DEMO_QUERY)).rows
        assert [r.event_id for r in rows] == ["A-xray-1", "C-xray-1"]

    def test_empty_gateway_raises(self):
        gateway = Gateway(demo_global_ontology())
        with pytest.raises(NoNodes):
            gateway.federated_execute(parse(DEMO_QUERY))

    def test_fault_on_unknown_node(self, gateway):
        with pytest.raises(UnknownNode):
            gateway.inject_fault("Z", Fault("Unreachable"))


class TestFaults:
    def test_unreachable_node_yields_partial_result(self, gateway):
        full = naive_row_set(gateway.federated_execute(parse(DEMO_QUERY)).rows)
        gateway.inject_fault("B", Fault("Unreachable"))
        result = gateway.federated_execute(parse(DEMO_QUERY))
        assert result.partial and result.unreachable == ["B"]
        assert naive_row_set(result.rows) <= full
        assert {r.event_id for r in result.rows} == {"A-xray-1", "C-xray-1"}

    def test_clear_fault_restores_full_results(self, gateway):
        gateway.inject_fault("B", Fault("Unreachable"))
        gateway.clear_fault("B")
        result = gateway.federated_execute(parse(DEMO_QUERY))
        assert not result.partial and len(result.rows) == 3

    def test_slow_node_changes_nothing_but_latency(self, gateway):
        baseline = gateway.federated_execute(parse(DEMO_QUERY))
        gateway.inject_fault("B", Fault("SlowBy", delay_ms=50))
        slowed = gateway.federated_execute(parse(DEMO_QUERY))
        assert slowed.rows == baseline.rows
        assert not slowed.partial

    def test_all_nodes_unreachable_is_still_a_result(self, gateway):
        for node_id in gateway.node_ids():
            gateway.inject_fault(node_id, Fault("Unreachable"))
        result = gateway.federated_execute(parse(DEMO_QUERY))
        assert result.rows == [] and result.partial
        assert result.unreachable == ["A", "B", "C"]


def _split_federation(rng, n_nodes=3):
    """Random stores sharing one global vocabulary, plus a centralized store
    holding the union of all events."""
    onto = random_ontology(rng, 12)
    registry = base_registry()
    gateway = Gateway(onto)
    central = NodeStore("central", registry)
    seeded_patients = set()
    for k in range(n_nodes):
        store = random_store(rng, onto, max_events=30, node_id=f"n{k}",
                             registry=registry, event_prefix=f"n{k}-")
        gateway.register_node(
            FederationNode(f"n{k}", store, onto, identity_mapping(onto))
        )
        for pseudonym, record in store.patients.items():
            if pseudonym not in seeded_patients:
                seeded_patients.add(pseudonym)
                central.add_patient(record)
        for visit in store.visits.values():
            central.add_visit(visit)
        for event in store.events.values():  # insertion order
            central.record_event(event)
    return onto, gateway, central


class TestCentralizedEquivalence:
    def test_federated_equals_centralized_on_random_data(self):
        rng = random.Random(2024)
        for _ in range(15):
            onto, gateway, central = _split_federation(rng)
            q = random_query(rng, onto)
            fed = gateway.federated_execute(q)
            want = naive_row_set(naive_execute(enhance(q, onto), central))
            assert naive_row_set(fed.rows) == want
            assert not fed.partial

    def test_failure_monotonicity(self):
        rng = random.Random(31)
        onto, gateway, central = _split_federation(rng)
        q = random_query(rng, onto)
        full = naive_row_set(gateway.federated_execute(q).rows)
        gateway.inject_fault("n1", Fault("Unreachable"))
        degraded = gateway.federated_execute(q)
        assert naive_row_set(degraded.rows) <= full
        assert degraded.partial and degraded.unreachable == ["n1"]

    def test_repeated_runs_are_deterministic(self):
        rng = random.Random(32)
        onto, gateway, _ = _split_federation(rng)
        q = random_query(rng, onto)
        first = gateway.federated_execute(q)
        for _ in range(5):
            again = gateway.federated_execute(q)
            assert again.rows == first.rows
            assert again.dropped_predicates == first.dropped_predicates

    def test_duplicate_events_across_nodes_are_merged_once(self):
        onto = demo_global_ontology()
        gateway = build_demo_gateway()
        # mirror node A's store under a new node id: same (patient, event)
        mirror = gateway._nodes["A"].store
        clone = NodeStore("A2", mirror.registry,
                          known_concepts=[c.uri for c in onto.concepts])
        clone.load_serialized(mirror.serialize())
        gateway.register_node(
            FederationNode("A2", clone, onto, identity_mapping(onto))
        )
        result = gateway.federated_execute(parse(DEMO_QUERY))
        keys = [r.dedup_key() for r in result.rows]
        assert len(keys) == len(set(keys)) == 3
        # first-registered node wins the provenance tag
        assert result.rows[0].node_id == "A"
