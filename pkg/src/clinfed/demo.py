"""Seeded three-node federation demo.

Node A and node B annotate images against the shared global vocabulary; node
C keeps a local anatomy vocabulary mapped onto the global one. The demo
query asks for jaw-annotated imaging events and, once enhanced, also finds
the tooth-annotated ones.
"""

from __future__ import annotations

from datetime import date
from decimal import Decimal

from .core import (
    ClinicalVariable,
    Instant,
    Measurement,
    MedicalConceptInstance,
    MedicalEvent,
    ObservationByClassification,
    PatientRecord,
    Sex,
    VerticalLevel,
    Visit,
)
from .federation import FederationNode, Gateway, identity_mapping
from .ontology import ConceptMapping, ConceptRelation, MedicalConcept, Ontology
from .registry import (
    Classification,
    ClinicalVariableType,
    MedicalEventType,
    Registry,
    Unit,
)
from .core import Category
from .store import NodeStore

DEMO_QUERY = 'FIND events WHERE concept = "hec:Jaw"'


def demo_registry() -> Registry:
    reg = Registry()
    reg.define_unit(Unit("mL/m²"))
    reg.define_classification(
        Classification("Severity", ("No", "Mild", "Moderate", "Severe"))
    )
    reg.define_cvt(
        ClinicalVariableType(
            "SysLVol", "Systolic LV volume", Category.MEASUREMENT,
            unit="mL/m²", vertical_level=VerticalLevel.ORGAN,
        )
    )
    reg.define_cvt(
        ClinicalVariableType(
            "RVDilation", "RV dilation", Category.CLASSIFICATION,
            classification="Severity", vertical_level=VerticalLevel.ORGAN,
        )
    )
    reg.define_cvt(
        ClinicalVariableType(
            "TumourLoc", "Tumour Location", Category.CONCEPT_INSTANCE,
            vertical_level=VerticalLevel.ORGAN,
        )
    )
    reg.define_cvt(
        ClinicalVariableType(
            "ImgAnnotation", "Image annotation", Category.CONCEPT_INSTANCE,
            vertical_level=VerticalLevel.ORGAN,
        )
    )
    reg.define_met(
        MedicalEventType(
            "CardiacMRI", "Cardiac MRI examination",
            frozenset({"SysLVol", "RVDilation"}), VerticalLevel.ORGAN,
        )
    )
    reg.define_met(
        MedicalEventType(
            "XRayImaging", "X-ray imaging",
            frozenset({"ImgAnnotation"}), VerticalLevel.ORGAN,
        )
    )
    reg.define_met(
        MedicalEventType(
            "NeuroExam", "Neurological examination",
            frozenset({"TumourLoc"}), VerticalLevel.ORGAN,
        )
    )
    return reg


def demo_global_ontology() -> Ontology:
    onto = Ontology()
    onto.add_concept(MedicalConcept("hec:Jaw", "Jaw", "Anatomical"))
    onto.add_concept(MedicalConcept("hec:Tooth", "Tooth", "Anatomical"))
    onto.add_concept(MedicalConcept("fma:Brain", "Brain", "Anatomical"))
    onto.add_concept(MedicalConcept("fma:Cerebellum", "Cerebellum", "Anatomical"))
    onto.add_relation(ConceptRelation("hec:Tooth", "part_of", "hec:Jaw"))
    onto.add_relation(
        ConceptRelation("fma:Cerebellum", "regional_part_of", "fma:Brain")
    )
    return onto


def _seed_patient(store: NodeStore, pseudonym: str, birth: date) -> None:
    store.add_patient(PatientRecord(pseudonym, Sex.UNKNOWN, birth))


def _xray(store: NodeStore, pseudonym: str, event_id: str, when: date, uri: str):
    visit_id = f"{pseudonym}-{when.isoformat()}"
    if visit_id not in store.visits:
        store.add_visit(Visit(visit_id, pseudonym, "FollowUp", when))
    store.record_event(
        MedicalEvent(
            event_id=event_id,
            event_type="XRayImaging",
            visit=visit_id,
            time=Instant(when),
            variables=(ClinicalVariable("ImgAnnotation", MedicalConceptInstance(uri)),),
        )
    )


def build_demo_gateway() -> Gateway:
    """Three in-memory nodes seeded with Table-1-style data and annotated
    imaging events."""
    registry = demo_registry()
    global_onto = demo_global_ontology()
    gateway = Gateway(global_onto)

    # node A: jaw-annotated X-ray plus a cardiac MRI, global vocabulary
    store_a = NodeStore("A", registry, known_concepts=[c.uri for c in global_onto.concepts])
    _seed_patient(store_a, "P1", date(2000, 6, 15))
    _xray(store_a, "P1", "A-xray-1", date(2008, 3, 1), "hec:Jaw")
    store_a.add_visit(Visit("P1-mri", "P1", "Baseline", date(2008, 3, 1)))
    store_a.record_event(
        MedicalEvent(
            "A-mri-1", "CardiacMRI", "P1-mri", Instant(date(2008, 3, 1)),
            (
                ClinicalVariable("SysLVol", Measurement(Decimal("30.5"), "mL/m²")),
                ClinicalVariable("RVDilation", ObservationByClassification("Severe")),
            ),
        )
    )
    gateway.register_node(
        FederationNode("A", store_a, global_onto, identity_mapping(global_onto))
    )

    # node B: tooth-annotated X-ray for the same person, global vocabulary
    store_b = NodeStore("B", registry, known_concepts=[c.uri for c in global_onto.concepts])
    _seed_patient(store_b, "P1", date(2000, 6, 15))
    _xray(store_b, "P1", "B-xray-1", date(2008, 5, 20), "hec:Tooth")
    gateway.register_node(
        FederationNode("B", store_b, global_onto, identity_mapping(global_onto))
    )

    # node C: local anatomy vocabulary mapped onto the global one
    local_c = Ontology()
    local_c.add_concept(MedicalConcept("locC:Mandible", "Mandible", "Anatomical"))
    local_c.add_concept(MedicalConcept("locC:Molar", "Molar tooth", "Anatomical"))
    local_c.add_relation(ConceptRelation("locC:Molar", "part_of", "locC:Mandible"))
    mapping_c = (
        ConceptMapping("locC:Mandible", "hec:Jaw", Decimal(1), "Manual"),
        ConceptMapping("locC:Molar", "hec:Tooth", Decimal(1), "Manual"),
    )
    store_c = NodeStore("C", registry, known_concepts=[c.uri for c in local_c.concepts])
    _seed_patient(store_c, "P2", date(2001, 1, 10))
    _xray(store_c, "P2", "C-xray-1", date(2009, 7, 2), "locC:Mandible")
    gateway.register_node(FederationNode("C", store_c, local_c, mapping_c))

    return gateway
