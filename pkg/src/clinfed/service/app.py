"""FastAPI service wrapping the engine: metadata, ontology, data, query and
federation endpoints. The CLI is a thin client of this app."""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import VerticalLevel, Unresolvable
from ..demo import DEMO_QUERY, build_demo_gateway
from ..errors import DomainError, UnknownPatient
from ..federation import Fault, Gateway, load_gateway
from ..ontology import Ontology, discover_mappings, resnik_similarity
from ..query import enhance, naive_execute, optimize, parse, pretty_print
from ..query.executor import execute
from ..registry import Registry
from ..store import IngestMapping, NodeStore
from . import schemas


@dataclass
class ServiceConfig:
    data_dir: Path
    registry_file: Path
    ontology_file: Path
    federation_file: Optional[Path] = None
    node_id: str = "local"


class EngineState:
    """Mutable service state; every mutation is persisted so separate
    processes (e.g. successive CLI invocations) observe the same store."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.registry = (
            Registry.load(config.registry_file)
            if config.registry_file.exists()
            else Registry()
        )
        self.ontology = (
            Ontology.load(config.ontology_file)
            if config.ontology_file.exists()
            else Ontology()
        )
        self.store = NodeStore(
            config.node_id,
            self.registry,
            data_dir=config.data_dir,
            known_concepts=[c.uri for c in self.ontology.concepts],
        )
        self.gateway: Optional[Gateway] = None
        if config.federation_file and config.federation_file.exists():
            self.gateway = load_gateway(config.federation_file)

    def save_registry(self) -> None:
        self.config.registry_file.parent.mkdir(parents=True, exist_ok=True)
        self.registry.save(self.config.registry_file)

    def save_ontology(self) -> None:
        self.config.ontology_file.parent.mkdir(parents=True, exist_ok=True)
        self.ontology.save(self.config.ontology_file)
        self.store.known_concepts = {c.uri for c in self.ontology.concepts}

    def require_gateway(self) -> Gateway:
        if self.gateway is None:
            self.gateway = build_demo_gateway()
        return self.gateway


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="clinfed", version=__version__)
    state = EngineState(config)
    app.state.engine = state

    @app.exception_handler(DomainError)
    async def domain_error_handler(request: Request, exc: DomainError):
        return JSONResponse(
            status_code=400, content={"error": exc.code, "detail": exc.detail}
        )

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=400, content={"error": "InvalidValue", "detail": str(exc)}
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    # -- metadata --------------------------------------------------------------

    @app.post("/metadata/define", response_model=schemas.DefineMetadataResponse)
    def metadata_define(req: schemas.DefineMetadataRequest):
        counts = state.registry.merge_dict(req.model_dump())
        state.save_registry()
        return schemas.DefineMetadataResponse(defined=counts)

    @app.get("/metadata", response_model=schemas.RegistryResponse)
    def metadata_list():
        return schemas.RegistryResponse(**state.registry.to_dict())

    # -- ontology --------------------------------------------------------------

    @app.post("/ontology/load", response_model=schemas.OntologyLoadResponse)
    def ontology_load(req: schemas.OntologyLoadRequest):
        state.ontology = Ontology.from_text(req.text)
        state.save_ontology()
        return schemas.OntologyLoadResponse(
            concepts=len(state.ontology.concepts),
            relations=len(state.ontology.relations),
        )

    @app.post("/ontology/fragment", response_model=schemas.FragmentResponse)
    def ontology_fragment(req: schemas.FragmentRequest):
        fragment = state.ontology.extract_fragment(req.roots, req.depth)
        return schemas.FragmentResponse(
            text=fragment.to_text(),
            concepts=len(fragment.concepts),
            relations=len(fragment.relations),
        )

    @app.post(
        "/ontology/discover-mappings",
        response_model=schemas.DiscoverMappingsResponse,
    )
    def ontology_discover(req: schemas.DiscoverMappingsRequest):
        shared = (
            {k: set(v) for k, v in req.shared_instances.items()}
            if req.shared_instances is not None
            else None
        )
        mappings = discover_mappings(
            Ontology.from_text(req.local_text),
            Ontology.from_text(req.global_text),
            shared_instances=shared,
            threshold=Decimal(req.threshold),
        )
        return schemas.DiscoverMappingsResponse(
            mappings=[
                schemas.MappingModel(
                    local_uri=m.local_uri,
                    global_uri=m.global_uri,
                    confidence=str(m.confidence),
                    method=m.method,
                )
                for m in mappings
            ]
        )

    @app.post("/ontology/similarity", response_model=schemas.SimilarityResponse)
    def ontology_similarity(req: schemas.SimilarityRequest):
        counts = (
            req.annotation_counts
            if req.annotation_counts is not None
            else state.store.stats.concept_counts
        )
        value = resnik_similarity(state.ontology, req.a, req.b, counts)
        return schemas.SimilarityResponse(a=req.a, b=req.b, similarity=value)

    # -- data --------------------------------------------------------------------

    @app.post("/data/ingest-csv", response_model=schemas.IngestCsvResponse)
    def data_ingest_csv(req: schemas.IngestCsvRequest):
        mapping = IngestMapping.from_dict(req.mapping)
        report = state.store.ingest_csv(req.csv_text, mapping)
        return schemas.IngestCsvResponse(**report.as_dict())

    @app.post("/data/ingest-dicom", response_model=schemas.IngestDicomResponse)
    def data_ingest_dicom(req: schemas.IngestDicomRequest):
        dicom_id = state.store.ingest_dicom_sidecar(req.sidecar_text, req.dicom_id)
        return schemas.IngestDicomResponse(
            dicom_id=dicom_id, tags=len(state.store.dicom[dicom_id].tags)
        )

    @app.get(
        "/data/series/{study_id}/{series_id}",
        response_model=schemas.AssembleSeriesResponse,
    )
    def data_series(study_id: str, series_id: str):
        series = state.store.assemble_series(study_id, series_id)
        return schemas.AssembleSeriesResponse(
            study_id=series.study_id,
            series_id=series.series_id,
            members=list(series.members),
        )

    @app.get("/data/view/{patient}", response_model=schemas.LongitudinalViewResponse)
    def data_view(patient: str, levels: Optional[str] = None):
        if levels:
            wanted = [VerticalLevel.from_label(l) for l in levels.split(",")]
        else:
            wanted = list(VerticalLevel)
        view = state.store.longitudinal_view(patient, wanted)
        out: dict[str, list[schemas.TimelineEvent]] = {}
        for level, events in view.items():
            out[level.label] = []
            for e in events:
                resolved = state.store.resolve_event_time(e)
                start = (
                    resolved.start.isoformat()
                    if not isinstance(resolved, Unresolvable) and resolved.start
                    else None
                )
                out[level.label].append(
                    schemas.TimelineEvent(
                        event_id=e.event_id,
                        event_type=e.event_type,
                        kind=e.kind,
                        time_start=start,
                        variables=[
                            [cv.cvt_id, cv.payload.category.value]
                            for cv in e.variables
                        ],
                    )
                )
        return schemas.LongitudinalViewResponse(patient=patient, levels=out)

    # -- query ---------------------------------------------------------------------

    @app.post("/query", response_model=schemas.QueryResponse)
    def query_run(req: schemas.QueryRequest):
        query = parse(req.text)
        if req.enhance:
            query = enhance(query, state.ontology)
        plan = optimize(query, state.store.stats)
        rows = execute(plan, state.store)
        resp = schemas.QueryResponse(
            rows=[schemas.RowModel(**r.as_dict()) for r in rows]
        )
        if req.explain:
            resp.enhanced_query = pretty_print(query)
            resp.plan = [schemas.PlanStep(**step) for step in plan.explain()]
        return resp

    # -- federation -------------------------------------------------------------------

    @app.get("/federation/nodes", response_model=schemas.NodesResponse)
    def federation_nodes():
        return schemas.NodesResponse(nodes=state.require_gateway().node_ids())

    @app.post("/federation/query", response_model=schemas.FederatedQueryResponse)
    def federation_query(req: schemas.FederatedQueryRequest):
        gateway = state.require_gateway()
        for node_id in req.fail:
            gateway.inject_fault(node_id, Fault("Unreachable"))
        for node_id, ms in req.slow.items():
            gateway.inject_fault(node_id, Fault("SlowBy", ms))
        try:
            result = gateway.federated_execute(
                parse(req.text), expand_concepts=req.enhance
            )
        finally:
            for node_id in list(req.fail) + list(req.slow):
                gateway.clear_fault(node_id)
        return schemas.FederatedQueryResponse(
            rows=[schemas.RowModel(**r.as_dict()) for r in result.rows],
            partial=result.partial,
            unreachable=result.unreachable,
            dropped_predicates=[list(d) for d in result.dropped_predicates],
        )

    @app.post("/federation/demo", response_model=schemas.FederatedQueryResponse)
    def federation_demo(req: Optional[schemas.FederatedQueryRequest] = None):
        state.gateway = build_demo_gateway()
        body = req or schemas.FederatedQueryRequest(text=DEMO_QUERY)
        if not body.text:
            body.text = DEMO_QUERY
        return federation_query(body)

    return app
