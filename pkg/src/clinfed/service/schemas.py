"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ErrorResponse(BaseModel):
    error: str
    detail: str = ""


# -- metadata ---------------------------------------------------------------------

class DefineMetadataRequest(BaseModel):
    """Registry document: any subset of the four sections."""

    units: list[dict] = Field(default_factory=list)
    classifications: list[dict] = Field(default_factory=list)
    cvts: list[dict] = Field(default_factory=list)
    mets: list[dict] = Field(default_factory=list)


class DefineMetadataResponse(BaseModel):
    defined: dict[str, int]


class RegistryResponse(BaseModel):
    units: list[dict]
    classifications: list[dict]
    cvts: list[dict]
    mets: list[dict]


# -- ontology ---------------------------------------------------------------------

class OntologyLoadRequest(BaseModel):
    text: str


class OntologyLoadResponse(BaseModel):
    concepts: int
    relations: int


class FragmentRequest(BaseModel):
    roots: list[str]
    depth: int = 1


class FragmentResponse(BaseModel):
    text: str
    concepts: int
    relations: int


class DiscoverMappingsRequest(BaseModel):
    local_text: str
    global_text: str
    threshold: str = "0.5"
    shared_instances: Optional[dict[str, list[str]]] = None


class MappingModel(BaseModel):
    local_uri: str
    global_uri: str
    confidence: str
    method: str


class DiscoverMappingsResponse(BaseModel):
    mappings: list[MappingModel]


class SimilarityRequest(BaseModel):
    a: str
    b: str
    annotation_counts: Optional[dict[str, int]] = None  # default: store-derived


class SimilarityResponse(BaseModel):
    a: str
    b: str
    similarity: float


# -- data -------------------------------------------------------------------------

class IngestCsvRequest(BaseModel):
    csv_text: str
    mapping: dict


class IngestCsvResponse(BaseModel):
    rows_ok: int
    rows_rejected: int
    violations: dict[str, int]
    rejected_lines: list[int]


class IngestDicomRequest(BaseModel):
    sidecar_text: str
    dicom_id: Optional[str] = None


class IngestDicomResponse(BaseModel):
    dicom_id: str
    tags: int


class AssembleSeriesResponse(BaseModel):
    study_id: str
    series_id: str
    members: list[str]


class TimelineEvent(BaseModel):
    event_id: str
    event_type: str
    kind: str
    time_start: Optional[str]
    variables: list[list[str]]


class LongitudinalViewResponse(BaseModel):
    patient: str
    levels: dict[str, list[TimelineEvent]]


# -- query / federation --------------------------------------------------------------

class QueryRequest(BaseModel):
    text: str
    enhance: bool = True
    explain: bool = False


class RowModel(BaseModel):
    patient: str
    event_id: str
    event_type: str
    time_start: Optional[str]
    variables: list[list[str]]
    node_id: Optional[str] = None


class PlanStep(BaseModel):
    conjunct: str
    selectivity: float


class QueryResponse(BaseModel):
    rows: list[RowModel]
    enhanced_query: Optional[str] = None
    plan: Optional[list[PlanStep]] = None


class FederatedQueryRequest(BaseModel):
    text: str
    enhance: bool = True
    fail: list[str] = Field(default_factory=list)
    slow: dict[str, int] = Field(default_factory=dict)  # node_id -> ms


class FederatedQueryResponse(BaseModel):
    rows: list[RowModel]
    partial: bool
    unreachable: list[str]
    dropped_predicates: list[list[str]]


class NodesResponse(BaseModel):
    nodes: list[str]
