"""Persistent, validated record store for one node (hospital).

Persistence is line-delimited JSON, one file per collection
(patients/visits/events/dicom), with canonical serialization so that
serialize -> deserialize -> serialize is byte-identical. Single writer,
snapshot readers.
"""

from __future__ import annotations

import csv
import io
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

from .core import (
    Annotation,
    Category,
    ClinicalVariable,
    DICOMData,
    DICOMSeries,
    ExternalResource,
    Instant,
    Interval,
    Measurement,
    MedicalConceptInstance,
    MedicalEvent,
    ObservationByClassification,
    PatientRecord,
    RelativeTo,
    ResolvedTime,
    Sex,
    TimeRelation,
    TimeRef,
    UNRESOLVABLE,
    Unresolvable,
    VerticalLevel,
    Visit,
    resolve_time,
)
from .errors import (
    EmptySeries,
    MalformedCSV,
    MalformedTag,
    MappingError,
    UnknownPatient,
    UnknownVisit,
    ValidationFailed,
)
from .registry import Registry, ValidationReport, Violation, ViolationCode

# well-known DICOM tags used for series assembly
TAG_PATIENT_ID = "00100020"
TAG_STUDY_UID = "0020000D"
TAG_SERIES_UID = "0020000E"
TAG_INSTANCE_NUMBER = "00200013"


# -- serialization (canonical, diff-able) ------------------------------------------

def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def payload_to_dict(payload) -> dict:
    if isinstance(payload, Measurement):
        return {"kind": "Measurement", "value": str(payload.value), "unit": payload.unit}
    if isinstance(payload, Annotation):
        return {
            "kind": "Annotation",
            "text": payload.text,
            "attached_to": payload.attached_to,
        }
    if isinstance(payload, ObservationByClassification):
        return {"kind": "ObservationByClassification", "item": payload.item}
    if isinstance(payload, DICOMData):
        return {"kind": "DICOMData", "tags": [list(t) for t in payload.tags]}
    if isinstance(payload, DICOMSeries):
        return {
            "kind": "DICOMSeries",
            "members": list(payload.members),
            "study_id": payload.study_id,
            "series_id": payload.series_id,
        }
    if isinstance(payload, ExternalResource):
        return {"kind": "ExternalResource", "uri": payload.uri}
    if isinstance(payload, MedicalConceptInstance):
        return {"kind": "MedicalConceptInstance", "concept_uri": payload.concept_uri}
    raise TypeError(f"not a payload: {payload!r}")


def payload_from_dict(d: dict):
    kind = d["kind"]
    if kind == "Measurement":
        return Measurement(Decimal(d["value"]), d["unit"])
    if kind == "Annotation":
        return Annotation(d["text"], d.get("attached_to"))
    if kind == "ObservationByClassification":
        return ObservationByClassification(d["item"])
    if kind == "DICOMData":
        return DICOMData(tuple((t[0], t[1]) for t in d["tags"]))
    if kind == "DICOMSeries":
        return DICOMSeries(tuple(d["members"]), d["study_id"], d["series_id"])
    if kind == "ExternalResource":
        return ExternalResource(d["uri"])
    if kind == "MedicalConceptInstance":
        return MedicalConceptInstance(d["concept_uri"])
    raise ValueError(f"unknown payload kind {kind!r}")


def time_to_dict(ref: TimeRef) -> dict:
    if isinstance(ref, Instant):
        return {"instant": ref.date.isoformat()}
    if isinstance(ref, Interval):
        return {"interval": {"start": ref.start.isoformat(), "end": ref.end.isoformat()}}
    return {
        "relative_to": {
            "anchor_event": ref.anchor_event,
            "relation": ref.relation.value,
            "offset_days": ref.offset_days,
        }
    }


def time_from_dict(d: dict) -> TimeRef:
    if "instant" in d:
        return Instant(date.fromisoformat(d["instant"]))
    if "interval" in d:
        iv = d["interval"]
        return Interval(date.fromisoformat(iv["start"]), date.fromisoformat(iv["end"]))
    rt = d["relative_to"]
    return RelativeTo(rt["anchor_event"], TimeRelation(rt["relation"]), rt["offset_days"])


def variable_to_dict(cv: ClinicalVariable) -> dict:
    return {"cvt_id": cv.cvt_id, "payload": payload_to_dict(cv.payload)}


def variable_from_dict(d: dict) -> ClinicalVariable:
    return ClinicalVariable(d["cvt_id"], payload_from_dict(d["payload"]))


def patient_to_dict(p: PatientRecord) -> dict:
    return {
        "pseudonym": p.pseudonym,
        "sex": p.sex.value,
        "birth_date": p.birth_date.isoformat() if p.birth_date else None,
        "demographics": [list(kv) for kv in p.demographics],
        "family_history": p.family_history,
    }


def patient_from_dict(d: dict) -> PatientRecord:
    return PatientRecord(
        pseudonym=d["pseudonym"],
        sex=Sex(d["sex"]),
        birth_date=date.fromisoformat(d["birth_date"]) if d["birth_date"] else None,
        demographics=tuple((kv[0], kv[1]) for kv in d["demographics"]),
        family_history=d["family_history"],
    )


def visit_to_dict(v: Visit) -> dict:
    return {
        "visit_id": v.visit_id,
        "patient": v.patient,
        "purpose": v.purpose,
        "date": v.date.isoformat(),
        "events": list(v.events),
    }


def visit_from_dict(d: dict) -> Visit:
    return Visit(
        visit_id=d["visit_id"],
        patient=d["patient"],
        purpose=d["purpose"],
        date=date.fromisoformat(d["date"]),
        events=tuple(d["events"]),
    )


def event_to_dict(e: MedicalEvent) -> dict:
    return {
        "event_id": e.event_id,
        "event_type": e.event_type,
        "visit": e.visit,
        "time": time_to_dict(e.time),
        "variables": [variable_to_dict(cv) for cv in e.variables],
        "kind": e.kind,
    }


def event_from_dict(d: dict) -> MedicalEvent:
    return MedicalEvent(
        event_id=d["event_id"],
        event_type=d["event_type"],
        visit=d["visit"],
        time=time_from_dict(d["time"]),
        variables=tuple(variable_from_dict(v) for v in d["variables"]),
        kind=d["kind"],
    )


# -- statistics ----------------------------------------------------------------

class StoreStats:
    """Eagerly maintained per-CVT counts, consumed by query optimization."""

    def __init__(self):
        self.total_events = 0
        self.cvt_counts: dict[str, int] = {}
        self.cvt_values: dict[str, set] = {}
        self.met_counts: dict[str, int] = {}
        self.concept_counts: dict[str, int] = {}

    def observe_event(self, event: MedicalEvent) -> None:
        self.total_events += 1
        self.met_counts[event.event_type] = self.met_counts.get(event.event_type, 0) + 1
        for cv in event.variables:
            self.cvt_counts[cv.cvt_id] = self.cvt_counts.get(cv.cvt_id, 0) + 1
            key = _value_key(cv)
            if key is not None:
                self.cvt_values.setdefault(cv.cvt_id, set()).add(key)
            if isinstance(cv.payload, MedicalConceptInstance):
                uri = cv.payload.concept_uri
                self.concept_counts[uri] = self.concept_counts.get(uri, 0) + 1

    def distinct(self, cvt_id: str) -> int:
        return len(self.cvt_values.get(cvt_id, ()))

    def count(self, cvt_id: str) -> int:
        return self.cvt_counts.get(cvt_id, 0)


def _value_key(cv: ClinicalVariable):
    p = cv.payload
    if isinstance(p, Measurement):
        return str(p.value)
    if isinstance(p, ObservationByClassification):
        return p.item
    if isinstance(p, MedicalConceptInstance):
        return p.concept_uri
    return None


# -- ingest mapping ---------------------------------------------------------------

@dataclass(frozen=True)
class ColumnRule:
    cvt_id: str
    category: Category


@dataclass(frozen=True)
class IngestMapping:
    patient_column: str
    visit_date_column: str
    event_type: str
    columns: tuple[tuple[str, ColumnRule], ...]  # csv column -> rule

    @classmethod
    def from_dict(cls, d: dict) -> "IngestMapping":
        try:
            cols = tuple(
                (col, ColumnRule(rule["cvt_id"], Category(rule["category"])))
                for col, rule in d["columns"].items()
            )
            return cls(
                patient_column=d["patient_column"],
                visit_date_column=d["visit_date_column"],
                event_type=d["event_type"],
                columns=cols,
            )
        except (KeyError, ValueError) as e:
            raise MappingError(str(e)) from None


@dataclass
class IngestReport:
    rows_ok: int = 0
    rows_rejected: int = 0
    violations: dict[str, int] = field(default_factory=dict)
    rejected_lines: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "rows_ok": self.rows_ok,
            "rows_rejected": self.rows_rejected,
            "violations": dict(sorted(self.violations.items())),
            "rejected_lines": self.rejected_lines,
        }


# -- the store ----------------------------------------------------------------

class NodeStore:
    """One hospital's validated record store."""

    FILES = ("patients", "visits", "events", "dicom")

    def __init__(
        self,
        node_id: str,
        registry: Registry,
        data_dir: Optional[Union[str, Path]] = None,
        known_concepts: Optional[Iterable[str]] = None,
    ):
        self.node_id = node_id
        self.registry = registry
        self.data_dir = Path(data_dir) if data_dir else None
        self.known_concepts = set(known_concepts) if known_concepts is not None else None
        self._lock = threading.RLock()
        self.patients: dict[str, PatientRecord] = {}
        self.visits: dict[str, Visit] = {}
        self.events: dict[str, MedicalEvent] = {}
        self.dicom: dict[str, DICOMData] = {}
        self.stats = StoreStats()
        self._event_order: list[str] = []
        if self.data_dir and (self.data_dir / "events.jsonl").exists():
            self._load()

    # -- writes ----------------------------------------------------------------

    def add_patient(self, patient: PatientRecord) -> str:
        with self._lock:
            self.patients[patient.pseudonym] = patient
            self._persist("patients")
            return patient.pseudonym

    def add_visit(self, visit: Visit) -> str:
        with self._lock:
            if visit.patient not in self.patients:
                raise UnknownPatient(visit.patient)
            patient = self.patients[visit.patient]
            if patient.birth_date and visit.date < patient.birth_date:
                raise ValueError("visit precedes patient birth date")
            self.visits[visit.visit_id] = visit
            self._persist("visits")
            return visit.visit_id

    def record_event(self, event: MedicalEvent) -> str:
        """Store an event iff every variable validates; all-or-nothing."""
        with self._lock:
            if event.visit not in self.visits:
                raise UnknownVisit(event.visit)
            violations = []
            if self.registry.met(event.event_type) is None:
                violations.append(
                    Violation(
                        ViolationCode.EVENT_TYPE_MISMATCH,
                        f"event type {event.event_type!r} is not defined",
                    )
                )
            for cv in event.variables:
                report = self.registry.validate_variable(
                    cv, event.event_type, self.known_concepts
                )
                violations.extend(report.violations)
            if violations:
                raise ValidationFailed(ValidationReport(tuple(violations)))
            # reject relative-time cycles up front
            resolve_time(event, lambda eid: self.events.get(eid))
            self.events[event.event_id] = event
            self._event_order.append(event.event_id)
            visit = self.visits[event.visit]
            if event.event_id not in visit.events:
                self.visits[event.visit] = Visit(
                    visit.visit_id,
                    visit.patient,
                    visit.purpose,
                    visit.date,
                    visit.events + (event.event_id,),
                )
            self.stats.observe_event(event)
            self._persist("events")
            self._persist("visits")
            return event.event_id

    # -- CSV ingestion ------------------------------------------------------------

    def ingest_csv(self, text: str, mapping: IngestMapping) -> IngestReport:
        """One event per row; bad rows are rejected row-atomically and
        counted by violation code."""
        self._check_mapping(mapping)
        try:
            reader = csv.DictReader(io.StringIO(text))
            fieldnames = reader.fieldnames
        except csv.Error as e:
            raise MalformedCSV(str(e)) from None
        if not fieldnames:
            raise MalformedCSV("missing header row")
        for needed in (mapping.patient_column, mapping.visit_date_column):
            if needed not in fieldnames:
                raise MappingError(f"column {needed!r} not in CSV header")

        report = IngestReport()
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise MalformedCSV(f"line {lineno}: ragged row")
            try:
                self._ingest_row(row, mapping, lineno)
                report.rows_ok += 1
            except ValidationFailed as e:
                report.rows_rejected += 1
                report.rejected_lines.append(lineno)
                for v in e.report.violations:
                    code = v.code.value
                    report.violations[code] = report.violations.get(code, 0) + 1
            except (ValueError, InvalidOperation):
                report.rows_rejected += 1
                report.rejected_lines.append(lineno)
                report.violations["ParseError"] = report.violations.get("ParseError", 0) + 1
        return report

    def _check_mapping(self, mapping: IngestMapping) -> None:
        for _, rule in mapping.columns:
            if self.registry.cvt(rule.cvt_id) is None:
                raise MappingError(f"mapped CVT {rule.cvt_id!r} is not defined")
        if self.registry.met(mapping.event_type) is None:
            raise MappingError(f"event type {mapping.event_type!r} is not defined")

    def _ingest_row(self, row: dict, mapping: IngestMapping, lineno: int) -> None:
        pseudonym = row[mapping.patient_column].strip()
        if not pseudonym:
            raise ValueError(f"line {lineno}: empty patient key")
        visit_date = date.fromisoformat(row[mapping.visit_date_column].strip())
        if pseudonym not in self.patients:
            self.add_patient(PatientRecord(pseudonym=pseudonym))
        visit_id = f"{pseudonym}-{visit_date.isoformat()}"
        if visit_id not in self.visits:
            self.add_visit(Visit(visit_id, pseudonym, "Other", visit_date))
        variables = []
        for col, rule in mapping.columns:
            raw = row.get(col, "").strip()
            if not raw:
                continue
            variables.append(ClinicalVariable(rule.cvt_id, self._parse_cell(raw, rule)))
        event_id = f"{visit_id}-{mapping.event_type}-L{lineno}"
        self.record_event(
            MedicalEvent(
                event_id=event_id,
                event_type=mapping.event_type,
                visit=visit_id,
                time=Instant(visit_date),
                variables=tuple(variables),
            )
        )

    def _parse_cell(self, raw: str, rule: ColumnRule):
        if rule.category is Category.MEASUREMENT:
            cvt = self.registry.cvt(rule.cvt_id)
            return Measurement(Decimal(raw), cvt.unit if cvt and cvt.unit else "?")
        if rule.category is Category.CLASSIFICATION:
            return ObservationByClassification(raw)
        if rule.category is Category.ANNOTATION:
            return Annotation(raw)
        if rule.category is Category.EXTERNAL_RESOURCE:
            return ExternalResource(raw)
        if rule.category is Category.CONCEPT_INSTANCE:
            return MedicalConceptInstance(raw)
        raise MappingError(f"category {rule.category.value} not ingestable from CSV")

    # -- DICOM sidecars --------------------------------------------------------

    def ingest_dicom_sidecar(self, text: str, dicom_id: Optional[str] = None) -> str:
        """Parse a GGGGEEEE=value sidecar into a stored DICOMData object."""
        tags = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MalformedTag(f"line {lineno}: no '=' in {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if not re.fullmatch(r"[0-9A-Fa-f]{8}", key):
                raise MalformedTag(f"line {lineno}: {key!r} is not an 8-hex-digit tag")
            tags.append((key, value.strip()))
        data = DICOMData(tuple(tags))
        with self._lock:
            if dicom_id is None:
                dicom_id = f"dcm-{len(self.dicom) + 1:06d}"
            self.dicom[dicom_id] = data
            self._persist("dicom")
        return dicom_id

    def assemble_series(self, study_id: str, series_id: str) -> DICOMSeries:
        """Group stored DICOMData sharing (study, series), ordered by
        instance number."""
        members = []
        for did, data in self.dicom.items():
            if data.tag(TAG_STUDY_UID) == study_id and data.tag(TAG_SERIES_UID) == series_id:
                raw = data.tag(TAG_INSTANCE_NUMBER)
                try:
                    instance = int(raw) if raw is not None else 0
                except ValueError:
                    instance = 0
                members.append((instance, did))
        if not members:
            raise EmptySeries(f"no DICOM objects for ({study_id}, {series_id})")
        members.sort()
        return DICOMSeries(tuple(did for _, did in members), study_id, series_id)

    # -- views -----------------------------------------------------------------

    def resolve_event_time(self, event: MedicalEvent):
        return resolve_time(event, lambda eid: self.events.get(eid))

    def longitudinal_view(
        self, pseudonym: str, levels: Iterable[VerticalLevel]
    ) -> dict[VerticalLevel, list[MedicalEvent]]:
        """Patient timeline grouped by vertical level, ordered by resolved
        time; unresolvable times last, stable by insertion order."""
        if pseudonym not in self.patients:
            raise UnknownPatient(pseudonym)
        levels = set(levels)
        grouped: dict[VerticalLevel, list[tuple]] = {}
        for idx, event_id in enumerate(self._event_order):
            event = self.events[event_id]
            visit = self.visits.get(event.visit)
            if visit is None or visit.patient != pseudonym:
                continue
            met = self.registry.met(event.event_type)
            level = met.vertical_level if met else VerticalLevel.BODY
            if level not in levels:
                continue
            resolved = self.resolve_event_time(event)
            if isinstance(resolved, Unresolvable):
                key = (1, date.max, idx)
            else:
                key = (0, resolved.start or date.min, idx)
            grouped.setdefault(level, []).append((key, event))
        return {
            level: [e for _, e in sorted(entries, key=lambda t: t[0])]
            for level, entries in grouped.items()
        }

    def events_of_patient(self, pseudonym: str) -> list[MedicalEvent]:
        return [
            self.events[eid]
            for eid in self._event_order
            if self.visits[self.events[eid].visit].patient == pseudonym
        ]

    def patient_of_event(self, event: MedicalEvent) -> Optional[PatientRecord]:
        visit = self.visits.get(event.visit)
        return self.patients.get(visit.patient) if visit else None

    def revalidate_all(self) -> list[ValidationReport]:
        """Re-check every stored variable; a healthy store yields no
        violations."""
        reports = []
        for eid in self._event_order:
            event = self.events[eid]
            for cv in event.variables:
                report = self.registry.validate_variable(
                    cv, event.event_type, self.known_concepts
                )
                if not report.valid:
                    reports.append(report)
        return reports

    # -- persistence -----------------------------------------------------------

    def serialize(self) -> dict[str, str]:
        """Canonical JSONL text per collection."""
        return {
            "patients": _jsonl(patient_to_dict(p) for p in self.patients.values()),
            "visits": _jsonl(visit_to_dict(v) for v in self.visits.values()),
            "events": _jsonl(event_to_dict(self.events[eid]) for eid in self._event_order),
            "dicom": _jsonl(
                {"dicom_id": did, "data": payload_to_dict(d)}
                for did, d in self.dicom.items()
            ),
        }

    def _persist(self, which: str) -> None:
        if self.data_dir is None:
            return
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / f"{which}.jsonl").write_text(
            self.serialize()[which], encoding="utf-8"
        )

    def save_all(self) -> None:
        for which in self.FILES:
            self._persist(which)

    def _load(self) -> None:
        texts = {
            which: (self.data_dir / f"{which}.jsonl").read_text(encoding="utf-8")
            if (self.data_dir / f"{which}.jsonl").exists()
            else ""
            for which in self.FILES
        }
        self.load_serialized(texts)

    def load_serialized(self, texts: dict[str, str]) -> None:
        for line in texts.get("patients", "").splitlines():
            p = patient_from_dict(json.loads(line))
            self.patients[p.pseudonym] = p
        for line in texts.get("visits", "").splitlines():
            v = visit_from_dict(json.loads(line))
            self.visits[v.visit_id] = v
        for line in texts.get("events", "").splitlines():
            e = event_from_dict(json.loads(line))
            self.events[e.event_id] = e
            self._event_order.append(e.event_id)
            self.stats.observe_event(e)
        for line in texts.get("dicom", "").splitlines():
            d = json.loads(line)
            self.dicom[d["dicom_id"]] = payload_from_dict(d["data"])


def _jsonl(dicts: Iterable[dict]) -> str:
    lines = [_dumps(d) for d in dicts]
    return "\n".join(lines) + ("\n" if lines else "")
