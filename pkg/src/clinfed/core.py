"""Data-layer domain types: patients, visits, medical events, clinical
variables and the three-form time model.

All types here are immutable value objects; storage, validation and
serialization live in their own modules.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from decimal import Decimal
from enum import Enum
from typing import Callable, Optional, Union

from .errors import RelativeTimeCycle


class Sex(str, Enum):
    MALE = "Male"
    FEMALE = "Female"
    UNKNOWN = "Unknown"


class VerticalLevel(int, Enum):
    """Granularity levels, totally ordered from Molecular up to Population."""

    MOLECULAR = 1
    CELLULAR = 2
    TISSUE = 3
    ORGAN = 4
    BODY = 5
    POPULATION = 6

    @property
    def label(self) -> str:
        return _LEVEL_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "VerticalLevel":
        for level, name in _LEVEL_LABELS.items():
            if name == label:
                return level
        raise ValueError(f"unknown vertical level: {label!r}")


_LEVEL_LABELS = {
    VerticalLevel.MOLECULAR: "Molecular",
    VerticalLevel.CELLULAR: "Cellular",
    VerticalLevel.TISSUE: "Tissue",
    VerticalLevel.ORGAN: "Organ",
    VerticalLevel.BODY: "Body",
    VerticalLevel.POPULATION: "Population",
}


class Category(str, Enum):
    """The seven clinical-variable categories; every payload belongs to
    exactly one."""

    MEASUREMENT = "Measurement"
    ANNOTATION = "Annotation"
    CLASSIFICATION = "ObservationByClassification"
    DICOM_DATA = "DICOMData"
    DICOM_SERIES = "DICOMSeries"
    EXTERNAL_RESOURCE = "ExternalResource"
    CONCEPT_INSTANCE = "MedicalConceptInstance"


# -- payloads ------------------------------------------------------------------

_TAG_RE = re.compile(r"^[0-9A-Fa-f]{8}$")


@dataclass(frozen=True)
class Measurement:
    value: Decimal
    unit: str
    category = Category.MEASUREMENT

    def __post_init__(self):
        if not self.unit:
            raise ValueError("a measurement without a unit is unrepresentable")


@dataclass(frozen=True)
class Annotation:
    text: str
    attached_to: Optional[str] = None
    category = Category.ANNOTATION


@dataclass(frozen=True)
class ObservationByClassification:
    item: str
    category = Category.CLASSIFICATION


@dataclass(frozen=True)
class DICOMData:
    """Extracted tag/value pairs; tags are 4-hex group + 4-hex element."""

    tags: tuple[tuple[str, str], ...]
    category = Category.DICOM_DATA

    def __post_init__(self):
        for tag, _ in self.tags:
            if not _TAG_RE.match(tag):
                raise ValueError(f"not an 8-hex-digit DICOM tag: {tag!r}")

    def tag(self, name: str) -> Optional[str]:
        for tag, value in self.tags:
            if tag.upper() == name.upper():
                return value
        return None


@dataclass(frozen=True)
class DICOMSeries:
    members: tuple[str, ...]
    study_id: str
    series_id: str
    category = Category.DICOM_SERIES


@dataclass(frozen=True)
class ExternalResource:
    uri: str
    category = Category.EXTERNAL_RESOURCE


@dataclass(frozen=True)
class MedicalConceptInstance:
    concept_uri: str
    category = Category.CONCEPT_INSTANCE


Payload = Union[
    Measurement,
    Annotation,
    ObservationByClassification,
    DICOMData,
    DICOMSeries,
    ExternalResource,
    MedicalConceptInstance,
]


@dataclass(frozen=True)
class ClinicalVariable:
    """One atomic datum, typed by a ClinicalVariableType id."""

    cvt_id: str
    payload: Payload


# -- record hierarchy ----------------------------------------------------------

@dataclass(frozen=True)
class PatientRecord:
    pseudonym: str
    sex: Sex = Sex.UNKNOWN
    birth_date: Optional[date] = None
    demographics: tuple[tuple[str, str], ...] = ()
    family_history: str = ""

    def __post_init__(self):
        if not self.pseudonym:
            raise ValueError("pseudonym must be non-empty")


VISIT_PURPOSES = ("Baseline", "FollowUp", "Emergency")
EVENT_KINDS = ("Examination", "Diagnosis", "Treatment")


@dataclass(frozen=True)
class Visit:
    """One patient visit; the context/purpose for its medical events.

    ``purpose`` is one of VISIT_PURPOSES or any other string (= Other).
    """

    visit_id: str
    patient: str
    purpose: str
    date: date
    events: tuple[str, ...] = ()


# -- time model ----------------------------------------------------------------

class TimeRelation(str, Enum):
    BEFORE = "Before"
    AFTER = "After"
    DURING = "During"


@dataclass(frozen=True)
class Instant:
    date: date


@dataclass(frozen=True)
class Interval:
    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("interval start must not exceed end")


@dataclass(frozen=True)
class RelativeTo:
    anchor_event: str
    relation: TimeRelation
    offset_days: Optional[int] = None


TimeRef = Union[Instant, Interval, RelativeTo]


@dataclass(frozen=True)
class MedicalEvent:
    """Something that happened to the patient, recorded within a visit.

    ``kind`` is one of EVENT_KINDS or any other string (= Other).
    """

    event_id: str
    event_type: str
    visit: str
    time: TimeRef
    variables: tuple[ClinicalVariable, ...] = ()
    kind: str = "Examination"


@dataclass(frozen=True)
class ResolvedTime:
    """A (possibly half-open) interval of dates; None means unbounded."""

    start: Optional[date]
    end: Optional[date]

    def overlaps(self, window_start: date, window_end: date) -> bool:
        if self.start is not None and self.start > window_end:
            return False
        if self.end is not None and self.end < window_start:
            return False
        return True


class Unresolvable:
    """Sentinel: the event's time cannot be pinned to any interval."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Unresolvable"


UNRESOLVABLE = Unresolvable()


def resolve_time(
    event: MedicalEvent,
    store_lookup: Callable[[str], Optional[MedicalEvent]],
) -> Union[ResolvedTime, Unresolvable]:
    """Resolve an event's time reference to an interval of dates.

    Relative references chase their anchor recursively; a missing anchor
    yields UNRESOLVABLE, a revisited one raises RelativeTimeCycle.
    """
    return _resolve(event, store_lookup, {event.event_id})


def _resolve(event, lookup, seen):
    ref = event.time
    if isinstance(ref, Instant):
        return ResolvedTime(ref.date, ref.date)
    if isinstance(ref, Interval):
        return ResolvedTime(ref.start, ref.end)

    anchor_id = ref.anchor_event
    if anchor_id in seen:
        raise RelativeTimeCycle(f"anchor chain revisits event {anchor_id!r}")
    anchor = lookup(anchor_id)
    if anchor is None:
        return UNRESOLVABLE
    base = _resolve(anchor, lookup, seen | {anchor_id})
    if base is UNRESOLVABLE:
        return UNRESOLVABLE

    shift = timedelta(days=ref.offset_days or 0)
    start = base.start + shift if base.start is not None else None
    end = base.end + shift if base.end is not None else None
    if ref.relation is TimeRelation.BEFORE:
        return ResolvedTime(None, start)
    if ref.relation is TimeRelation.AFTER:
        return ResolvedTime(end, None)
    return ResolvedTime(start, end)
