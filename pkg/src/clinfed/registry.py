"""Metadata layer: clinical-variable types, medical-event types, units and
classifications, plus validation of variables against them.

The registry enforces the metadata-before-data rule: no variable is stored
unless its type was defined first. Evolution is strictly monotone — ids are
never deleted, classifications only gain items, event types only gain
members — so replaying an evolved registry over old data never produces new
violations.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union

from .core import Category, ClinicalVariable, VerticalLevel
from .errors import (
    DanglingReference,
    DuplicateId,
    MissingClassification,
    MissingUnit,
    ShrinkingMemberSet,
    UnknownCVT,
)


@dataclass(frozen=True)
class Unit:
    symbol: str
    description: Optional[str] = None

    def __post_init__(self):
        if not self.symbol:
            raise ValueError("unit symbol must be non-empty")


@dataclass(frozen=True)
class Classification:
    name: str
    items: tuple[str, ...]

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("a classification needs at least 2 items")
        if len(set(self.items)) != len(self.items) or not all(self.items):
            raise ValueError("classification items must be distinct and non-empty")


@dataclass(frozen=True)
class ClinicalVariableType:
    id: str
    name: str
    category: Category
    unit: Optional[str] = None
    classification: Optional[str] = None
    vertical_level: VerticalLevel = VerticalLevel.BODY

    def __post_init__(self):
        if not self.id or not self.name:
            raise ValueError("CVT id and name must be non-empty")


@dataclass(frozen=True)
class MedicalEventType:
    id: str
    name: str
    member_cvts: frozenset[str]
    vertical_level: VerticalLevel = VerticalLevel.BODY

    def __post_init__(self):
        if not self.member_cvts:
            raise ValueError("an event type needs a non-empty CVT member set")


class ViolationCode(Enum):
    UNKNOWN_TYPE = "UnknownType"
    CATEGORY_MISMATCH = "CategoryMismatch"
    UNIT_MISMATCH = "UnitMismatch"
    VALUE_NOT_IN_CLASSIFICATION = "ValueNotInClassification"
    MISSING_CLASSIFICATION = "MissingClassification"
    UNKNOWN_CONCEPT_URI = "UnknownConceptURI"
    EVENT_TYPE_MISMATCH = "EventTypeMismatch"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code.value for v in self.violations]


class Registry:
    """Thread-safe metadata registry. Writes are serialized; readers always
    see fully defined entries."""

    def __init__(self):
        self._lock = threading.RLock()
        self._units: dict[str, Unit] = {}
        self._classifications: dict[str, Classification] = {}
        self._cvts: dict[str, ClinicalVariableType] = {}
        self._mets: dict[str, MedicalEventType] = {}

    # -- definitions -----------------------------------------------------------

    def define_unit(self, unit: Unit) -> str:
        with self._lock:
            existing = self._units.get(unit.symbol)
            if existing is not None and existing != unit:
                raise DuplicateId(f"unit {unit.symbol!r}")
            self._units[unit.symbol] = unit
            return unit.symbol

    def define_classification(self, cls: Classification) -> str:
        with self._lock:
            existing = self._classifications.get(cls.name)
            if existing is not None:
                # redefinition may only append items
                if cls.items[: len(existing.items)] != existing.items:
                    raise ShrinkingMemberSet(
                        f"classification {cls.name!r} may only gain items"
                    )
            self._classifications[cls.name] = cls
            return cls.name

    def define_cvt(self, cvt: ClinicalVariableType) -> str:
        with self._lock:
            existing = self._cvts.get(cvt.id)
            if existing is not None:
                if existing != cvt:
                    raise DuplicateId(f"CVT {cvt.id!r}")
                return cvt.id
            if cvt.category is Category.MEASUREMENT:
                if not cvt.unit:
                    raise MissingUnit(f"CVT {cvt.id!r} measures without a unit")
                if cvt.unit not in self._units:
                    raise DanglingReference(f"unknown unit {cvt.unit!r}")
            if cvt.category is Category.CLASSIFICATION:
                if not cvt.classification:
                    raise MissingClassification(
                        f"CVT {cvt.id!r} classifies without a classification"
                    )
                if cvt.classification not in self._classifications:
                    raise DanglingReference(
                        f"unknown classification {cvt.classification!r}"
                    )
            self._cvts[cvt.id] = cvt
            return cvt.id

    def define_met(self, met: MedicalEventType) -> str:
        with self._lock:
            unknown = met.member_cvts - self._cvts.keys()
            if unknown:
                raise UnknownCVT(", ".join(sorted(unknown)))
            existing = self._mets.get(met.id)
            if existing is not None and not met.member_cvts >= existing.member_cvts:
                raise ShrinkingMemberSet(
                    f"MET {met.id!r} would lose members "
                    f"{sorted(existing.member_cvts - met.member_cvts)}"
                )
            self._mets[met.id] = met
            return met.id

    # -- lookups ---------------------------------------------------------------

    def unit(self, symbol: str) -> Optional[Unit]:
        return self._units.get(symbol)

    def classification(self, name: str) -> Optional[Classification]:
        return self._classifications.get(name)

    def cvt(self, cvt_id: str) -> Optional[ClinicalVariableType]:
        return self._cvts.get(cvt_id)

    def cvt_by_name(self, name: str) -> Optional[ClinicalVariableType]:
        for cvt in self._cvts.values():
            if cvt.name == name:
                return cvt
        return None

    def met(self, met_id: str) -> Optional[MedicalEventType]:
        return self._mets.get(met_id)

    @property
    def units(self) -> list[Unit]:
        return list(self._units.values())

    @property
    def classifications(self) -> list[Classification]:
        return list(self._classifications.values())

    @property
    def cvts(self) -> list[ClinicalVariableType]:
        return list(self._cvts.values())

    @property
    def mets(self) -> list[MedicalEventType]:
        return list(self._mets.values())

    # -- validation ------------------------------------------------------------

    def validate_variable(
        self,
        cv: ClinicalVariable,
        met_id: Optional[str] = None,
        known_concepts: Optional[Iterable[str]] = None,
    ) -> ValidationReport:
        """Check one variable against the registry; every violation is
        reported, none raises."""
        violations: list[Violation] = []
        cvt = self._cvts.get(cv.cvt_id)
        if cvt is None:
            violations.append(
                Violation(ViolationCode.UNKNOWN_TYPE, f"no CVT {cv.cvt_id!r}")
            )
            return ValidationReport(tuple(violations))

        if cv.payload.category is not cvt.category:
            violations.append(
                Violation(
                    ViolationCode.CATEGORY_MISMATCH,
                    f"{cv.cvt_id}: payload is {cv.payload.category.value}, "
                    f"CVT declares {cvt.category.value}",
                )
            )
        elif cvt.category is Category.MEASUREMENT:
            if cv.payload.unit != cvt.unit:
                violations.append(
                    Violation(
                        ViolationCode.UNIT_MISMATCH,
                        f"{cv.cvt_id}: got {cv.payload.unit!r}, want {cvt.unit!r}",
                    )
                )
        elif cvt.category is Category.CLASSIFICATION:
            cls = self._classifications.get(cvt.classification or "")
            if cls is None:
                violations.append(
                    Violation(
                        ViolationCode.MISSING_CLASSIFICATION,
                        f"{cv.cvt_id}: classification "
                        f"{cvt.classification!r} not registered",
                    )
                )
            elif cv.payload.item not in cls.items:
                violations.append(
                    Violation(
                        ViolationCode.VALUE_NOT_IN_CLASSIFICATION,
                        f"{cv.cvt_id}: {cv.payload.item!r} not in {cls.items}",
                    )
                )
        elif cvt.category is Category.CONCEPT_INSTANCE and known_concepts is not None:
            if cv.payload.concept_uri not in set(known_concepts):
                violations.append(
                    Violation(
                        ViolationCode.UNKNOWN_CONCEPT_URI,
                        f"{cv.cvt_id}: {cv.payload.concept_uri!r}",
                    )
                )

        if met_id is not None:
            met = self._mets.get(met_id)
            if met is None or cv.cvt_id not in met.member_cvts:
                violations.append(
                    Violation(
                        ViolationCode.EVENT_TYPE_MISMATCH,
                        f"{cv.cvt_id} not a member of event type {met_id!r}",
                    )
                )
        return ValidationReport(tuple(violations))

    # -- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "units": [
                {"symbol": u.symbol, "description": u.description}
                for u in self._units.values()
            ],
            "classifications": [
                {"name": c.name, "items": list(c.items)}
                for c in self._classifications.values()
            ],
            "cvts": [
                {
                    "id": c.id,
                    "name": c.name,
                    "category": c.category.value,
                    "unit": c.unit,
                    "classification": c.classification,
                    "vertical_level": c.vertical_level.label,
                }
                for c in self._cvts.values()
            ],
            "mets": [
                {
                    "id": m.id,
                    "name": m.name,
                    "member_cvts": sorted(m.member_cvts),
                    "vertical_level": m.vertical_level.label,
                }
                for m in self._mets.values()
            ],
        }

    def merge_dict(self, data: dict) -> dict[str, int]:
        """Apply a registry document on top of the current state; returns
        per-section counts."""
        counts = {"units": 0, "classifications": 0, "cvts": 0, "mets": 0}
        for u in data.get("units", []):
            self.define_unit(Unit(u["symbol"], u.get("description")))
            counts["units"] += 1
        for c in data.get("classifications", []):
            self.define_classification(Classification(c["name"], tuple(c["items"])))
            counts["classifications"] += 1
        for c in data.get("cvts", []):
            self.define_cvt(
                ClinicalVariableType(
                    id=c["id"],
                    name=c["name"],
                    category=Category(c["category"]),
                    unit=c.get("unit"),
                    classification=c.get("classification"),
                    vertical_level=VerticalLevel.from_label(
                        c.get("vertical_level", "Body")
                    ),
                )
            )
            counts["cvts"] += 1
        for m in data.get("mets", []):
            self.define_met(
                MedicalEventType(
                    id=m["id"],
                    name=m["name"],
                    member_cvts=frozenset(m["member_cvts"]),
                    vertical_level=VerticalLevel.from_label(
                        m.get("vertical_level", "Body")
                    ),
                )
            )
            counts["mets"] += 1
        return counts

    def save(self, path: Union[str, Path]) -> None:
        text = json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Registry":
        reg = cls()
        reg.merge_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        return reg
