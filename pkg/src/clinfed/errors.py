"""Domain error hierarchy.

Every error carries a stable ``code`` string that surfaces verbatim on the
CLI and in service responses. Validation violations are *data* (see
``ValidationReport``), not exceptions; only contract breaches raise.
"""

from __future__ import annotations


class DomainError(Exception):
    """Base class for all domain-level failures."""

    code = "DomainError"

    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__(f"{self.code}: {detail}" if detail else self.code)


# -- core / time model --------------------------------------------------------

class RelativeTimeCycle(DomainError):
    code = "RelativeTimeCycle"


# -- metadata registry ---------------------------------------------------------

class DuplicateId(DomainError):
    code = "DuplicateId"


class MissingClassification(DomainError):
    code = "MissingClassification"


class MissingUnit(DomainError):
    code = "MissingUnit"


class DanglingReference(DomainError):
    code = "DanglingReference"


class UnknownCVT(DomainError):
    code = "UnknownCVT"


class ShrinkingMemberSet(DomainError):
    code = "ShrinkingMemberSet"


# -- store ---------------------------------------------------------------------

class ValidationFailed(DomainError):
    code = "ValidationFailed"

    def __init__(self, report):
        self.report = report
        codes = ", ".join(v.code.name for v in report.violations)
        super().__init__(codes)


class UnknownVisit(DomainError):
    code = "UnknownVisit"


class UnknownPatient(DomainError):
    code = "UnknownPatient"


class MalformedCSV(DomainError):
    code = "MalformedCSV"


class MappingError(DomainError):
    code = "MappingError"


class MalformedTag(DomainError):
    code = "MalformedTag"


class EmptySeries(DomainError):
    code = "EmptySeries"


# -- ontology ------------------------------------------------------------------

class DuplicateURI(DomainError):
    code = "DuplicateURI"


class UnknownEndpoint(DomainError):
    code = "UnknownEndpoint"


class CycleIntroduced(DomainError):
    code = "CycleIntroduced"

    def __init__(self, predicate: str, detail: str = ""):
        self.predicate = predicate
        super().__init__(f"{predicate}" + (f" ({detail})" if detail else ""))


class UnknownConcept(DomainError):
    code = "UnknownConcept"


class AmbiguousMapping(DomainError):
    code = "AmbiguousMapping"

    def __init__(self, local_uri: str, detail: str = ""):
        self.local_uri = local_uri
        super().__init__(local_uri + (f": {detail}" if detail else ""))


class NoCommonAncestor(DomainError):
    code = "NoCommonAncestor"


class ZeroCorpus(DomainError):
    code = "ZeroCorpus"


# -- query ---------------------------------------------------------------------

class QuerySyntaxError(DomainError):
    code = "SyntaxError"

    def __init__(self, line: int, column: int, expected: str):
        self.line = line
        self.column = column
        self.expected = expected
        super().__init__(f"{line}:{column}: expected {expected}")


class StaleMetadata(DomainError):
    code = "StaleMetadata"


# -- federation ----------------------------------------------------------------

class DuplicateNode(DomainError):
    code = "DuplicateNode"


class UnknownNode(DomainError):
    code = "UnknownNode"


class NoNodes(DomainError):
    code = "NoNodes"
