"""Exception hierarchy and the Violation record shared by every validator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


@dataclass(frozen=True)
class Violation:
    """A single rule failure: ``code`` names the rule, ``subject`` the offender."""

    code: str
    subject: str = ""
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.code}({self.subject})"
        return f"{text}: {self.detail}" if self.detail else text


class DDSError(Exception):
    code = "ERROR"

    def __init__(self, message: str = "", **info: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.info = info

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ValidationFailed(DDSError):
    code = "VALIDATION_FAILED"

    def __init__(self, message: str, violations: list[Violation]):
        super().__init__(message, violations=violations)
        self.violations = list(violations)

    def __str__(self) -> str:
        listed = ", ".join(str(v) for v in self.violations)
        return f"{self.code}: {self.message} [{listed}]"


class KindMismatch(DDSError):
    code = "KIND_MISMATCH"


class NotFound(DDSError):
    code = "NOT_FOUND"


class ParseError(DDSError):
    code = "PARSE_ERROR"

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line} column {column}: {message}", line=line, column=column)
        self.line = line
        self.column = column


class DuplicateItem(DDSError):
    code = "DUPLICATE_ITEM"


class IllegalTransition(DDSError):
    code = "ILLEGAL_TRANSITION"


class SchemaViolation(DDSError):
    code = "SCHEMA_VIOLATION"

    def __init__(self, message: str, violations: list[Violation]):
        super().__init__(message, violations=violations)
        self.violations = list(violations)


class RoleMismatch(DDSError):
    code = "ROLE_MISMATCH"


class GuardError(DDSError):
    code = "GUARD_ERROR"


class CorruptLog(DDSError):
    code = "CORRUPT_LOG"

    def __init__(self, message: str, seq: int):
        super().__init__(f"at seq {seq}: {message}", seq=seq)
        self.seq = seq


class DeltaConflict(DDSError):
    code = "DELTA_CONFLICT"

    def __init__(self, message: str = "", violations: list[Violation] | None = None):
        super().__init__(message, violations=violations or [])
        self.violations = list(violations or [])


class NameMismatch(DDSError):
    code = "NAME_MISMATCH"


class MigrationInvalid(DDSError):
    code = "MIGRATION_INVALID"

    def __init__(self, message: str, report: Any):
        super().__init__(message, report=report)
        self.report = report


class BoundExceeded(DDSError):
    code = "BOUND_EXCEEDED"


class EndpointInUse(DDSError):
    code = "ENDPOINT_IN_USE"


class DuplicateEndpoint(DDSError):
    code = "DUPLICATE_ENDPOINT"


class StoreIOError(DDSError):
    code = "IO_ERROR"


class CorruptArchive(DDSError):
    code = "CORRUPT_ARCHIVE"
