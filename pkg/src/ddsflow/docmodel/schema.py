"""Outcome schemas: the data dictionary an activity's outcome must satisfy."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..errors import Violation
from .doc import Node, lookup
from .expr import PathRef, coerce_number, is_error, parse_expr


class FieldType(str, Enum):
    STRING = "STRING"
    NUMBER = "NUMBER"
    BOOLEAN = "BOOLEAN"
    NODE = "NODE"


def parse_path(text: str) -> PathRef:
    node = parse_expr(text)
    if not isinstance(node, PathRef):
        raise ValueError(f"{text!r} is not a path")
    return node


@dataclass(frozen=True)
class OutcomeSchema:
    required: tuple[tuple[PathRef, FieldType], ...] = ()

    def __post_init__(self) -> None:
        norm = tuple((parse_path(p) if isinstance(p, str) else p, FieldType(t)) for p, t in self.required)
        paths = [p for p, _ in norm]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate path in outcome schema")
        object.__setattr__(self, "required", norm)

    def to_dict(self) -> dict:
        return {"required": [{"path": str(p), "type": t.value} for p, t in self.required]}

    @classmethod
    def from_dict(cls, data: dict) -> "OutcomeSchema":
        return cls(tuple((r["path"], r["type"]) for r in data.get("required", [])))


def type_accepts(kind: FieldType, value: object) -> bool:
    """The coercion table for schema checks.

    NUMBER accepts numbers and decimal strings; BOOLEAN accepts booleans and
    the strings "true"/"false"; STRING accepts strings and text-bearing
    elements; NODE accepts elements only.
    """
    if kind is FieldType.NODE:
        return isinstance(value, Node)
    if isinstance(value, Node):
        return kind is FieldType.STRING and value.text is not None
    if kind is FieldType.STRING:
        return isinstance(value, str)
    if kind is FieldType.BOOLEAN:
        return isinstance(value, bool) or value in ("true", "false")
    if isinstance(value, bool):
        return False
    return not is_error(coerce_number(value))


def validate_outcome(doc: Node | None, schema: OutcomeSchema) -> list[Violation]:
    out: list[Violation] = []
    for path, kind in schema.required:
        res = lookup(doc, path.segments) if doc is not None else None
        if res is None or not res.found:
            out.append(Violation("MISSING", str(path)))
        elif not type_accepts(kind, res.value):
            out.append(Violation("TYPE_MISMATCH", str(path), f"expected {kind.value}"))
    return out
