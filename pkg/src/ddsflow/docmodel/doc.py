"""Canonical hierarchical documents and the format adapters that produce them."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .. import canonical
from ..errors import ParseError

Scalar = Union[str, int, float, bool]

RESERVED_KEYS = frozenset({"name", "attrs", "children", "text"})


class DataFormat(str, Enum):
    CANONICAL = "CANONICAL"
    FLAT_RECORD = "FLAT_RECORD"


def _check_scalar(key: str, value: object) -> None:
    if isinstance(value, bool) or isinstance(value, (str, int)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"attribute {key!r} is not finite")
        return
    raise TypeError(f"attribute {key!r} has non-scalar value {value!r}")


@dataclass(frozen=True)
class Node:
    """An element: name, attributes, ordered children and optional text.

    Attributes are normalised to a key-sorted tuple of pairs, so two nodes
    built with different insertion orders compare (and serialise) equal.
    """

    name: str
    attrs: tuple[tuple[str, Scalar], ...] = ()
    children: tuple["Node", ...] = ()
    text: str | None = None

    def __post_init__(self) -> None:
        raw = self.attrs
        pairs = list(raw.items()) if isinstance(raw, Mapping) else list(raw)
        seen: set[str] = set()
        for key, value in pairs:
            if not isinstance(key, str):
                raise TypeError(f"attribute key {key!r} is not a string")
            if key in seen:
                raise ValueError(f"duplicate attribute {key!r} on <{self.name}>")
            seen.add(key)
            _check_scalar(key, value)
        object.__setattr__(self, "attrs", tuple(sorted(pairs)))
        object.__setattr__(self, "children", tuple(self.children))
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("node name must be a non-empty string")

    def attr(self, key: str, default: Scalar | None = None) -> Scalar | None:
        for k, v in self.attrs:
            if k == key:
                return v
        return default

    def has_attr(self, key: str) -> bool:
        return any(k == key for k, _ in self.attrs)

    @property
    def attr_map(self) -> dict[str, Scalar]:
        return dict(self.attrs)

    def child(self, name: str) -> "Node | None":
        for c in self.children:
            if c.name == name:
                return c
        return None

    def to_dict(self) -> dict:
        out: dict = {
            "name": self.name,
            "attrs": dict(self.attrs),
            "children": [c.to_dict() for c in self.children],
        }
        if self.text is not None:
            out["text"] = self.text
        return out

    @classmethod
    def from_dict(cls, data: object) -> "Node":
        if not isinstance(data, dict):
            raise ValueError("document node must be an object")
        unknown = set(data) - RESERVED_KEYS
        if unknown:
            raise ValueError(f"unknown node keys {sorted(unknown)}")
        name = data.get("name")
        if not isinstance(name, str) or not name:
            raise ValueError("node name must be a non-empty string")
        attrs = data.get("attrs", {})
        if not isinstance(attrs, dict):
            raise ValueError("attrs must be an object")
        children = data.get("children", [])
        if not isinstance(children, list):
            raise ValueError("children must be a list")
        text = data.get("text")
        if text is not None and not isinstance(text, str):
            raise ValueError("text must be a string")
        return cls(name, attrs, tuple(cls.from_dict(c) for c in children), text)


def element(name: str, attrs: Mapping[str, Scalar] | Iterable[tuple[str, Scalar]] = (),
            children: Iterable[Node] = (), text: str | None = None) -> Node:
    return Node(name, attrs, tuple(children), text)  # type: ignore[arg-type]


def serialize_doc(doc: Node) -> str:
    return canonical.dumps(doc.to_dict())


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _parse_canonical(text: str) -> Node:
    try:
        data = canonical.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    try:
        return Node.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc)) from None


def _parse_flat(text: str) -> Node:
    attrs: dict[str, str] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        if "=" not in line:
            raise ParseError("expected key=value", lineno, 1)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError("empty key", lineno, 1)
        if key in attrs:
            raise ParseError(f"duplicate key {key!r}", lineno, 1)
        attrs[key] = value
    return Node("record", attrs)


def parse_doc(text: str, format: DataFormat | str = DataFormat.CANONICAL) -> Node:
    fmt = DataFormat(format)
    if fmt is DataFormat.FLAT_RECORD:
        return _parse_flat(text)
    return _parse_canonical(text)


def format_flat_record(doc: Node) -> str:
    """Inverse of the FLAT_RECORD adapter for single-level documents."""
    if doc.children or doc.text is not None:
        raise ValueError("only attribute-only documents have a flat form")
    lines = []
    for key, value in doc.attrs:
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines)


@dataclass(frozen=True)
class Lookup:
    """Result of resolving a path against a document."""

    found: bool
    value: Scalar | Node | None = field(default=None)


def lookup(doc: Node, segments: tuple[str, ...]) -> Lookup:
    """Resolve ``$root.a.b``: the first segment names the root element.

    Intermediate segments walk the first child with that name; the last
    segment prefers an attribute of that name over a child element.
    """
    if not segments or segments[0] != doc.name:
        return Lookup(False)
    node = doc
    rest = segments[1:]
    for i, seg in enumerate(rest):
        if i == len(rest) - 1 and node.has_attr(seg):
            return Lookup(True, node.attr(seg))
        nxt = node.child(seg)
        if nxt is None:
            return Lookup(False)
        node = nxt
    return Lookup(True, node)
