"""Versioned, immutable description records and their store-facing repository."""

from __future__ import annotations

import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from .. import canonical
from ..errors import KindMismatch, NotFound, ParseError, ValidationFailed, Violation
from .graph import VersionRef, WorkflowGraph, validate_graph
from .metaschema import GRAPH_KINDS, Kind, check_body

LATEST = "LATEST"


def _decode_body(kind: Kind, data: dict) -> Any:
    if kind in GRAPH_KINDS:
        return WorkflowGraph.from_dict(data)
    if kind is Kind.OUTCOME_SCHEMA:
        from ..docmodel.schema import OutcomeSchema
        return OutcomeSchema.from_dict(data)
    from ..integration import ConnectorSpec
    return ConnectorSpec.from_dict(data)


def behaviour_of(kind: Kind, body: Any) -> WorkflowGraph | None:
    if kind in GRAPH_KINDS:
        return body
    if kind is Kind.CONNECTOR_DESC:
        return body.behaviour
    return None


def check_description(kind: Kind | str, body: Any) -> tuple[dict, Any]:
    """Meta-schema and semantic checks; returns ``(canonical dict, decoded body)``.

    Raises VALIDATION_FAILED listing every violation found.
    """
    kind = Kind(kind)
    data = body.to_dict() if hasattr(body, "to_dict") else body
    try:
        data = canonical.loads(canonical.dumps(data))
    except (TypeError, ValueError) as exc:
        raise ValidationFailed("body is not encodable", [Violation("ENCODING", "<body>", str(exc))]) from None
    problems = check_body(kind, data)
    if problems:
        raise ValidationFailed(f"{kind.value} body does not conform to its meta-schema", problems)
    try:
        decoded = _decode_body(kind, data)
    except (ParseError, ValueError) as exc:
        raise ValidationFailed("body has malformed content", [Violation("BAD_CONTENT", "<body>", str(exc))]) from None
    graph = behaviour_of(kind, decoded)
    if graph is not None:
        violations = validate_graph(graph)
        if violations:
            raise ValidationFailed("workflow graph is not well-formed", violations)
    return data, decoded


@dataclass(frozen=True)
class DescriptionRecord:
    ref: VersionRef
    kind: Kind
    body: Any
    predecessor: int | None
    published_at: int
    encoded: bytes = field(repr=False, compare=False)

    @property
    def name(self) -> str:
        return self.ref.name

    @property
    def version(self) -> int:
        return self.ref.version

    @property
    def graph(self) -> WorkflowGraph | None:
        return behaviour_of(self.kind, self.body)

    def to_dict(self) -> dict:
        return canonical.loads(self.encoded)

    def serialize(self) -> bytes:
        return self.encoded

    @classmethod
    def build(cls, kind: Kind, ref: VersionRef, data: dict, body: Any, published_at: int) -> "DescriptionRecord":
        predecessor = ref.version - 1 if ref.version > 1 else None
        payload = {
            "kind": kind.value,
            "name": ref.name,
            "version": ref.version,
            "predecessor": predecessor,
            "published_at": published_at,
            "body": data,
        }
        return cls(ref, kind, body, predecessor, published_at, canonical.encode(payload))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "DescriptionRecord":
        payload = canonical.loads(raw)
        kind = Kind(payload["kind"])
        data, body = check_description(kind, payload["body"])
        ref = VersionRef(payload["name"], payload["version"])
        record = cls.build(kind, ref, data, body, payload["published_at"])
        if record.encoded != bytes(raw):
            raise ValueError(f"record {ref} is not in canonical form")
        return record


@dataclass(frozen=True)
class ChangeSet:
    added_nodes: frozenset[str] = frozenset()
    removed_nodes: frozenset[str] = frozenset()
    modified_nodes: frozenset[str] = frozenset()
    added_edges: frozenset[tuple[str, str]] = frozenset()
    removed_edges: frozenset[tuple[str, str]] = frozenset()
    schema_changes: tuple[tuple[str, VersionRef | None, VersionRef | None], ...] = ()

    def is_empty(self) -> bool:
        return not (self.added_nodes or self.removed_nodes or self.modified_nodes
                    or self.added_edges or self.removed_edges or self.schema_changes)

    def to_dict(self) -> dict:
        def ref(r: VersionRef | None) -> str | None:
            return str(r) if r else None
        return {
            "added_nodes": sorted(self.added_nodes),
            "removed_nodes": sorted(self.removed_nodes),
            "modified_nodes": sorted(self.modified_nodes),
            "added_edges": [list(e) for e in sorted(self.added_edges)],
            "removed_edges": [list(e) for e in sorted(self.removed_edges)],
            "schema_changes": [[n, ref(a), ref(b)] for n, a, b in self.schema_changes],
        }


def diff_graphs(old: WorkflowGraph, new: WorkflowGraph) -> ChangeSet:
    old_nodes = {n.id: n for n in old.nodes}
    new_nodes = {n.id: n for n in new.nodes}
    old_edges = {e.key for e in old.edges}
    new_edges = {e.key for e in new.edges}
    common = sorted(old_nodes.keys() & new_nodes.keys())
    schema_changes = tuple(
        (i, old_nodes[i].outcome_schema, new_nodes[i].outcome_schema)
        for i in common
        if old_nodes[i].outcome_schema != new_nodes[i].outcome_schema
    )
    return ChangeSet(
        added_nodes=frozenset(new_nodes.keys() - old_nodes.keys()),
        removed_nodes=frozenset(old_nodes.keys() - new_nodes.keys()),
        modified_nodes=frozenset(i for i in common if old_nodes[i] != new_nodes[i]),
        added_edges=frozenset(new_edges - old_edges),
        removed_edges=frozenset(old_edges - new_edges),
        schema_changes=schema_changes,
    )


def _wall_clock() -> int:
    return time.time_ns() // 1000


class Repository:
    """Meta-level store: dense per-name versions, never deleted, never mutated.

    Publishes are serialised by a lock; readers see either the state before
    or after a publish because records are inserted fully built.
    """

    def __init__(self, clock: Callable[[], int] | None = None,
                 on_publish: Callable[[DescriptionRecord], None] | None = None):
        self._clock = clock or _wall_clock
        self._on_publish = on_publish
        self._lock = threading.RLock()
        self._records: dict[str, list[DescriptionRecord]] = {}

    def publish(self, kind: Kind | str, name: str, body: Any) -> VersionRef:
        kind = Kind(kind)
        self._check_kind(name, kind)
        data, decoded = check_description(kind, body)
        graph = behaviour_of(kind, decoded)
        if graph is not None:
            self._check_schema_refs(graph)
        with self._lock:
            self._check_kind(name, kind)
            history = self._records.get(name, [])
            ref = VersionRef(name, len(history) + 1)
            record = DescriptionRecord.build(kind, ref, data, decoded, self._clock())
            if self._on_publish is not None:
                self._on_publish(record)
            self._records[name] = [*history, record]
        return ref

    def _check_kind(self, name: str, kind: Kind) -> None:
        history = self._records.get(name)
        if history and history[0].kind is not kind:
            raise KindMismatch(f"{name!r} is a {history[0].kind.value}, not {kind.value}")

    def _check_schema_refs(self, graph: WorkflowGraph, prefix: str = "") -> None:
        missing = []
        for node in graph.nodes:
            ref = node.outcome_schema
            if ref is not None:
                try:
                    found = self.resolve(ref)
                except NotFound:
                    found = None
                if found is None or found.kind is not Kind.OUTCOME_SCHEMA:
                    missing.append(Violation("UNKNOWN_SCHEMA", prefix + node.id, str(ref)))
            if node.subgraph is not None:
                try:
                    self._check_schema_refs(node.subgraph, f"{prefix}{node.id}/")
                except ValidationFailed as exc:
                    missing.extend(exc.violations)
        if missing:
            raise ValidationFailed("outcome schema references do not resolve", missing)

    def load(self, record: DescriptionRecord) -> None:
        """Re-insert a stored record (recovery path); versions must arrive in order."""
        with self._lock:
            history = self._records.get(record.name, [])
            if record.version != len(history) + 1:
                raise ValueError(f"record {record.ref} out of order")
            if history and history[0].kind is not record.kind:
                raise KindMismatch(f"{record.name!r} kind changed across versions")
            self._records[record.name] = [*history, record]

    def resolve(self, name: str | VersionRef, selector: int | str = LATEST) -> DescriptionRecord:
        if isinstance(name, VersionRef):
            name, selector = name.name, name.version
        history = self._records.get(name)
        if not history:
            raise NotFound(f"no description named {name!r}")
        if selector == LATEST:
            return history[-1]
        if not isinstance(selector, int) or not 1 <= selector <= len(history):
            raise NotFound(f"{name!r} has no version {selector}")
        return history[selector - 1]

    def latest(self, name: str) -> int:
        return self.resolve(name).version

    def names(self) -> list[str]:
        return sorted(self._records)

    def history(self, name: str) -> list[DescriptionRecord]:
        return list(self._records.get(name, []))

    def records(self) -> list[DescriptionRecord]:
        with self._lock:
            return [r for n in sorted(self._records) for r in self._records[n]]

    def diff(self, name: str, va: int, vb: int) -> ChangeSet:
        a = self.resolve(name, va)
        b = self.resolve(name, vb)
        if a.kind is not b.kind or a.graph is None or b.graph is None:
            raise KindMismatch(f"{name!r} versions {va} and {vb} do not both carry a workflow graph")
        return diff_graphs(a.graph, b.graph)
