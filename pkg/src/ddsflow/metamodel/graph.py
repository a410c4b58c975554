"""Workflow graphs (the behaviour side of item and connector descriptions)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

from ..docmodel.expr import Expr, parse_expr, print_expr
from ..errors import Violation


class ActivityKind(str, Enum):
    ELEMENTARY = "ELEMENTARY"
    COMPOSITE = "COMPOSITE"


class Gate(str, Enum):
    NONE = "NONE"
    AND = "AND"
    XOR = "XOR"


@dataclass(frozen=True, order=True)
class VersionRef:
    name: str
    version: int

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("VersionRef name must be a non-empty string")
        if not isinstance(self.version, int) or isinstance(self.version, bool) or self.version < 1:
            raise ValueError("VersionRef version must be an integer >= 1")

    def __str__(self) -> str:
        return f"{self.name}@{self.version}"

    @classmethod
    def parse(cls, text: str) -> "VersionRef":
        name, sep, ver = text.rpartition("@")
        if not sep or not ver.isdigit():
            raise ValueError(f"expected <name>@<version>, got {text!r}")
        return cls(name, int(ver))

    def to_dict(self) -> dict:
        return {"name": self.name, "version": self.version}

    @classmethod
    def from_dict(cls, data: dict) -> "VersionRef":
        return cls(data["name"], data["version"])


@dataclass(frozen=True)
class ActivityDef:
    id: str
    kind: ActivityKind = ActivityKind.ELEMENTARY
    role: str = ""
    split: Gate = Gate.NONE
    join: Gate = Gate.NONE
    outcome_schema: VersionRef | None = None
    subgraph: "WorkflowGraph | None" = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ActivityKind(self.kind))
        object.__setattr__(self, "split", Gate(self.split))
        object.__setattr__(self, "join", Gate(self.join))

    def to_dict(self) -> dict:
        out: dict = {
            "id": self.id,
            "kind": self.kind.value,
            "role": self.role,
            "split": self.split.value,
            "join": self.join.value,
        }
        if self.outcome_schema is not None:
            out["outcome_schema"] = self.outcome_schema.to_dict()
        if self.subgraph is not None:
            out["subgraph"] = self.subgraph.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ActivityDef":
        schema = data.get("outcome_schema")
        sub = data.get("subgraph")
        return cls(
            id=data["id"],
            kind=ActivityKind(data.get("kind", "ELEMENTARY")),
            role=data.get("role", ""),
            split=Gate(data.get("split", "NONE")),
            join=Gate(data.get("join", "NONE")),
            outcome_schema=VersionRef.from_dict(schema) if schema else None,
            subgraph=WorkflowGraph.from_dict(sub) if sub else None,
        )


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: Expr | None = None
    is_default: bool = False

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)

    def to_dict(self) -> dict:
        out: dict = {"from": self.source, "to": self.target, "is_default": self.is_default}
        if self.guard is not None:
            out["guard"] = print_expr(self.guard)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Transition":
        guard = data.get("guard")
        return cls(data["from"], data["to"], parse_expr(guard) if guard is not None else None,
                   bool(data.get("is_default", False)))


@dataclass(frozen=True)
class WorkflowGraph:
    """Directed activity graph; node and edge tuples keep declaration order.

    Edge order is significant: XOR guards are evaluated in it.
    """

    nodes: tuple[ActivityDef, ...]
    edges: tuple[Transition, ...]
    start: str = "start"
    end: str = "end"
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "_index", {n.id: n for n in reversed(self.nodes)})

    def __hash__(self) -> int:
        return hash((self.nodes, self.edges, self.start, self.end))

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> ActivityDef | None:
        return self._index.get(node_id)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index

    def out_edges(self, node_id: str) -> list[Transition]:
        return [e for e in self.edges if e.source == node_id]

    def in_edges(self, node_id: str) -> list[Transition]:
        return [e for e in self.edges if e.target == node_id]

    def edge(self, source: str, target: str) -> Transition | None:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        return None

    def activities(self) -> list[ActivityDef]:
        """Nodes other than the start and end markers."""
        return [n for n in self.nodes if n.id not in (self.start, self.end)]

    def replace_node(self, new: ActivityDef) -> "WorkflowGraph":
        return replace(self, nodes=tuple(new if n.id == new.id else n for n in self.nodes))

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorkflowGraph":
        return cls(
            tuple(ActivityDef.from_dict(n) for n in data["nodes"]),
            tuple(Transition.from_dict(e) for e in data["edges"]),
            data.get("start", "start"),
            data.get("end", "end"),
        )


def sequence(*ids: str, role: str = "", start: str = "start", end: str = "end",
             schemas: dict[str, VersionRef] | None = None) -> WorkflowGraph:
    """``start -> ids[0] -> ... -> ids[-1] -> end``."""
    schemas = schemas or {}
    chain = [start, *ids, end]
    nodes = [ActivityDef(start), *(ActivityDef(i, role=role, outcome_schema=schemas.get(i)) for i in ids),
             ActivityDef(end)]
    edges = [Transition(a, b) for a, b in zip(chain, chain[1:])]
    return WorkflowGraph(tuple(nodes), tuple(edges), start, end)


def _reach(start: str, succ: dict[str, list[str]]) -> set[str]:
    seen = {start}
    todo = deque([start])
    while todo:
        cur = todo.popleft()
        for nxt in succ.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def validate_graph(graph: WorkflowGraph, prefix: str = "") -> list[Violation]:
    """Return every structural rule violation; an empty list means well-formed.

    Composite activities have their subgraphs checked recursively, with
    offending ids qualified as ``<composite>/<id>``.
    """
    out: list[Violation] = []

    def bad(code: str, subject: str, detail: str = "") -> None:
        out.append(Violation(code, prefix + subject, detail))

    ids = [n.id for n in graph.nodes]
    seen: set[str] = set()
    for node_id in ids:
        if not node_id or "/" in node_id:
            bad("BAD_ID", node_id, "ids must be non-empty and must not contain '/'")
        if node_id in seen:
            bad("DUPLICATE_ID", node_id)
        seen.add(node_id)

    has_start = graph.start in seen
    has_end = graph.end in seen
    if not has_start:
        bad("MISSING_START", graph.start)
    if not has_end:
        bad("MISSING_END", graph.end)

    succ: dict[str, list[str]] = {i: [] for i in seen}
    pred: dict[str, list[str]] = {i: [] for i in seen}
    edge_keys: set[tuple[str, str]] = set()
    for e in graph.edges:
        label = f"{e.source}->{e.target}"
        if e.source not in seen or e.target not in seen:
            bad("DANGLING_EDGE", label)
            continue
        if e.key in edge_keys:
            bad("DUPLICATE_EDGE", label)
            continue
        edge_keys.add(e.key)
        succ[e.source].append(e.target)
        pred[e.target].append(e.source)

    if has_start and pred[graph.start]:
        bad("START_HAS_INCOMING", graph.start)
    if has_end and succ[graph.end]:
        bad("END_HAS_OUTGOING", graph.end)

    if has_start:
        reachable = _reach(graph.start, succ)
        for node_id in dict.fromkeys(ids):
            if node_id not in reachable:
                bad("UNREACHABLE", node_id)
    if has_end:
        co_reachable = _reach(graph.end, pred)
        for node_id in dict.fromkeys(ids):
            if node_id not in co_reachable and node_id != graph.end:
                bad("DEAD_END", node_id)

    unique: dict[str, ActivityDef] = {}
    for n in graph.nodes:
        unique.setdefault(n.id, n)
    for node in unique.values():
        out_deg = len(succ.get(node.id, ()))
        in_deg = len(pred.get(node.id, ()))
        if (node.split is Gate.NONE) != (out_deg <= 1):
            bad("SPLIT_MISMATCH", node.id, f"split={node.split.value} out-degree={out_deg}")
        if (node.join is Gate.NONE) != (in_deg <= 1):
            bad("JOIN_MISMATCH", node.id, f"join={node.join.value} in-degree={in_deg}")
        if node.id in (graph.start, graph.end) and node.kind is not ActivityKind.ELEMENTARY:
            bad("BOUNDARY_NOT_ELEMENTARY", node.id)
        if node.kind is ActivityKind.COMPOSITE:
            if node.outcome_schema is not None:
                bad("SCHEMA_ON_COMPOSITE", node.id)
            if node.subgraph is None:
                bad("MISSING_SUBGRAPH", node.id)
            else:
                out.extend(validate_graph(node.subgraph, f"{prefix}{node.id}/"))
        elif node.subgraph is not None:
            bad("SUBGRAPH_ON_ELEMENTARY", node.id)
        if node.split is Gate.XOR:
            outgoing = [e for e in graph.edges if e.source == node.id]
            defaults = [e for e in outgoing if e.is_default]
            if not defaults:
                bad("NO_DEFAULT", node.id)
            elif len(defaults) > 1:
                bad("MULTIPLE_DEFAULTS", node.id)
            for e in outgoing:
                if not e.is_default and e.guard is None:
                    bad("UNGUARDED_BRANCH", f"{e.source}->{e.target}")

    for e in graph.edges:
        src = graph.node(e.source)
        label = f"{e.source}->{e.target}"
        xor = src is not None and src.split is Gate.XOR
        if e.guard is not None and not xor:
            bad("GUARD_ON_NON_XOR", label)
        if e.is_default and not xor:
            bad("DEFAULT_ON_NON_XOR", label)
        if e.is_default and e.guard is not None and xor:
            bad("GUARDED_DEFAULT", label)
    return out
