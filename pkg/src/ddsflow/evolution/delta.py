"""Ad-hoc per-instance modifications and their effect on a workflow graph."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

from ..docmodel.expr import Expr, parse_expr, print_expr
from ..errors import DeltaConflict
from ..metamodel.graph import ActivityDef, Gate, Transition, WorkflowGraph, validate_graph


@dataclass(frozen=True)
class InsertAfter:
    """Insert ``activity`` directly after ``after``; it inherits ``after``'s outgoing edges."""

    activity: ActivityDef
    after: str

    @property
    def subject(self) -> str:
        return self.activity.id


@dataclass(frozen=True)
class SkipActivity:
    id: str

    @property
    def subject(self) -> str:
        return self.id


@dataclass(frozen=True)
class ReplaceGuard:
    source: str
    target: str
    expr: Expr

    @property
    def subject(self) -> str:
        return f"{self.source}->{self.target}"


DeltaOp = Union[InsertAfter, SkipActivity, ReplaceGuard]


def delta_to_dict(op: DeltaOp) -> dict:
    if isinstance(op, InsertAfter):
        return {"op": "INSERT_AFTER", "after": op.after, "activity": op.activity.to_dict()}
    if isinstance(op, SkipActivity):
        return {"op": "SKIP_ACTIVITY", "id": op.id}
    return {"op": "REPLACE_GUARD", "from": op.source, "to": op.target, "expr": print_expr(op.expr)}


def delta_from_dict(data: dict) -> DeltaOp:
    kind = data.get("op")
    if kind == "INSERT_AFTER":
        return InsertAfter(ActivityDef.from_dict(data["activity"]), data["after"])
    if kind == "SKIP_ACTIVITY":
        return SkipActivity(data["id"])
    if kind == "REPLACE_GUARD":
        return ReplaceGuard(data["from"], data["to"], parse_expr(data["expr"]))
    raise ValueError(f"unknown delta op {kind!r}")


def _has_qualified(graph: WorkflowGraph, qid: str) -> bool:
    head, _, rest = qid.partition("/")
    node = graph.node(head)
    if node is None:
        return False
    if not rest:
        return True
    return node.subgraph is not None and _has_qualified(node.subgraph, rest)


def apply_delta(graph: WorkflowGraph, op: DeltaOp) -> WorkflowGraph:
    """Structural effect of one op. Raises DELTA_CONFLICT on a missing reference."""
    if isinstance(op, SkipActivity):
        if not _has_qualified(graph, op.id) or op.id in (graph.start, graph.end):
            raise DeltaConflict(f"cannot skip {op.id!r}: no such activity")
        return graph
    if isinstance(op, ReplaceGuard):
        edge = graph.edge(op.source, op.target)
        if edge is None:
            raise DeltaConflict(f"no edge {op.source}->{op.target}")
        if edge.is_default:
            raise DeltaConflict(f"{op.source}->{op.target} is a default edge")
        edges = tuple(replace(e, guard=op.expr) if e is edge else e for e in graph.edges)
        return replace(graph, edges=edges)
    after = graph.node(op.after)
    if after is None:
        raise DeltaConflict(f"cannot insert after {op.after!r}: no such node")
    if graph.has_node(op.activity.id):
        raise DeltaConflict(f"node {op.activity.id!r} already exists")
    new = replace(op.activity, split=after.split, join=Gate.NONE)
    nodes: list[ActivityDef] = []
    for n in graph.nodes:
        if n.id == after.id:
            nodes.append(replace(n, split=Gate.NONE))
            nodes.append(new)
        else:
            nodes.append(n)
    edges: list[Transition] = []
    moved = False
    for e in graph.edges:
        if e.source == after.id:
            if not moved:
                edges.append(Transition(after.id, new.id))
                moved = True
            edges.append(replace(e, source=new.id))
        else:
            edges.append(e)
    if not moved:
        edges.append(Transition(after.id, new.id))
    return replace(graph, nodes=tuple(nodes), edges=tuple(edges))


def apply_deltas(graph: WorkflowGraph, ops: list[DeltaOp] | tuple[DeltaOp, ...]) -> WorkflowGraph:
    for op in ops:
        graph = apply_delta(graph, op)
    if ops:
        violations = validate_graph(graph)
        if violations:
            raise DeltaConflict("modified graph is not well-formed: " + ", ".join(map(str, violations)),
                                violations=violations)
    return graph
