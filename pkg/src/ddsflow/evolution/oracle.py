"""Brute-force execution enumerator used to cross-check migration validity.

Deliberately shares no code with the enactment net: it walks the nested
graph structure directly, keeps tokens keyed by (scope, source, target),
and explores every XOR choice and interleaving breadth-first.
"""

from __future__ import annotations

from ..errors import BoundExceeded
from ..metamodel.graph import ActivityKind, Gate, WorkflowGraph

MAX_EVENTS = 20

_IDLE, _READY, _BUSY, _DONE = "idle", "ready", "busy", "done"


class _Scope:
    def __init__(self, graph: WorkflowGraph, prefix: str, owner: str | None):
        self.graph = graph
        self.prefix = prefix
        self.owner = owner
        self.defs = {n.id: n for n in graph.nodes}
        self.succ = {n.id: [e for e in graph.edges if e.source == n.id] for n in graph.nodes}
        self.pred = {n.id: [e for e in graph.edges if e.target == n.id] for n in graph.nodes}


def _scopes(graph: WorkflowGraph) -> dict[str, _Scope]:
    out = {"": _Scope(graph, "", None)}
    stack = [out[""]]
    while stack:
        scope = stack.pop()
        for n in scope.graph.nodes:
            if n.kind is ActivityKind.COMPOSITE and n.subgraph is not None:
                qid = scope.prefix + n.id
                child = _Scope(n.subgraph, qid + "/", qid)
                out[child.prefix] = child
                stack.append(child)
    return out


class _Run:
    """Mutable simulation state; frozen into a hashable key between steps."""

    def __init__(self, scopes, status=None, tokens=None, counts=None):
        self.scopes = scopes
        self.status: dict[str, str] = dict(status or {})
        self.tokens: dict[tuple[str, str, str], int] = dict(tokens or {})
        self.counts: dict[str, int] = dict(counts or {})

    def clone(self) -> "_Run":
        return _Run(self.scopes, self.status, self.tokens, self.counts)

    def key(self) -> tuple:
        return (
            tuple(sorted(self.status.items())),
            tuple(sorted((k, v) for k, v in self.tokens.items() if v)),
            tuple(sorted(self.counts.items())),
        )

    def put(self, scope: _Scope, src: str, dst: str) -> None:
        k = (scope.prefix, src, dst)
        self.tokens[k] = self.tokens.get(k, 0) + 1

    def fire_out(self, scope: _Scope, node_id: str, branch: int | None) -> None:
        """Emit tokens after ``node_id`` finishes. ``branch`` None means the default."""
        if node_id == scope.graph.end:
            if scope.owner is not None:
                self.status[scope.owner] = _DONE
                parent = self.scopes[scope.owner.rpartition("/")[0] + "/" if "/" in scope.owner else ""]
                self.fire_out(parent, scope.owner.rpartition("/")[2], None)
            return
        edges = scope.succ[node_id]
        if not edges:
            return
        gate = scope.defs[node_id].split
        if gate is Gate.AND:
            for e in edges:
                self.put(scope, e.source, e.target)
        elif gate is Gate.XOR:
            if branch is None:
                defaults = [e for e in edges if e.is_default]
                chosen = defaults[0] if defaults else edges[0]
            else:
                chosen = edges[branch]
            self.put(scope, chosen.source, chosen.target)
        else:
            self.put(scope, edges[0].source, edges[0].target)

    def try_enter(self, scope: _Scope, node_id: str) -> bool:
        qid = scope.prefix + node_id
        if self.status.get(qid) in (_READY, _BUSY) or node_id == scope.graph.start:
            return False
        incoming = [(scope.prefix, e.source, e.target) for e in scope.pred[node_id]]
        if not incoming:
            return False
        if scope.defs[node_id].join is Gate.AND:
            if any(self.tokens.get(k, 0) == 0 for k in incoming):
                return False
            for k in incoming:
                self.tokens[k] -= 1
        else:
            live = [k for k in incoming if self.tokens.get(k, 0) > 0]
            if not live:
                return False
            self.tokens[live[-1]] -= 1
        node = scope.defs[node_id]
        if node_id == scope.graph.end:
            self.status[qid] = _DONE
            self.fire_out(scope, node_id, None)
        elif node.kind is ActivityKind.COMPOSITE:
            self.status[qid] = _BUSY
            inner = self.scopes[qid + "/"]
            self.status[inner.prefix + inner.graph.start] = _DONE
            self.fire_out(inner, inner.graph.start, None)
        else:
            self.status[qid] = _READY
        return True

    def propagate(self) -> None:
        moved = True
        rounds = 0
        while moved:
            moved = False
            rounds += 1
            if rounds > 10_000:
                raise RuntimeError("token flow does not settle")
            for scope in self.scopes.values():
                for node_id in scope.defs:
                    if self.try_enter(scope, node_id):
                        moved = True

    def ready(self) -> list[str]:
        return sorted(q for q, s in self.status.items() if s == _READY)

    def locate(self, qid: str) -> tuple[_Scope, str]:
        head, _, tail = qid.rpartition("/")
        return self.scopes[head + "/" if head else ""], tail


def _initial(graph: WorkflowGraph) -> _Run:
    run = _Run(_scopes(graph))
    root = run.scopes[""]
    run.status[graph.start] = _DONE
    run.fire_out(root, graph.start, None)
    run.propagate()
    return run


def enumerate_executions(graph: WorkflowGraph, max_events: int, k: int = 2) -> set[tuple[str, ...]]:
    """Every completion sequence of length <= ``max_events`` (prefix-closed).

    Guards are free choices; each activity completes at most ``k`` times.
    """
    if max_events > MAX_EVENTS:
        raise BoundExceeded(f"max_events {max_events} exceeds {MAX_EVENTS}")
    found: set[tuple[str, ...]] = {()}
    layer: dict[tuple, tuple[tuple[str, ...], _Run]] = {}
    start = _initial(graph)
    layer[((), start.key())] = ((), start)
    for _ in range(max_events):
        nxt: dict[tuple, tuple[tuple[str, ...], _Run]] = {}
        for seq, run in layer.values():
            for qid in run.ready():
                if run.counts.get(qid, 0) >= k:
                    continue
                scope, node_id = run.locate(qid)
                node = scope.defs[node_id]
                n_out = len(scope.succ[node_id])
                branches = list(range(n_out)) if node.split is Gate.XOR and n_out else [None]
                for b in branches:
                    r = run.clone()
                    r.counts[qid] = r.counts.get(qid, 0) + 1
                    r.status[qid] = _DONE
                    r.fire_out(scope, node_id, b)
                    r.propagate()
                    s = seq + (qid,)
                    found.add(s)
                    nxt.setdefault((s, r.key()), (s, r))
        if not nxt:
            break
        layer = nxt
    return found


def prefixes_of(sequences) -> set[tuple[str, ...]]:
    out: set[tuple[str, ...]] = set()
    for s in sequences:
        for i in range(len(s) + 1):
            out.add(tuple(s[:i]))
    return out
