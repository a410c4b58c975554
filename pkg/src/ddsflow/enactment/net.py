"""Token-flow semantics over a flattened workflow graph.

Tokens live on edges. A node whose join condition is met (any incoming
token for NONE/XOR joins, one token on every incoming edge for AND joins)
consumes them and is entered: elementary activities become ENABLED, the
end and sub-start markers complete at once, composites start their
subgraph. Completing a node emits tokens according to its split.

Composite activities are flattened: their children get qualified ids
``<composite>/<child>`` and two internal edges connect the composite to its
subgraph's start (``>C``) and the subgraph's end back to the composite (``<C``).

Nodes that complete without an outcome (start markers, composites,
skipped activities) take the default edge of an XOR split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..docmodel.doc import Node
from ..docmodel.expr import eval_expr, is_error
from ..errors import DDSError, GuardError
from ..metamodel.graph import ActivityDef, ActivityKind, Gate, Transition, WorkflowGraph

# Auto firings allowed in one settle pass before the graph is declared divergent.
SETTLE_LIMIT = 10_000


class ActivityState(str, Enum):
    WAITING = "WAITING"
    ENABLED = "ENABLED"
    STARTED = "STARTED"
    COMPLETED = "COMPLETED"
    SKIPPED = "SKIPPED"


class ItemStatus(str, Enum):
    ACTIVE = "ACTIVE"
    COMPLETED = "COMPLETED"
    ABORTED = "ABORTED"


class Role(str, Enum):
    ACTIVITY = "activity"
    START = "start"
    END = "end"
    SUBSTART = "substart"
    SUBEND = "subend"
    COMPOSITE = "composite"


class Divergent(DDSError):
    code = "DIVERGENT"


@dataclass(frozen=True)
class NetNode:
    qid: str
    role: Role
    activity: ActivityDef
    ins: tuple[str, ...]
    outs: tuple[tuple[str, Transition | None], ...]
    enter: str | None = None
    exit: str | None = None

    @property
    def split(self) -> Gate:
        return self.activity.split

    @property
    def join(self) -> Gate:
        return self.activity.join

    def default_index(self) -> int | None:
        if self.split is not Gate.XOR:
            return None
        for i, (_, t) in enumerate(self.outs):
            if t is not None and t.is_default:
                return i
        return 0

    def choices(self) -> list[int | None]:
        return list(range(len(self.outs))) if self.split is Gate.XOR else [None]


@dataclass
class Net:
    nodes: dict[str, NetNode]
    start: str
    end: str

    @property
    def order(self) -> list[str]:
        return list(self.nodes)

    def is_activity(self, qid: str) -> bool:
        node = self.nodes.get(qid)
        return node is not None and node.role is Role.ACTIVITY

    def skippable(self, qid: str) -> bool:
        node = self.nodes.get(qid)
        return node is not None and node.role in (Role.ACTIVITY, Role.COMPOSITE)


def _edge_key(prefix: str, t: Transition) -> str:
    return f"{prefix}{t.source}->{prefix}{t.target}"


def _flatten(graph: WorkflowGraph, prefix: str, parent: str | None, out: dict[str, NetNode]) -> None:
    incoming: dict[str, list[str]] = {n.id: [] for n in graph.nodes}
    outgoing: dict[str, list[tuple[str, Transition | None]]] = {n.id: [] for n in graph.nodes}
    for t in graph.edges:
        key = _edge_key(prefix, t)
        outgoing[t.source].append((key, t))
        incoming[t.target].append(key)
    for n in graph.nodes:
        qid = prefix + n.id
        ins = incoming[n.id]
        outs = outgoing[n.id]
        if n.id == graph.start:
            role = Role.START if parent is None else Role.SUBSTART
            if parent is not None:
                ins = [f">{parent}"]
        elif n.id == graph.end:
            role = Role.END if parent is None else Role.SUBEND
            if parent is not None:
                outs = [(f"<{parent}", None)]
        elif n.kind is ActivityKind.COMPOSITE:
            role = Role.COMPOSITE
        else:
            role = Role.ACTIVITY
        enter = exit_ = None
        if role is Role.COMPOSITE:
            enter, exit_ = f">{qid}", f"<{qid}"
        out[qid] = NetNode(qid, role, n, tuple(ins), tuple(outs), enter, exit_)
        if role is Role.COMPOSITE and n.subgraph is not None:
            _flatten(n.subgraph, qid + "/", qid, out)


def compile_net(graph: WorkflowGraph) -> Net:
    nodes: dict[str, NetNode] = {}
    _flatten(graph, "", None, nodes)
    return Net(nodes, graph.start, graph.end)


@dataclass
class Marking:
    states: dict[str, ActivityState]
    tokens: dict[str, int] = field(default_factory=dict)
    pending_skip: set[str] = field(default_factory=set)
    counts: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "Marking":
        return Marking(dict(self.states), dict(self.tokens), set(self.pending_skip), dict(self.counts))

    def key(self) -> tuple:
        return (
            tuple(sorted((k, v.value) for k, v in self.states.items())),
            tuple(sorted((k, v) for k, v in self.tokens.items() if v)),
            tuple(sorted(self.pending_skip)),
            tuple(sorted(self.counts.items())),
        )

    def to_dict(self) -> dict:
        return {
            "states": {k: v.value for k, v in sorted(self.states.items())},
            "tokens": {k: v for k, v in sorted(self.tokens.items()) if v},
            "pending_skip": sorted(self.pending_skip),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Marking":
        return cls(
            {k: ActivityState(v) for k, v in data["states"].items()},
            dict(data.get("tokens", {})),
            set(data.get("pending_skip", [])),
        )


def _emit(m: Marking, node: NetNode, choice: int | None) -> None:
    if not node.outs:
        return
    if node.split is Gate.AND:
        targets = [k for k, _ in node.outs]
    elif node.split is Gate.XOR:
        idx = node.default_index() if choice is None else choice
        targets = [node.outs[idx][0]]  # type: ignore[index]
    else:
        targets = [node.outs[0][0]]
    for key in targets:
        m.tokens[key] = m.tokens.get(key, 0) + 1


def _take_join(m: Marking, node: NetNode) -> bool:
    if not node.ins:
        return False
    if node.join is Gate.AND:
        if all(m.tokens.get(k, 0) > 0 for k in node.ins):
            for k in node.ins:
                m.tokens[k] -= 1
            return True
        return False
    for k in node.ins:
        if m.tokens.get(k, 0) > 0:
            m.tokens[k] -= 1
            return True
    return False


def settle(net: Net, m: Marking) -> None:
    """Propagate tokens until no node can be entered. Order-independent."""
    fired = 0
    changed = True
    while changed:
        changed = False
        for node in net.nodes.values():
            state = m.states[node.qid]
            if node.role is Role.COMPOSITE and state is ActivityState.STARTED:
                if m.tokens.get(node.exit or "", 0) > 0:
                    m.tokens[node.exit] -= 1  # type: ignore[index]
                    m.states[node.qid] = ActivityState.COMPLETED
                    _emit(m, node, None)
                    changed = True
                continue
            if node.role is Role.START or state in (ActivityState.ENABLED, ActivityState.STARTED):
                continue
            if not _take_join(m, node):
                continue
            changed = True
            fired += 1
            if fired > SETTLE_LIMIT:
                raise Divergent("token flow does not settle")
            if node.qid in m.pending_skip:
                m.pending_skip.discard(node.qid)
                _emit(m, node, None)
            elif node.role is Role.ACTIVITY:
                m.states[node.qid] = ActivityState.ENABLED
            elif node.role is Role.COMPOSITE:
                m.states[node.qid] = ActivityState.STARTED
                m.tokens[node.enter] = m.tokens.get(node.enter, 0) + 1  # type: ignore[index]
            else:
                m.states[node.qid] = ActivityState.COMPLETED
                _emit(m, node, None)


def initial_marking(net: Net, pending_skip: set[str] | frozenset[str] = frozenset()) -> Marking:
    m = Marking({qid: ActivityState.WAITING for qid in net.nodes})
    for qid in pending_skip:
        if net.skippable(qid):
            m.states[qid] = ActivityState.SKIPPED
            m.pending_skip.add(qid)
    m.states[net.start] = ActivityState.COMPLETED
    _emit(m, net.nodes[net.start], None)
    settle(net, m)
    return m


def xor_choice(node: NetNode, outcome: Node | None) -> int | None:
    """Pick the XOR branch for a completing node: first true guard, else default."""
    if node.split is not Gate.XOR:
        return None
    for i, (_, t) in enumerate(node.outs):
        if t is None or t.is_default or t.guard is None:
            continue
        value = eval_expr(t.guard, outcome)
        if is_error(value):
            raise GuardError(f"guard on {t.source}->{t.target} is ERROR: {value!r}")
        if value is True:
            return i
    return node.default_index()


def complete(net: Net, m: Marking, qid: str, choice: int | None) -> None:
    m.states[qid] = ActivityState.COMPLETED
    _emit(m, net.nodes[qid], choice)
    settle(net, m)


def skip(net: Net, m: Marking, qid: str) -> None:
    state = m.states[qid]
    m.states[qid] = ActivityState.SKIPPED
    if state is ActivityState.WAITING:
        m.pending_skip.add(qid)
    else:
        _emit(m, net.nodes[qid], None)
        settle(net, m)


def enabled(net: Net, m: Marking) -> list[str]:
    return [q for q, n in net.nodes.items() if n.role is Role.ACTIVITY and m.states[q] is ActivityState.ENABLED]


def status_of(net: Net, m: Marking) -> ItemStatus:
    busy = any(s in (ActivityState.ENABLED, ActivityState.STARTED) for s in m.states.values())
    if m.states[net.end] is ActivityState.COMPLETED and not busy:
        return ItemStatus.COMPLETED
    return ItemStatus.ACTIVE
