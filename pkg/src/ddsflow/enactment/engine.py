"""Base-level instance engine: Items enacted as event-sourced state machines.

Every write is planned on a copy of the item state, turned into events,
handed to the persistence hook, and only then committed in memory. A
failing plan or hook therefore leaves the item untouched.
"""

from __future__ import annotations

import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .. import canonical
from ..docmodel.doc import Node
from ..docmodel.schema import validate_outcome
from ..errors import (
    CorruptLog,
    DDSError,
    DuplicateItem,
    IllegalTransition,
    KindMismatch,
    NotFound,
    RoleMismatch,
    SchemaViolation,
)
from ..evolution.delta import DeltaOp, apply_deltas, delta_from_dict, delta_to_dict
from ..metamodel.graph import VersionRef, WorkflowGraph
from ..metamodel.metaschema import Kind
from ..metamodel.repository import LATEST, Repository
from .net import (
    ActivityState,
    ItemStatus,
    Marking,
    Net,
    NetNode,
    Role,
    compile_net,
    complete,
    enabled,
    initial_marking,
    skip,
    status_of,
    xor_choice,
)

DEFAULT_K = 2
SYSTEM_AGENT = "system"


class EventType(str, Enum):
    ENABLE = "ENABLE"
    START = "START"
    COMPLETE = "COMPLETE"
    SKIP = "SKIP"
    MIGRATE = "MIGRATE"
    ADHOC = "ADHOC"


@dataclass(frozen=True)
class Event:
    seq: int
    item_id: str
    activity_id: str
    transition: EventType
    agent: str
    timestamp: int
    desc_version: VersionRef
    outcome: Node | None = None
    detail: dict | None = None

    def to_dict(self) -> dict:
        out: dict = {
            "seq": self.seq,
            "item_id": self.item_id,
            "activity_id": self.activity_id,
            "transition": self.transition.value,
            "agent": self.agent,
            "timestamp": self.timestamp,
            "desc_version": self.desc_version.to_dict(),
        }
        if self.outcome is not None:
            out["outcome"] = self.outcome.to_dict()
        if self.detail is not None:
            out["detail"] = self.detail
        return out

    def encode(self) -> bytes:
        return canonical.encode(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Event":
        outcome = data.get("outcome")
        return cls(
            seq=data["seq"],
            item_id=data["item_id"],
            activity_id=data["activity_id"],
            transition=EventType(data["transition"]),
            agent=data["agent"],
            timestamp=data["timestamp"],
            desc_version=VersionRef.from_dict(data["desc_version"]),
            outcome=Node.from_dict(outcome) if outcome is not None else None,
            detail=data.get("detail"),
        )

    @classmethod
    def decode(cls, raw: bytes) -> "Event":
        return cls.from_dict(canonical.loads(raw))


@dataclass
class ItemState:
    described_by: VersionRef
    adhoc_delta: tuple[DeltaOp, ...]
    marking: Marking
    status: ItemStatus
    trace: list[str] = field(default_factory=list)
    processed: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "ItemState":
        return ItemState(self.described_by, self.adhoc_delta, self.marking.copy(), self.status,
                         list(self.trace), dict(self.processed))


class Item:
    """A base-level object: described-by reference, enactment state, event log."""

    def __init__(self, item_id: str, state: ItemState, log: list[Event] | None = None):
        self.id = item_id
        self.state = state
        self.log: list[Event] = log if log is not None else []

    @property
    def described_by(self) -> VersionRef:
        return self.state.described_by

    @property
    def adhoc_delta(self) -> tuple[DeltaOp, ...]:
        return self.state.adhoc_delta

    @property
    def states(self) -> dict[str, ActivityState]:
        return dict(self.state.marking.states)

    @property
    def status(self) -> ItemStatus:
        return self.state.status

    @property
    def trace(self) -> list[str]:
        return list(self.state.trace)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "described_by": self.described_by.to_dict(),
            "adhoc_delta": [delta_to_dict(op) for op in self.adhoc_delta],
            **self.state.marking.to_dict(),
            "status": self.status.value,
            "trace": list(self.state.trace),
            "processed": sorted(self.state.processed),
            "log_length": len(self.log),
        }

    def serialize(self) -> bytes:
        return canonical.encode(self.to_dict())

    def __repr__(self) -> str:
        return f"Item({self.id!r}, {self.described_by}, {self.status.value})"


@dataclass
class Draft:
    activity_id: str
    transition: EventType
    agent: str
    outcome: Node | None = None
    detail: dict | None = None


Plan = tuple[ItemState, list[Draft]]


def _wall_clock() -> int:
    return time.time_ns() // 1000


def role_allows(role: str, agent: str) -> bool:
    return role in ("", "*") or agent == role


class Engine:
    """Instantiates Items and drives them through their effective workflow graph."""

    def __init__(self, repo: Repository, *, clock: Callable[[], int] | None = None,
                 on_event: Callable[[str, list[Event]], None] | None = None, k: int = DEFAULT_K):
        self.repo = repo
        self.k = k
        self._clock = clock or _wall_clock
        self._on_event = on_event
        self.items: dict[str, Item] = {}
        self._lock = threading.RLock()
        self._item_locks: dict[str, threading.RLock] = {}
        self._graphs: dict[tuple, WorkflowGraph] = {}
        self._nets: dict[tuple, Net] = {}

    # --- description access -------------------------------------------------

    def resolve_ref(self, desc: VersionRef | str) -> VersionRef:
        if isinstance(desc, VersionRef):
            self.repo.resolve(desc)
            return desc
        if "@" in desc:
            ref = VersionRef.parse(desc)
            self.repo.resolve(ref)
            return ref
        return self.repo.resolve(desc, LATEST).ref

    def graph_for(self, ref: VersionRef, deltas: Sequence[DeltaOp] = ()) -> WorkflowGraph:
        key = (ref, tuple(deltas))
        graph = self._graphs.get(key)
        if graph is None:
            record = self.repo.resolve(ref)
            if record.graph is None or record.kind is Kind.ACTIVITY_DESC:
                raise KindMismatch(f"{ref} is a {record.kind.value}, not an item or connector description")
            graph = apply_deltas(record.graph, list(deltas))
            if len(self._graphs) > 4096:
                self._graphs.clear()
            self._graphs[key] = graph
        return graph

    def net_for(self, ref: VersionRef, deltas: Sequence[DeltaOp] = ()) -> Net:
        key = (ref, tuple(deltas))
        net = self._nets.get(key)
        if net is None:
            net = compile_net(self.graph_for(ref, deltas))
            if len(self._nets) > 4096:
                self._nets.clear()
            self._nets[key] = net
        return net

    def effective_graph(self, item: Item | str) -> WorkflowGraph:
        item = self.get(item) if isinstance(item, str) else item
        return self.graph_for(item.described_by, item.adhoc_delta)

    def state_net(self, state: ItemState) -> Net:
        return self.net_for(state.described_by, state.adhoc_delta)

    # --- registry -----------------------------------------------------------

    def get(self, item_id: str) -> Item:
        item = self.items.get(item_id)
        if item is None:
            raise NotFound(f"no item {item_id!r}")
        return item

    def lock_for(self, item_id: str) -> threading.RLock:
        with self._lock:
            return self._item_locks.setdefault(item_id, threading.RLock())

    def adopt(self, item: Item) -> None:
        """Register an item rebuilt elsewhere (recovery, restore)."""
        with self._lock:
            if item.id in self.items:
                raise DuplicateItem(f"item {item.id!r} already exists")
            self.items[item.id] = item

    def _commit(self, item: Item, plan: Plan, timestamp: int | None = None, persist: bool = True) -> list[Event]:
        state, drafts = plan
        ts = self._clock() if timestamp is None else timestamp
        events = []
        for offset, d in enumerate(drafts, start=1):
            events.append(Event(len(item.log) + offset, item.id, d.activity_id, d.transition, d.agent, ts,
                                state.described_by, d.outcome, d.detail))
            msg_id = (d.detail or {}).get("msg-id")
            if msg_id is not None:
                state.processed[msg_id] = len(item.log) + offset
        if persist and self._on_event is not None:
            self._on_event(item.id, events)
        item.log.extend(events)
        item.state = state
        return events

    # --- operations ---------------------------------------------------------

    def _plan_instantiate(self, ref: VersionRef, agent: str) -> Plan:
        record = self.repo.resolve(ref)
        if record.kind not in (Kind.ITEM_DESC, Kind.CONNECTOR_DESC):
            raise KindMismatch(f"{ref} is a {record.kind.value}; items need an ITEM_DESC")
        net = self.net_for(ref)
        m = initial_marking(net)
        state = ItemState(ref, (), m, status_of(net, m))
        drafts = [Draft(net.start, EventType.ENABLE, agent)]
        drafts += [Draft(q, EventType.ENABLE, agent) for q in enabled(net, m)]
        return state, drafts

    def instantiate(self, item_id: str, desc: VersionRef | str, agent: str = SYSTEM_AGENT) -> Item:
        if not item_id:
            raise ValueError("item id must be non-empty")
        ref = self.resolve_ref(desc)
        with self._lock:
            if item_id in self.items:
                raise DuplicateItem(f"item {item_id!r} already exists")
            plan = self._plan_instantiate(ref, agent)
            item = Item(item_id, plan[0])
            self._commit(item, plan)
            self.items[item_id] = item
            return item

    def enabled(self, item: Item | str) -> set[str]:
        item = self.get(item) if isinstance(item, str) else item
        state = item.state
        return set(enabled(self.state_net(state), state.marking))

    def _check_outcome(self, node: NetNode, outcome: Node | None) -> None:
        ref = node.activity.outcome_schema
        if ref is None:
            return
        record = self.repo.resolve(ref)
        violations = validate_outcome(outcome, record.body)
        if violations:
            raise SchemaViolation(f"outcome for {node.qid} violates {ref}", violations)

    def _plan_fire(self, item: Item, activity_id: str, transition: EventType, agent: str,
                   outcome: Node | None) -> Plan:
        state = item.state.copy()
        net = self.state_net(state)
        m = state.marking
        if state.status is not ItemStatus.ACTIVE:
            raise IllegalTransition(f"item {item.id!r} is {state.status.value}")
        node = net.nodes.get(activity_id)
        allowed = (Role.ACTIVITY, Role.COMPOSITE) if transition is EventType.SKIP else (Role.ACTIVITY,)
        if node is None or node.role not in allowed:
            raise NotFound(f"item {item.id!r} has no activity {activity_id!r}")
        if not role_allows(node.activity.role, agent):
            raise RoleMismatch(f"{activity_id} needs role {node.activity.role!r}, agent is {agent!r}")
        current = m.states[activity_id]
        if transition is EventType.START:
            if current is not ActivityState.ENABLED:
                raise IllegalTransition(f"cannot START {activity_id} in state {current.value}")
            m.states[activity_id] = ActivityState.STARTED
        elif transition is EventType.COMPLETE:
            if current is not ActivityState.STARTED:
                raise IllegalTransition(f"cannot COMPLETE {activity_id} in state {current.value}")
            self._check_outcome(node, outcome)
            complete(net, m, activity_id, xor_choice(node, outcome))
            state.trace.append(activity_id)
        elif transition is EventType.SKIP:
            if current not in (ActivityState.WAITING, ActivityState.ENABLED):
                raise IllegalTransition(f"cannot SKIP {activity_id} in state {current.value}")
            skip(net, m, activity_id)
        else:
            raise IllegalTransition(f"{transition.value} is not a fire transition")
        state.status = status_of(net, m)
        return state, [Draft(activity_id, transition, agent, outcome if transition is EventType.COMPLETE else None)]

    def fire(self, item_id: str, activity_id: str, transition: EventType | str, agent: str = "",
             outcome: Node | None = None) -> Event:
        item = self.get(item_id)
        try:
            transition = EventType(transition.upper() if isinstance(transition, str) else transition)
        except ValueError:
            raise IllegalTransition(f"unknown transition {transition!r}") from None
        with self.lock_for(item_id):
            plan = self._plan_fire(item, activity_id, transition, agent, outcome)
            return self._commit(item, plan)[0]

    def _plan_process(self, item: Item, outcome: Node, agent: str, extra: dict[str, Any]) -> Plan:
        """One atomic pass: the document is the outcome of every activity reached."""
        state = item.state.copy()
        net = self.state_net(state)
        m = state.marking
        if state.status is not ItemStatus.ACTIVE:
            raise IllegalTransition(f"item {item.id!r} is {state.status.value}")
        pending = enabled(net, m)
        if not pending:
            raise IllegalTransition(f"item {item.id!r} has no enabled activity")
        done: list[str] = []
        limit = 4 * len(net.nodes) * max(self.k, 1)
        while pending:
            qid = pending[0]
            node = net.nodes[qid]
            if not role_allows(node.activity.role, agent):
                raise RoleMismatch(f"{qid} needs role {node.activity.role!r}, agent is {agent!r}")
            self._check_outcome(node, outcome)
            m.states[qid] = ActivityState.STARTED
            complete(net, m, qid, xor_choice(node, outcome))
            done.append(qid)
            state.trace.append(qid)
            if len(done) > limit:
                raise IllegalTransition(f"behaviour of {item.id!r} does not reach quiescence")
            pending = enabled(net, m)
        if status_of(net, m) is ItemStatus.COMPLETED:
            # Connector behaviour re-arms after each full pass.
            state.marking = initial_marking(net)
            state.trace = []
        state.status = status_of(net, state.marking)
        detail = {"pass": done, **extra}
        return state, [Draft(done[0], EventType.COMPLETE, agent, outcome, detail)]

    def process(self, item_id: str, outcome: Node, agent: str = SYSTEM_AGENT,
                extra: dict[str, Any] | None = None) -> Event:
        item = self.get(item_id)
        with self.lock_for(item_id):
            plan = self._plan_process(item, outcome, agent, dict(extra or {}))
            return self._commit(item, plan)[0]

    def execute(self, item: Item, plan_fn: Callable[[], Plan]) -> list[Event]:
        """Plan and commit under the item's writer lock (used by evolution ops)."""
        with self.lock_for(item.id):
            return self._commit(item, plan_fn())

    # --- event sourcing -----------------------------------------------------

    def replay(self, events: Sequence[Event]) -> Item:
        """Rebuild an Item from its log; every regenerated event must match."""
        from ..evolution.migration import plan_adhoc, plan_migrate

        if not events:
            raise CorruptLog("empty log", 1)
        for index, ev in enumerate(events, start=1):
            if ev.seq != index:
                raise CorruptLog(f"expected seq {index}, found {ev.seq}", ev.seq)
            if ev.item_id != events[0].item_id:
                raise CorruptLog("log mixes items", ev.seq)
        first = events[0]
        try:
            plan = self._plan_instantiate(first.desc_version, first.agent)
        except DDSError as exc:
            raise CorruptLog(f"cannot instantiate: {exc}", 1) from None
        item = Item(first.item_id, plan[0])
        self._replay_commit(item, plan, events)
        while len(item.log) < len(events):
            ev = events[len(item.log)]
            try:
                if ev.transition is EventType.MIGRATE:
                    detail = ev.detail or {}
                    plan = plan_migrate(self, item, ev.desc_version, ev.agent, detail.get("k", self.k))
                elif ev.transition is EventType.ADHOC:
                    plan = plan_adhoc(self, item, delta_from_dict((ev.detail or {})["op"]), ev.agent)
                elif ev.transition is EventType.COMPLETE and ev.detail and "pass" in ev.detail:
                    extra = {k: v for k, v in ev.detail.items() if k != "pass"}
                    plan = self._plan_process(item, ev.outcome, ev.agent, extra)  # type: ignore[arg-type]
                elif ev.transition in (EventType.START, EventType.COMPLETE, EventType.SKIP):
                    plan = self._plan_fire(item, ev.activity_id, ev.transition, ev.agent, ev.outcome)
                else:
                    raise CorruptLog(f"unexpected {ev.transition.value} event", ev.seq)
            except CorruptLog:
                raise
            except (DDSError, KeyError, ValueError) as exc:
                raise CorruptLog(f"cannot re-apply: {exc}", ev.seq) from None
            self._replay_commit(item, plan, events)
        return item

    def _replay_commit(self, item: Item, plan: Plan, events: Sequence[Event]) -> None:
        start = len(item.log)
        expected = events[start:start + len(plan[1])]
        if len(expected) != len(plan[1]):
            raise CorruptLog("log ends inside an operation", start + 1)
        produced = self._commit(item, plan, timestamp=expected[0].timestamp, persist=False)
        for got, want in zip(produced, expected):
            if got.to_dict() != {**want.to_dict(), "timestamp": got.timestamp}:
                raise CorruptLog("event does not match its re-execution", want.seq)
        # keep the logged objects (and their timestamps) as the log of record
        item.log[start:] = list(expected)
