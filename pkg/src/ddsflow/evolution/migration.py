"""Validated migration of live Items and per-instance ad-hoc modification.

A migration is valid when the item's completion trace could have happened
under the target description: some execution of the target effective graph
(XOR choices free, AND branches interleaved, each activity completed at most
K times) has the trace as a prefix, and every STARTED activity survives as
an elementary activity that the replayed marking leaves ENABLED.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..errors import DeltaConflict, IllegalTransition, MigrationInvalid, NameMismatch
from ..metamodel.graph import Gate, VersionRef
from .delta import DeltaOp, InsertAfter, SkipActivity, delta_to_dict


class Verdict(str, Enum):
    VALID = "VALID"
    INVALID = "INVALID"


@dataclass
class MigrationReport:
    item_id: str
    from_: VersionRef
    to: VersionRef
    verdict: Verdict
    reasons: list[str] = field(default_factory=list)
    state_mapping: dict = field(default_factory=dict)
    marking: object = field(default=None, repr=False, compare=False)

    @property
    def valid(self) -> bool:
        return self.verdict is Verdict.VALID

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "from": str(self.from_),
            "to": str(self.to),
            "verdict": self.verdict.value,
            "reasons": list(self.reasons),
            "state_mapping": {k: v.value for k, v in sorted(self.state_mapping.items())},
        }


def replay_trace(net, trace, k, pending_skip=frozenset()):
    """Frontier of markings reachable by completing ``trace`` in order.

    Returns the surviving markings in discovery order (deduplicated).
    """
    from ..enactment.net import ActivityState, Divergent, complete, initial_marking

    try:
        frontier = [initial_marking(net, pending_skip)]
    except Divergent:
        return []
    for qid in trace:
        if not net.is_activity(qid):
            return []
        node = net.nodes[qid]
        seen: dict[tuple, object] = {}
        for m in frontier:
            if m.states[qid] is not ActivityState.ENABLED or m.counts.get(qid, 0) >= k:
                continue
            for choice in node.choices():
                m2 = m.copy()
                m2.counts[qid] = m2.counts.get(qid, 0) + 1
                try:
                    complete(net, m2, qid, choice)
                except Divergent:
                    continue
                seen.setdefault(m2.key(), m2)
        frontier = list(seen.values())
        if not frontier:
            break
    return frontier


def migration_report(engine, item, target: VersionRef | str, k: int | None = None) -> MigrationReport:
    """Pure read: would ``item`` be able to continue under ``target``?"""
    from ..enactment.net import ActivityState, Role

    k = engine.k if k is None else k
    if isinstance(item, str):
        item = engine.get(item)
    if isinstance(target, str):
        target = VersionRef.parse(target) if "@" in target else engine.resolve_ref(target)
    engine.repo.resolve(target)
    state = item.state
    if target.name != state.described_by.name:
        raise NameMismatch(f"{item.id!r} is described by {state.described_by.name!r}, not {target.name!r}")
    report = MigrationReport(item.id, state.described_by, target, Verdict.INVALID)
    try:
        net = engine.net_for(target, state.adhoc_delta)
    except DeltaConflict as exc:
        report.reasons.append(f"DELTA_NOT_APPLICABLE({exc})")
        return report
    current_net = engine.state_net(state)
    started = []
    for qid, s in state.marking.states.items():
        if s is not ActivityState.STARTED or current_net.nodes[qid].role is Role.COMPOSITE:
            continue
        if net.is_activity(qid):
            started.append(qid)
        else:
            report.reasons.append(f"STARTED_ACTIVITY_REMOVED({qid})")
    skipped = {q for q, s in state.marking.states.items() if s is ActivityState.SKIPPED and net.skippable(q)}
    candidates = replay_trace(net, state.trace, k, skipped)
    if not candidates:
        report.reasons.append("TRACE_NOT_REPLAYABLE")
    if report.reasons:
        return report
    fitting = [m for m in candidates if all(m.states[q] is ActivityState.ENABLED for q in started)]
    if not fitting:
        report.reasons.extend(f"STARTED_ACTIVITY_NOT_ENABLED({q})" for q in started)
        return report
    current = state.marking.states

    def distance(m) -> int:
        return sum(1 for q, s in m.states.items() if q in current and current[q] is not s)

    chosen = min(fitting, key=distance).copy()
    for q in started:
        chosen.states[q] = ActivityState.STARTED
    chosen.counts = {}
    report.verdict = Verdict.VALID
    report.state_mapping = dict(chosen.states)
    report.marking = chosen
    return report


def plan_migrate(engine, item, target: VersionRef, agent: str, k: int | None = None):
    from ..enactment.engine import Draft, EventType
    from ..enactment.net import status_of

    k = engine.k if k is None else k
    report = migration_report(engine, item, target, k)
    if not report.valid:
        raise MigrationInvalid(f"cannot migrate {item.id!r} to {target}: {', '.join(report.reasons)}", report=report)
    state = item.state.copy()
    source = state.described_by
    state.described_by = report.to
    state.marking = report.marking.copy()
    state.status = status_of(engine.state_net(state), state.marking)
    detail = {"from": source.to_dict(), "to": report.to.to_dict(), "k": k, **state.marking.to_dict()}
    return state, [Draft("", EventType.MIGRATE, agent, None, detail)]


def migrate(engine, item, target: VersionRef | str, agent: str = "system", k: int | None = None):
    """Move ``item`` onto ``target``; MIGRATION_INVALID leaves it untouched."""
    if isinstance(item, str):
        item = engine.get(item)
    if isinstance(target, str):
        target = VersionRef.parse(target) if "@" in target else engine.resolve_ref(target)
    engine.execute(item, lambda: plan_migrate(engine, item, target, agent, k))
    return item


def plan_adhoc(engine, item, op: DeltaOp, agent: str):
    from ..enactment.engine import Draft, EventType
    from ..enactment.net import ActivityState, ItemStatus, settle, skip, status_of

    state = item.state.copy()
    if state.status is not ItemStatus.ACTIVE:
        raise IllegalTransition(f"item {item.id!r} is {state.status.value}")
    deltas = (*state.adhoc_delta, op)
    net = engine.net_for(state.described_by, deltas)
    m = state.marking
    if isinstance(op, SkipActivity):
        current = m.states.get(op.id)
        if current not in (ActivityState.WAITING, ActivityState.ENABLED):
            shown = current.value if current else "absent"
            raise IllegalTransition(f"cannot skip {op.id} in state {shown}")
        skip(net, m, op.id)
    elif isinstance(op, InsertAfter):
        after, new = op.after, op.activity.id
        old = engine.state_net(item.state)
        if m.states.get(after) in (ActivityState.COMPLETED, ActivityState.SKIPPED):
            # a successor enabled by this node's token steps back so the new node runs first
            for key, _ in old.nodes[after].outs:
                succ = next((n for n in old.nodes.values() if key in n.ins), None)
                if m.tokens.get(key, 0) or succ is None or not old.is_activity(succ.qid):
                    continue
                if m.states[succ.qid] is not ActivityState.ENABLED:
                    continue
                if succ.join is not Gate.AND and len(succ.ins) != 1:
                    continue  # an XOR join does not record which branch enabled it
                m.states[succ.qid] = ActivityState.WAITING
                for k in succ.ins:
                    m.tokens[k] = m.tokens.get(k, 0) + 1
        moved = 0
        for key, _ in old.nodes[after].outs:
            moved += m.tokens.pop(key, 0)
        for qid in net.nodes:
            m.states.setdefault(qid, ActivityState.WAITING)
        if moved:
            link = f"{after}->{new}"
            m.tokens[link] = m.tokens.get(link, 0) + moved
        settle(net, m)
    state.adhoc_delta = deltas
    state.status = status_of(net, m)
    return state, [Draft(op.subject, EventType.ADHOC, agent, None, {"op": delta_to_dict(op)})]


def apply_adhoc(engine, item, op: DeltaOp, agent: str = "system"):
    if isinstance(item, str):
        item = engine.get(item)
    engine.execute(item, lambda: plan_adhoc(engine, item, op, agent))
    return item
