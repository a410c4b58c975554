"""Connectors: Items whose behaviour parses, transforms and routes messages.

A connector is deployed by publishing a CONNECTOR_DESC and instantiating an
Item ``connector/<name>`` described by it. Each inbound message drives one
atomic pass of the behaviour graph, logged as a single COMPLETE event that
also records the msg-id and the outbound messages, so a redelivered message
is answered from the log instead of being processed twice.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .docmodel.doc import DataFormat, Node, parse_doc, serialize_doc
from .docmodel.expr import Expr, eval_expr, is_error, parse_expr, print_expr
from .docmodel.transform import TransformRule, apply_transform
from .enactment.engine import Engine, Item
from .errors import DDSError, EndpointInUse, ParseError
from .metamodel.graph import WorkflowGraph, sequence
from .metamodel.metaschema import Kind
from .metamodel.repository import Repository
from .transport import DEAD_LETTER, Bus, CommMode, Message

CONNECTOR_PREFIX = "connector/"


@dataclass(frozen=True)
class RoutingRule:
    guard: Expr
    target_endpoint: str

    @classmethod
    def of(cls, guard: str, target: str) -> "RoutingRule":
        return cls(parse_expr(guard), target)

    def to_dict(self) -> dict:
        return {"guard": print_expr(self.guard), "target": self.target_endpoint}

    @classmethod
    def from_dict(cls, data: dict) -> "RoutingRule":
        return cls(parse_expr(data["guard"]), data["target"])


def handle_behaviour() -> WorkflowGraph:
    """The default connector behaviour: a single ``handle`` activity."""
    return sequence("handle")


@dataclass(frozen=True)
class ConnectorSpec:
    inbound_endpoint: str
    comm_mode: CommMode = CommMode.INPROC
    data_format: DataFormat = DataFormat.CANONICAL
    behaviour: WorkflowGraph = field(default_factory=handle_behaviour)
    transform: tuple[TransformRule, ...] = ()
    routes: tuple[RoutingRule, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "comm_mode", CommMode(self.comm_mode))
        object.__setattr__(self, "data_format", DataFormat(self.data_format))
        object.__setattr__(self, "transform", tuple(self.transform))
        object.__setattr__(self, "routes", tuple(self.routes))

    def targets(self) -> list[str]:
        return list(dict.fromkeys(r.target_endpoint for r in self.routes))

    def to_dict(self) -> dict:
        return {
            "comm_mode": self.comm_mode.value,
            "data_format": self.data_format.value,
            "behaviour": self.behaviour.to_dict(),
            "transform": [r.to_dict() for r in self.transform],
            "routes": [r.to_dict() for r in self.routes],
            "inbound_endpoint": self.inbound_endpoint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConnectorSpec":
        return cls(
            inbound_endpoint=data["inbound_endpoint"],
            comm_mode=CommMode(data["comm_mode"]),
            data_format=DataFormat(data["data_format"]),
            behaviour=WorkflowGraph.from_dict(data["behaviour"]),
            transform=tuple(TransformRule.from_dict(r) for r in data["transform"]),
            routes=tuple(RoutingRule.from_dict(r) for r in data["routes"]),
        )


def route_detail(routes, doc: Node) -> tuple[str, list[str]]:
    """First rule whose guard is true, else dead-letter; also the ERROR guards seen."""
    errors = []
    for i, rule in enumerate(routes):
        value = eval_expr(rule.guard, doc)
        if is_error(value):
            errors.append(f"route {i} -> {rule.target_endpoint}: {value.reason}")
        elif value is True:
            return rule.target_endpoint, errors
    return DEAD_LETTER, errors


def route(routes, doc: Node) -> str:
    return route_detail(routes, doc)[0]


def connector_item_id(name: str) -> str:
    return CONNECTOR_PREFIX + name


def dead_letter(msg: Message, connector: str, error: str) -> Message:
    dead_id = f"{msg.id}/{connector}!dead"
    headers = (("msg-id", dead_id), ("format", msg.format), ("error", error))
    return Message(dead_id, DEAD_LETTER, msg.payload, msg.format, headers)


class Integration:
    """Deploys connectors and turns inbound messages into outbound ones."""

    def __init__(self, repo: Repository, engine: Engine, bus: Bus | None = None):
        self.repo = repo
        self.engine = engine
        self.bus = bus
        self._lock = threading.RLock()
        self._bound: dict[str, str] = {}

    def connectors(self) -> list[str]:
        return sorted(i[len(CONNECTOR_PREFIX):] for i in self.engine.items if i.startswith(CONNECTOR_PREFIX))

    def item(self, name: str) -> Item:
        return self.engine.get(connector_item_id(name))

    def spec_of(self, item: Item) -> ConnectorSpec:
        return self.repo.resolve(item.described_by).body

    def binding(self, endpoint: str) -> str | None:
        for name in self.connectors():
            if self.spec_of(self.item(name)).inbound_endpoint == endpoint:
                return name
        return None

    def deploy_connector(self, name: str, spec: ConnectorSpec | dict) -> Item:
        """Publish a new CONNECTOR_DESC version; create the connector Item on first deploy.

        A redeploy leaves the existing Item on its current version until it
        is migrated. Deploying a spec equal to the latest version publishes
        nothing new, so an interrupted deploy can simply be repeated.
        """
        if isinstance(spec, dict):
            spec = ConnectorSpec.from_dict(spec)
        with self._lock:
            owner = self.binding(spec.inbound_endpoint)
            if owner is not None and owner != name:
                raise EndpointInUse(f"endpoint {spec.inbound_endpoint!r} is bound to connector {owner!r}")
            history = self.repo.history(name)
            if history and history[-1].kind is Kind.CONNECTOR_DESC and history[-1].body == spec:
                ref = history[-1].ref
            else:
                ref = self.repo.publish(Kind.CONNECTOR_DESC, name, spec)
            item_id = connector_item_id(name)
            item = self.engine.items.get(item_id)
            if item is None:
                item = self.engine.instantiate(item_id, ref, agent=name)
            self.attach(name)
            return item

    def attach(self, name: str) -> None:
        """Open the connector's endpoints on the bus and bind its handler."""
        if self.bus is None:
            return
        spec = self.spec_of(self.item(name))
        self.bus.ensure_endpoint(spec.inbound_endpoint, spec.comm_mode)
        for target in spec.targets():
            self.bus.ensure_endpoint(target, spec.comm_mode)
        for endpoint, handler_name in list(self._bound.items()):
            if handler_name == name and endpoint != spec.inbound_endpoint:
                self.bus.unbind(endpoint)
                del self._bound[endpoint]
        self._bound[spec.inbound_endpoint] = name
        self.bus.bind(spec.inbound_endpoint, lambda msg, _n=name: self.on_message(_n, msg))

    def on_message(self, connector: str | Item, msg: Message) -> list[Message]:
        item = connector if isinstance(connector, Item) else self.item(connector)
        name = item.id[len(CONNECTOR_PREFIX):]
        with self.engine.lock_for(item.id):
            seen = item.state.processed.get(msg.id)
            if seen is not None:
                detail = item.log[seen - 1].detail or {}
                return [Message.from_dict(m) for m in detail.get("outputs", [])]
            spec = self.spec_of(item)
            try:
                doc = parse_doc(msg.payload, spec.data_format)
            except ParseError as exc:
                return [dead_letter(msg, name, str(exc))]
            result = apply_transform(list(spec.transform), doc)
            target, route_errors = route_detail(spec.routes, result.doc)
            out_id = f"{msg.id}/{name}"
            headers = [("msg-id", out_id), ("format", DataFormat.CANONICAL.value)]
            problems = [f"transform {e.index}: {e.error.reason}" for e in result.errors] + route_errors
            if problems:
                headers.append(("error", "; ".join(problems)))
            out = Message(out_id, target, serialize_doc(result.doc), DataFormat.CANONICAL.value, tuple(headers))
            extra = {"msg-id": msg.id, "outputs": [out.to_dict()]}
            try:
                self.engine.process(item.id, doc, agent=name, extra=extra)
            except DDSError as exc:
                return [dead_letter(msg, name, str(exc))]
            return [out]
