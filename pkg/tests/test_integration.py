import pytest

from ddsflow.docmodel.doc import element, parse_doc
from ddsflow.docmodel.expr import print_expr
from ddsflow.docmodel.transform import TransformRule
from ddsflow.enactment import EventType, ItemStatus
from ddsflow.errors import EndpointInUse, ValidationFailed
from ddsflow.integration import ConnectorSpec, RoutingRule, connector_item_id, route
from ddsflow.metamodel.graph import ActivityDef, Transition, WorkflowGraph
from ddsflow.transport import DEAD_LETTER, CommMode, Message
from oracles import gen, ref_expr

APPROVAL = ConnectorSpec(
    "orders.in", CommMode.INPROC, "FLAT_RECORD",
    transform=(TransformRule.of("$out.amount", "num($record.amount)"),),
    routes=(RoutingRule.of("$out.amount > 100", "approve.in"), RoutingRule.of("true", "auto.in")),
)


def completes(system, name):
    return [e for e in system.engine.get(connector_item_id(name)).log if e.transition is EventType.COMPLETE]


def test_deploy_binds_and_publishes(system):
    item = system.deploy_connector("order-intake", APPROVAL)
    assert item.status is ItemStatus.ACTIVE
    assert system.integration.binding("orders.in") == "order-intake"
    assert system.repo.resolve("order-intake").body == APPROVAL
    assert {"orders.in", "approve.in", "auto.in", DEAD_LETTER} <= set(system.bus.endpoints)


def test_redeploy_publishes_new_version_only_when_changed(system):
    system.deploy_connector("c", APPROVAL)
    system.deploy_connector("c", APPROVAL)
    assert [r.version for r in system.repo.history("c")] == [1]
    v2 = ConnectorSpec("orders.in", routes=(RoutingRule.of("true", "auto.in"),))
    system.deploy_connector("c", v2)
    assert [r.version for r in system.repo.history("c")] == [1, 2]
    assert system.integration.item("c").described_by.version == 1
    assert system.migration_report(connector_item_id("c"), 2).valid


def test_endpoint_in_use(system):
    system.deploy_connector("a", APPROVAL)
    with pytest.raises(EndpointInUse):
        system.deploy_connector("b", APPROVAL)


def test_invalid_behaviour_is_rejected(system):
    broken = WorkflowGraph((ActivityDef("start"), ActivityDef("handle"), ActivityDef("end")),
                           (Transition("start", "handle"),))
    with pytest.raises(ValidationFailed):
        system.deploy_connector("c", ConnectorSpec("x.in", behaviour=broken))
    assert "c" not in system.repo.names()


def test_amount_250_routes_to_approval(system):
    system.deploy_connector("c", APPROVAL)
    system.send("orders.in", Message("m1", "orders.in", "amount=250", "FLAT_RECORD"))
    delivered = system.bus.run()
    assert [(ep, m.id) for ep, m in delivered] == [("orders.in", "m1")]
    (out,) = system.bus.pending("approve.in")
    assert out.id == "m1/c" and out.header("msg-id") == "m1/c" and out.header("error") is None
    assert parse_doc(out.payload) == element("out", {"amount": 250})
    assert system.bus.pending("auto.in") == []


def test_unparseable_payload_goes_to_dead_letter(system):
    system.deploy_connector("c", APPROVAL)
    before = system.integration.item("c").serialize()
    system.send("orders.in", Message("bad", "orders.in", "no separator here", "FLAT_RECORD"))
    system.bus.run()
    (dead,) = system.bus.pending(DEAD_LETTER)
    assert dead.id == "bad/c!dead" and dead.payload == "no separator here"
    assert dead.header("error").startswith("PARSE_ERROR: line 1 column 1")
    assert system.integration.item("c").serialize() == before


def test_transform_error_is_reported_in_header(system):
    system.deploy_connector("c", APPROVAL)
    system.send("orders.in", Message("m", "orders.in", "amount=lots", "FLAT_RECORD"))
    system.bus.run()
    (out,) = system.bus.pending("auto.in")
    assert out.id == "m/c" and parse_doc(out.payload) == element("out")
    assert out.header("error").startswith("transform 0: ") and "route 0 -> approve.in" in out.header("error")


def test_duplicate_msg_id_is_answered_from_the_log(system):
    system.deploy_connector("c", APPROVAL)
    msg = Message("m1", "orders.in", "amount=20", "FLAT_RECORD")
    first = system.integration.on_message("c", msg)
    again = system.integration.on_message("c", msg)
    assert first == again and len(completes(system, "c")) == 1
    assert [m.encode() for m in first] == [m.encode() for m in again]


def test_message_conservation(system):
    system.deploy_connector("c", APPROVAL)
    rng = gen.rngs(1, 30)[0]
    bad = 0
    for i in range(60):
        if rng.random() < 0.2:
            payload, bad = "garbage", bad + 1
        else:
            payload = f"amount={rng.randint(0, 300)}"
        system.send("orders.in", Message(f"m{i}", "orders.in", payload, "FLAT_RECORD"))
    system.bus.run(seed=3)
    routed = len(system.bus.history("approve.in")) + len(system.bus.history("auto.in"))
    dead = len(system.bus.history(DEAD_LETTER))
    assert routed + dead == 60 and dead == bad
    assert len(completes(system, "c")) == 60 - bad
    assert system.replay(connector_item_id("c")).serialize() == system.integration.item("c").serialize()


def test_connector_determinism(system):
    other = type(system)()
    for s in (system, other):
        s.deploy_connector("c", APPROVAL)
    for i in range(20):
        msg = Message(f"m{i}", "orders.in", f"amount={i * 17}", "FLAT_RECORD")
        a = system.integration.on_message("c", msg)
        b = other.integration.on_message("c", msg)
        assert [m.encode() for m in a] == [m.encode() for m in b]


def test_multi_activity_behaviour_consumes_doc_at_first_activity(system):
    behaviour = WorkflowGraph(
        (ActivityDef("start"), ActivityDef("parse"), ActivityDef("log"), ActivityDef("end")),
        (Transition("start", "parse"), Transition("parse", "log"), Transition("log", "end")),
    )
    spec = ConnectorSpec("x.in", behaviour=behaviour, routes=(RoutingRule.of("true", "y.in"),))
    system.deploy_connector("c", spec)
    system.send("x.in", Message("m", "x.in", '{"name":"r","attrs":{"a":1}}'))
    system.bus.run()
    (event,) = completes(system, "c")
    assert event.outcome == element("r", {"a": 1})
    assert len(system.bus.pending("y.in")) == 1


def test_spec_dict_roundtrip():
    assert ConnectorSpec.from_dict(APPROVAL.to_dict()) == APPROVAL


def test_route_examples():
    doc = element("out", {"a": 5})
    assert route([], doc) == DEAD_LETTER
    rules = [RoutingRule.of("$out.a > 1", "first"), RoutingRule.of("$out.a > 2", "second")]
    assert route(rules, doc) == "first"
    assert route([RoutingRule.of("$out.zz > 1", "err"), RoutingRule.of("true", "ok")], doc) == "ok"


def naive_route(rules, doc):
    """Linear scan using the reference evaluator."""
    for rule in rules:
        if ref_expr.evaluate(print_expr(rule.guard), doc.to_dict()) is True:
            return rule.target_endpoint
    return DEAD_LETTER


def test_route_agrees_with_linear_scan_on_100_pairs():
    for rng in gen.rngs(100, seed=31):
        doc = gen.random_doc(rng)
        rules = [RoutingRule(gen.random_ast(rng), f"t{i}") for i in range(rng.randint(0, 5))]
        assert route(rules, doc) == naive_route(rules, doc)
