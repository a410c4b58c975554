"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import time
from collections import Counter
from pathlib import Path

from ddsflow.docmodel.expr import parse_expr, print_expr
from ddsflow.enactment import ActivityState, EventType, ItemStatus
from ddsflow.errors import DDSError
from ddsflow.evolution import InsertAfter, ReplaceGuard, SkipActivity, enumerate_executions
from ddsflow.integration import connector_item_id
from ddsflow.metamodel.graph import ActivityDef, Gate, Transition, WorkflowGraph, sequence, validate_graph
from ddsflow.system import System
from ddsflow.transport import DEAD_LETTER, CommMode
from conftest import Crash, Faults
from oracles import gen, ref_expr, ref_graph
import pipeline
import test_expr

GOLDEN = Path(__file__).parent / "golden" / "pipeline_outputs.json"


# --- 1. evolution endurance --------------------------------------------------------

def endurance_graph(v):
    """Version v of the part description: the shape changes with every version."""
    acts = [f"S{v}_{j}" for j in range(3 + v % 3)]
    if v % 2 == 0:
        return sequence(*acts)
    head, rest = acts[0], acts[1:]
    nodes = [ActivityDef("start"), ActivityDef(head, split=Gate.AND), *map(ActivityDef, rest),
             ActivityDef("end", join=Gate.AND)]
    edges = [Transition("start", head), *(Transition(head, r) for r in rest), *(Transition(r, "end") for r in rest)]
    return WorkflowGraph(tuple(nodes), tuple(edges))


def test_acceptance_1_evolution_endurance(acceptance):
    began = time.perf_counter()
    s = System()
    versions = 31  # the base description plus 30 successive versions
    failures, coexist_steps, steps = [], 0, 0
    seen_with_other: set[int] = set()
    live: list[str] = []

    def advance():
        nonlocal steps, coexist_steps
        active = {s.engine.get(i).described_by.version for i in live}
        steps += 1
        coexist_steps += len(active) >= 2
        if len(active) >= 2:
            seen_with_other.update(active)
        for item_id in list(live):
            item = s.engine.get(item_id)
            started = sorted(q for q, st in item.states.items() if st is ActivityState.STARTED)
            try:
                if started:
                    s.fire(item_id, started[0], "COMPLETE")
                else:
                    s.fire(item_id, sorted(s.enabled(item_id))[0], "START")
            except DDSError as exc:
                failures.append(f"{item_id}: {exc}")
            if item.status is ItemStatus.COMPLETED:
                live.remove(item_id)

    publish_rounds_ok = True
    for v in range(1, versions + 1):
        ref = s.publish("ITEM_DESC", "PartDescription", endurance_graph(v))
        assert ref.version == v
        for n in range(10):
            s.instantiate(f"Part#{v}-{n}", ref)
            live.append(f"Part#{v}-{n}")
        if v > 1:
            active = {s.engine.get(i).described_by.version for i in live}
            publish_rounds_ok &= len(active) >= 2
        advance()
    while live:
        advance()
    elapsed = time.perf_counter() - began
    completed = sum(1 for it in s.engine.items.values() if it.status is ItemStatus.COMPLETED)
    passed = (not failures and completed == versions * 10 and seen_with_other == set(range(1, versions + 1))
              and publish_rounds_ok and coexist_steps >= versions and elapsed < 10)
    acceptance(1, passed, f"{completed} items completed over {versions} versions, {coexist_steps}/{steps} steps "
                          f"with >=2 live versions, {len(failures)} failures, {elapsed:.2f}s")
    assert not failures
    assert completed == versions * 10
    assert seen_with_other == set(range(1, versions + 1))
    assert publish_rounds_ok and coexist_steps >= versions
    assert elapsed < 10


# --- 2. migration oracle equivalence -----------------------------------------------

def test_acceptance_2_migration_oracle(acceptance):
    began = time.perf_counter()
    graphs, agree, verdicts, gates = 0, 0, Counter(), Counter()
    mismatches = []
    for idx, rng in enumerate(gen.rngs(250, seed=7)):
        src = gen.well_formed(rng, max_activities=8, loop_p=0.2, composite_p=0.15)
        mode = rng.randrange(3)
        tgt = src if mode == 0 else gen.relabel(src, rng) if mode == 1 else \
            gen.well_formed(rng, max_activities=8, loop_p=0.2, composite_p=0.15)
        gates.update(n.split.value for n in tgt.nodes)
        s = System(k=2)
        s.publish("ITEM_DESC", "w", src)
        s.publish("ITEM_DESC", "w", tgt)
        item = s.instantiate("i", "w@1")
        for _ in range(rng.randint(0, 10)):
            enabled = sorted(s.enabled("i"))
            if not enabled:
                break
            a = rng.choice(enabled)
            s.fire("i", a, "START")
            s.fire("i", a, "COMPLETE", outcome=gen.outcome(rng))
        trace = tuple(item.trace)
        expected = trace in enumerate_executions(tgt, len(trace), 2)
        got = s.migration_report("i", 2).valid
        graphs += 1
        verdicts[expected] += 1
        if got == expected:
            agree += 1
        else:
            mismatches.append(idx)
    elapsed = time.perf_counter() - began
    passed = graphs >= 200 and agree == graphs and elapsed < 60
    acceptance(2, passed, f"{agree}/{graphs} agree (valid={verdicts[True]}, invalid={verdicts[False]}), "
                          f"{elapsed:.1f}s")
    assert mismatches == []
    assert graphs >= 200 and verdicts[True] > 20 and verdicts[False] > 20
    assert gates["AND"] > 0 and gates["XOR"] > 0
    assert elapsed < 60


# --- 3. replay determinism ---------------------------------------------------------

def fuzz_run(rng):
    s = System()
    for _ in range(3):
        s.publish("ITEM_DESC", "w", gen.well_formed(rng, max_activities=6, composite_p=0.15))
    item = s.instantiate("i", "w@1")
    inserted = 0
    for _ in range(200):
        if len(item.log) >= 50 or item.status is not ItemStatus.ACTIVE:
            break
        p = rng.random()
        try:
            if p < 0.75:
                net = s.engine.state_net(item.state)
                nodes = sorted(q for q in net.nodes if net.skippable(q))
                enabled = sorted(s.enabled("i"))
                started = sorted(q for q, st in item.states.items() if st is ActivityState.STARTED)
                pool = (enabled + started) or nodes
                a = rng.choice(pool if rng.random() < 0.9 else nodes)
                if rng.random() < 0.2:
                    tr = rng.choice(["START", "COMPLETE", "SKIP"])
                else:
                    tr = "COMPLETE" if a in started else "START"
                s.fire("i", a, tr, outcome=gen.outcome(rng))
            elif p < 0.85:
                s.migrate("i", rng.randint(1, 3))
            else:
                graph = s.engine.effective_graph(item)
                kind = rng.randrange(3)
                if kind == 0:
                    inserted += 1
                    after = rng.choice([n.id for n in graph.nodes])
                    s.apply_adhoc("i", InsertAfter(ActivityDef(f"X{inserted}"), after))
                elif kind == 1:
                    net = s.engine.state_net(item.state)
                    s.apply_adhoc("i", SkipActivity(rng.choice(sorted(net.nodes))))
                else:
                    e = rng.choice(graph.edges)
                    s.apply_adhoc("i", ReplaceGuard(e.source, e.target, parse_expr("$o.x == 2")))
        except DDSError:
            pass
    return s, item


def test_acceptance_3_replay_determinism(acceptance):
    runs, equal, kinds, lengths = 0, 0, Counter(), []
    for rng in gen.rngs(1000, seed=3):
        s, item = fuzz_run(rng)
        runs += 1
        lengths.append(len(item.log))
        kinds.update(e.transition.value for e in item.log)
        equal += s.replay("i").serialize() == item.serialize()
    passed = runs >= 1000 and equal == runs and max(lengths) <= 50
    acceptance(3, passed, f"{equal}/{runs} byte-identical, {kinds['MIGRATE']} migrations, "
                          f"{kinds['ADHOC']} ad-hoc deltas, max {max(lengths)} events")
    assert equal == runs >= 1000
    assert max(lengths) <= 50
    assert kinds["MIGRATE"] > 100 and kinds["ADHOC"] > 100


# --- 4. live pipeline reconfiguration ------------------------------------------------

def expected_pipeline():
    """Per-endpoint messages derived from the order generator, without running connectors."""
    def canon(obj):
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    out = {name: [] for name in pipeline.OUTPUTS}
    for n in range(1, 21):
        if n == 15:
            mid = "o15/intake!dead"
            out[DEAD_LETTER].append(canon({
                "endpoint": DEAD_LETTER, "format": "FLAT_RECORD", "id": mid,
                "headers": [["msg-id", mid], ["format", "FLAT_RECORD"],
                            ["error", "PARSE_ERROR: line 2 column 1: expected key=value"]],
                "payload": pipeline.order(15).payload}))
            continue
        price = 40 + (n * 37) % 120
        qty = n % 4 + 1
        amount = price if n <= 10 else price + 25
        note = f"{'std' if n <= 10 else 'list'}:o{n}x{qty}"
        target = "approve.in" if amount > 100 else "auto.in"
        payload = canon({"name": "out", "children": [],
                         "attrs": {"id": f"o{n}", "amount": amount, "note": note, "large": amount > 100}})
        mid = f"o{n}/intake/pricing/router"
        out[target].append(canon({"endpoint": target, "format": "CANONICAL", "id": mid,
                                  "headers": [["msg-id", mid], ["format", "CANONICAL"]], "payload": payload}))
    return out


def test_acceptance_4_live_reconfiguration(acceptance):
    reports, before = [], {}

    def on_migrate(report):
        reports.append(report)
        before.update(pipeline.outputs(s))

    s = System()
    pipeline.drive(s, on_migrate=on_migrate)
    got = pipeline.outputs(s)
    golden = json.loads(GOLDEN.read_text("utf-8"))
    derived = expected_pipeline()
    early_unchanged = all(got[k][:len(before[k])] == before[k] for k in before)
    early_ids = sorted(json.loads(m)["id"].split("/")[0] for k in before for m in before[k])
    sent = len(s.bus.history("orders.in"))
    delivered = len(s.bus.history("approve.in")) + len(s.bus.history("auto.in"))
    dead = len(s.bus.history(DEAD_LETTER))
    queues_empty = all(not ep.queue for name, ep in s.bus.endpoints.items() if name in s.bus.handlers)
    pricing = s.integration.item("pricing")
    again = System()
    pipeline.drive(again)
    deterministic = again.snapshot() == s.snapshot()
    valid = len(reports) == 1 and reports[0].valid
    passed = (got == golden == derived and valid and early_unchanged and early_ids == sorted(f"o{n}" for n in range(1, 11))
              and sent == 20 and sent == delivered + dead and queues_empty and pricing.described_by.version == 2
              and deterministic)
    acceptance(4, passed, f"approve={len(got['approve.in'])} auto={len(got['auto.in'])} dead={dead}, "
                          f"sent {sent} = delivered {delivered} + dead-letter {dead}, "
                          f"migration {'VALID' if valid else 'INVALID'}, deterministic={deterministic}")
    assert got == golden
    assert got == derived
    assert valid and pricing.described_by.version == 2
    assert early_unchanged and len(early_ids) == 10
    assert sent == 20 and sent == delivered + dead and queues_empty
    assert deterministic
    v2_notes = [json.loads(json.loads(m)["payload"])["attrs"]["note"] for k in ("approve.in", "auto.in")
                for m in got[k] if int(json.loads(m)["id"].split("/")[0][1:]) > 10]
    assert len(v2_notes) == 9 and all(n.startswith("list:") for n in v2_notes)
    completes = [e for e in s.engine.get(connector_item_id("pricing")).log if e.transition is EventType.COMPLETE]
    assert len(completes) == 19


# --- 5. validator catalog --------------------------------------------------------------

def G(nodes, edges, start="start", end="end"):
    return WorkflowGraph(tuple(nodes), tuple(edges), start, end)


A = ActivityDef
T = Transition
GUARD = parse_expr("$o.x > 1")

CATALOG = [
    ("UNREACHABLE",
     G([A("start"), A("A"), A("B"), A("end")], [T("start", "A"), T("A", "end"), T("B", "B")]),
     G([A("start"), A("A"), A("end")], [T("start", "A"), T("A", "end")])),
    ("DEAD_END",
     G([A("start"), A("A", split=Gate.AND), A("B"), A("C"), A("end")],
       [T("start", "A"), T("A", "B"), T("A", "C"), T("B", "end")]),
     G([A("start"), A("A", split=Gate.AND), A("B"), A("C"), A("end", join=Gate.AND)],
       [T("start", "A"), T("A", "B"), T("A", "C"), T("B", "end"), T("C", "end")])),
    ("NO_DEFAULT",
     G([A("start"), A("A", split=Gate.XOR), A("B"), A("C"), A("end", join=Gate.XOR)],
       [T("start", "A"), T("A", "B", GUARD), T("A", "C", parse_expr("$o.x <= 1")), T("B", "end"), T("C", "end")]),
     G([A("start"), A("A", split=Gate.XOR), A("B"), A("C"), A("end", join=Gate.XOR)],
       [T("start", "A"), T("A", "B", GUARD), T("A", "C", None, True), T("B", "end"), T("C", "end")])),
    ("GUARD_ON_NON_XOR",
     G([A("start"), A("A"), A("end")], [T("start", "A", GUARD), T("A", "end")]),
     sequence("A")),
    ("SPLIT_MISMATCH",
     G([A("start"), A("A"), A("B"), A("C"), A("end", join=Gate.AND)],
       [T("start", "A"), T("A", "B"), T("A", "C"), T("B", "end"), T("C", "end")]),
     G([A("start"), A("A", split=Gate.AND), A("B"), A("C"), A("end", join=Gate.AND)],
       [T("start", "A"), T("A", "B"), T("A", "C"), T("B", "end"), T("C", "end")])),
    ("JOIN_MISMATCH",
     G([A("start"), A("A", split=Gate.AND), A("B"), A("C"), A("end")],
       [T("start", "A"), T("A", "B"), T("A", "C"), T("B", "end"), T("C", "end")]),
     G([A("start"), A("A", split=Gate.AND), A("B"), A("C"), A("end", join=Gate.AND)],
       [T("start", "A"), T("A", "B"), T("A", "C"), T("B", "end"), T("C", "end")])),
    ("SPLIT_MISMATCH",
     G([A("start"), A("A", split=Gate.XOR), A("end")], [T("start", "A"), T("A", "end", None, True)]),
     sequence("A")),
    ("DUPLICATE_ID",
     G([A("start"), A("A"), A("A"), A("end")], [T("start", "A"), T("A", "end")]),
     G([A("start"), A("A"), A("end")], [T("start", "A"), T("A", "end")])),
    ("MISSING_START",
     G([A("A"), A("end")], [T("A", "end")], start="begin"),
     G([A("begin"), A("A"), A("end")], [T("begin", "A"), T("A", "end")], start="begin")),
    ("MISSING_END",
     G([A("start"), A("A")], [T("start", "A")], end="finish"),
     G([A("start"), A("A"), A("finish")], [T("start", "A"), T("A", "finish")], end="finish")),
    ("MULTIPLE_DEFAULTS",
     G([A("start"), A("A", split=Gate.XOR), A("B"), A("C"), A("end", join=Gate.XOR)],
       [T("start", "A"), T("A", "B", None, True), T("A", "C", None, True), T("B", "end"), T("C", "end")]),
     G([A("start"), A("A", split=Gate.XOR), A("B"), A("C"), A("end", join=Gate.XOR)],
       [T("start", "A"), T("A", "B", None, True), T("A", "C", GUARD), T("B", "end"), T("C", "end")])),
    ("START_HAS_INCOMING",
     G([A("start"), A("A"), A("end")], [T("start", "A"), T("A", "start"), T("A", "end")]),
     sequence("A")),
]


def test_acceptance_5_validator_catalog(acceptance):
    rejected, accepted, problems = 0, 0, []
    for i, (code, bad, twin) in enumerate(CATALOG):
        found = {v.code for v in validate_graph(bad)}
        if code in found:
            rejected += 1
        else:
            problems.append(f"#{i} expected {code}, got {sorted(found)}")
        if validate_graph(twin) == [] and ref_graph.check(twin.to_dict()) == set():
            accepted += 1
        else:
            problems.append(f"#{i} twin rejected: {validate_graph(twin)}")
        if code != "DUPLICATE_ID":
            assert code in {c for c, _ in ref_graph.check(bad.to_dict())}, (i, code)
    passed = len(CATALOG) == 12 and rejected == accepted == 12
    acceptance(5, passed, f"{rejected}/12 bad graphs rejected with the expected code, {accepted}/12 twins accepted")
    assert problems == []
    assert len(CATALOG) == 12


# --- 6. expression goldens -----------------------------------------------------------

def test_acceptance_6_expression_goldens(acceptance):
    matched = 0
    for text, expected in test_expr.GOLDENS:
        ref = test_expr._norm(ref_expr.evaluate(text, test_expr.RECORD.to_dict()))
        got = test_expr._norm(test_expr.evaluate(text, test_expr.RECORD))
        matched += ref == got == expected and type(got) is type(expected)
    roundtrips = 0
    for rng in gen.rngs(500, seed=60):
        ast = gen.random_ast(rng)
        text = print_expr(ast)
        roundtrips += parse_expr(text) == ast and print_expr(parse_expr(text)) == text
    total = len(test_expr.GOLDENS)
    passed = total >= 40 and matched == total and roundtrips == 500
    acceptance(6, passed, f"{matched}/{total} goldens match the reference, {roundtrips}/500 round trips")
    assert total >= 40 and matched == total
    assert roundtrips == 500


# --- 7. crash consistency -------------------------------------------------------------

def test_acceptance_7_crash_consistency(acceptance, tmp_path):
    probe = Faults()
    reference_sys = System(tmp_path / "reference", fault=probe, dead_letter="FILE")
    pipeline.drive(reference_sys, CommMode.FILE)
    reference = pipeline.outputs(reference_sys, dedup=True)
    golden = json.loads(GOLDEN.read_text("utf-8"))
    total = probe.calls
    recovered, crashed, duplicates, points, bad = 0, 0, 0, Counter(), []
    for i in range(50):
        at = 1 + (i * (total - 1)) // 49
        root = tmp_path / f"crash{i}"
        faults = Faults(at)
        try:
            pipeline.drive(System(root, fault=faults, dead_letter="FILE"), CommMode.FILE)
        except Crash as exc:
            crashed += 1
            points[str(exc)] += 1
        resumed = System(root, dead_letter="FILE")
        pipeline.drive(resumed, CommMode.FILE)
        final = pipeline.outputs(resumed, dedup=True)
        raw = pipeline.outputs(resumed)
        duplicates += sum(len(raw[k]) - len(final[k]) for k in raw)
        if final == reference:
            recovered += 1
        else:
            bad.append(at)
    passed = crashed == 50 and recovered == 50 and reference == golden
    acceptance(7, passed, f"{recovered}/50 crash points recovered ({crashed} crashed, {duplicates} duplicates "
                          f"removed by msg-id, points {dict(sorted(points.items()))})")
    assert reference == golden
    assert crashed == 50
    assert bad == []
