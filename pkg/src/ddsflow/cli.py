"""Command-line interface.

Every invocation opens the store (``--store`` or ``$DDSFLOW_STORE``),
performs one verb and exits: 0 on success, 1 on a domain error (the error
is printed), 2 on a usage error. ``run <script>`` executes a file of
commands with ``expect:`` assertion lines and prints a transcript.
Output never contains wall-clock time, so transcripts are reproducible.
"""

from __future__ import annotations

import argparse
import io
import os
import shlex
import sys
from pathlib import Path

from . import canonical
from .docmodel.doc import DataFormat, parse_doc
from .errors import DDSError, ValidationFailed
from .evolution.delta import delta_from_dict
from .system import System
from .transport import Message

STORE_ENV = "DDSFLOW_STORE"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddsflow", description="Description-driven workflow and integration engine.")
    p.add_argument("--store", help=f"store directory (default ${STORE_ENV})")
    p.add_argument("--init", action="store_true", help="create the store directory if missing")
    verbs = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    desc = verbs.add_parser("desc", help="publish and inspect descriptions").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    d = desc.add_parser("publish")
    d.add_argument("file")
    desc.add_parser("list")
    d = desc.add_parser("diff")
    d.add_argument("name")
    d.add_argument("va", type=int)
    d.add_argument("vb", type=int)

    item = verbs.add_parser("item", help="drive items").add_subparsers(dest="action", required=True,
                                                                        parser_class=_Parser)
    i = item.add_parser("create")
    i.add_argument("id")
    i.add_argument("desc", help="<name>@<version> or <name> for the latest")
    i = item.add_parser("enabled")
    i.add_argument("id")
    i = item.add_parser("fire")
    i.add_argument("id")
    i.add_argument("activity")
    i.add_argument("transition", choices=["start", "complete", "skip"])
    i.add_argument("--outcome")
    i.add_argument("--format", default="CANONICAL", choices=[f.value for f in DataFormat])
    i.add_argument("--agent", default="")
    i = item.add_parser("migrate")
    i.add_argument("id")
    i.add_argument("version")
    i.add_argument("--dry-run", action="store_true")
    i = item.add_parser("adhoc")
    i.add_argument("id")
    i.add_argument("delta_file")
    i = item.add_parser("show")
    i.add_argument("id")
    item.add_parser("list")

    conn = verbs.add_parser("connector", help="deploy connectors").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    c = conn.add_parser("deploy")
    c.add_argument("file")
    conn.add_parser("list")

    bus = verbs.add_parser("bus", help="simulated transport").add_subparsers(dest="action", required=True,
                                                                             parser_class=_Parser)
    b = bus.add_parser("send")
    b.add_argument("endpoint")
    b.add_argument("msg_file")
    b = bus.add_parser("step")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--count", type=int, default=1)
    b = bus.add_parser("history")
    b.add_argument("endpoint")
    b = bus.add_parser("open")
    b.add_argument("endpoint")
    b.add_argument("--mode", default="INPROC", choices=["INPROC", "FILE"])

    r = verbs.add_parser("replay", help="rebuild an item from its stored log")
    r.add_argument("id")
    s = verbs.add_parser("snapshot", help="archive the store")
    s.add_argument("archive")
    s = verbs.add_parser("restore", help="restore an archive into an empty store")
    s.add_argument("archive")
    s = verbs.add_parser("run", help="execute a scenario script")
    s.add_argument("script")
    return p


def _read_json(path: str):
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return canonical.loads(text)
    except ValueError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _json(obj) -> str:
    return canonical.dumps(obj)


def _store_root(args) -> Path:
    root = args.store or os.environ.get(STORE_ENV)
    if not root:
        raise UsageError(f"no store given (use --store or ${STORE_ENV})")
    path = Path(root)
    if not path.is_dir():
        if not args.init:
            raise UsageError(f"store {path} does not exist (use --init)")
        path.mkdir(parents=True)
    return path


def _open(args) -> System:
    args.system = System(_store_root(args))
    return args.system


def _cmd_desc(args, out) -> None:
    system = _open(args)
    if args.action == "publish":
        data = _read_json(args.file)
        if not isinstance(data, dict) or not {"kind", "name", "body"} <= set(data):
            raise UsageError("description file needs kind, name and body")
        ref = system.publish(data["kind"], data["name"], data["body"])
        print(f"published {ref}", file=out)
    elif args.action == "list":
        for name in system.repo.names():
            rec = system.repo.resolve(name)
            print(f"{name} {rec.kind.value} versions={rec.version}", file=out)
    else:
        print(_json(system.repo.diff(args.name, args.va, args.vb).to_dict()), file=out)


def _cmd_item(args, out) -> None:
    system = _open(args)
    if args.action == "create":
        item = system.instantiate(args.id, args.desc)
        print(f"created {item.id} {item.described_by} {item.status.value}", file=out)
    elif args.action == "enabled":
        print(" ".join(sorted(system.enabled(args.id))) or "(none)", file=out)
    elif args.action == "fire":
        outcome = None
        if args.outcome:
            try:
                text = Path(args.outcome).read_text("utf-8")
            except OSError as exc:
                raise UsageError(f"cannot read {args.outcome}: {exc.strerror}") from None
            outcome = parse_doc(text, args.format)
        ev = system.fire(args.id, args.activity, args.transition.upper(), args.agent, outcome)
        status = system.engine.get(args.id).status.value
        print(f"event {ev.seq} {ev.transition.value} {ev.activity_id} -> {status}", file=out)
    elif args.action == "migrate":
        if args.dry_run:
            print(_json(system.migration_report(args.id, args.version).to_dict()), file=out)
            return
        before = len(system.engine.get(args.id).log)
        item = system.migrate(args.id, args.version)
        print(f"migrated {item.id} to {item.described_by} (event {before + 1})", file=out)
        print("enabled: " + (" ".join(sorted(system.enabled(item.id))) or "(none)"), file=out)
    elif args.action == "adhoc":
        data = _read_json(args.delta_file)
        try:
            op = delta_from_dict(data)
        except (KeyError, ValueError, TypeError, DDSError) as exc:
            raise UsageError(f"bad delta: {exc}") from None
        item = system.apply_adhoc(args.id, op)
        print(f"adhoc {item.id} event {len(item.log)}", file=out)
        print("enabled: " + (" ".join(sorted(system.enabled(item.id))) or "(none)"), file=out)
    elif args.action == "show":
        print(_json(system.engine.get(args.id).to_dict()), file=out)
    else:
        for item_id in sorted(system.engine.items):
            item = system.engine.items[item_id]
            print(f"{item_id} {item.described_by} {item.status.value}", file=out)


def _cmd_connector(args, out) -> None:
    system = _open(args)
    if args.action == "deploy":
        data = _read_json(args.file)
        if not isinstance(data, dict) or not {"name", "spec"} <= set(data):
            raise UsageError("connector file needs name and spec")
        try:
            item = system.deploy_connector(data["name"], data["spec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad connector spec: {exc}") from None
        latest = system.repo.resolve(data["name"]).ref
        spec = system.integration.spec_of(item)
        print(f"deployed {latest}; item {item.id} on {item.described_by} bound to {spec.inbound_endpoint}",
              file=out)
    else:
        for name in system.integration.connectors():
            item = system.integration.item(name)
            spec = system.integration.spec_of(item)
            print(f"{name} {item.described_by} in={spec.inbound_endpoint} mode={spec.comm_mode.value}", file=out)


def _cmd_bus(args, out) -> None:
    system = _open(args)
    if args.action == "send":
        data = _read_json(args.msg_file)
        try:
            msg = Message.from_dict({"endpoint": args.endpoint, **data})
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad message: {exc}") from None
        print(f"receipt {system.send(args.endpoint, msg)}", file=out)
    elif args.action == "step":
        for _ in range(args.count):
            n = system.bus.steps
            batch = system.step(args.seed)
            if not batch:
                print(f"step {n}: idle", file=out)
                break
            for endpoint, msg in batch:
                print(f"step {n}: {endpoint} <- {msg.id}", file=out)
    elif args.action == "history":
        for i, msg in enumerate(system.bus.history(args.endpoint), start=1):
            print(f"{i} {msg.id} {msg.payload}", file=out)
        return
    else:
        system.bus.open_endpoint(args.endpoint, args.mode)
        print(f"opened {args.endpoint} {args.mode}", file=out)


def _cmd_replay(args, out) -> None:
    system = _open(args)
    replayed = system.replay(args.id)
    live = system.engine.get(args.id)
    verdict = "matches" if replayed.serialize() == live.serialize() else "DIFFERS FROM"
    print(f"replay {args.id}: {len(replayed.log)} events, state {verdict} live state", file=out)


def _cmd_snapshot(args, out) -> None:
    system = _open(args)
    data = system.snapshot(args.archive)
    print(f"snapshot {args.archive} ({len(data)} bytes)", file=out)


def _cmd_restore(args, out) -> None:
    root = _store_root(args)
    args.system = System.restore(args.archive, root)
    system = args.system
    print(f"restored {len(system.repo.records())} descriptions, {len(system.engine.items)} items", file=out)


def _cmd_run(args, out) -> int:
    script = Path(args.script)
    try:
        lines = script.read_text("utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read {script}: {exc.strerror}") from None
    base = ["--store", str(_store_root(args))]
    failures = 0
    last_code, last_text = 0, ""
    cwd = os.getcwd()
    os.chdir(script.parent.resolve())
    try:
        for lineno, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("expect:"):
                want = line[len("expect:"):].strip()
                if want.startswith("exit "):
                    ok = str(last_code) == want[len("exit "):].strip()
                else:
                    ok = want in last_text
                print(f"  expect {want}: {'ok' if ok else 'FAILED'}", file=out)
                failures += not ok
                continue
            print(f"$ {line}", file=out)
            buf = io.StringIO()
            last_code = run_command(base + shlex.split(line), buf)
            last_text = buf.getvalue()
            for text in last_text.splitlines():
                print(f"  {text}", file=out)
            if last_code:
                print(f"  [exit {last_code}]", file=out)
    finally:
        os.chdir(cwd)
    print(f"script {script.name}: {'ok' if not failures else f'{failures} expectation(s) failed'}", file=out)
    return 1 if failures else 0


_HANDLERS = {
    "desc": _cmd_desc,
    "item": _cmd_item,
    "connector": _cmd_connector,
    "bus": _cmd_bus,
    "replay": _cmd_replay,
    "snapshot": _cmd_snapshot,
    "restore": _cmd_restore,
}


def run_command(argv: list[str], out=None) -> int:
    """Execute one command line; returns the exit code."""
    out = out if out is not None else sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=out)
        return 2
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 2
    try:
        if args.verb == "run":
            return _cmd_run(args, out)
        _HANDLERS[args.verb](args, out)
        if getattr(args, "system", None) is not None:
            args.system.checkpoint()
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=out)
        return 2
    except ValidationFailed as exc:
        print(str(exc.code) + ": " + exc.message, file=out)
        for v in exc.violations:
            print(f"  {v}", file=out)
        return 1
    except DDSError as exc:
        print(str(exc), file=out)
        report = exc.info.get("report")
        if report is not None:
            print(_json(report.to_dict()), file=out)
        return 1


def main(argv: list[str] | None = None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
