"""One object wiring the repository, engine, bus, connectors and store.

With a root directory every publish and event is written to the store
before it becomes visible in memory, and ``System(root)`` rebuilds the
whole system from disk: descriptions are reloaded, item logs replayed,
connectors re-bound and FILE spools rescanned.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import itertools
import tarfile
import threading
import zlib
from pathlib import Path
from urllib.parse import quote, unquote

from . import canonical
from .docmodel.doc import Node
from .enactment.engine import DEFAULT_K, Engine, Event, EventType, Item
from .errors import CorruptArchive, StoreIOError
from .evolution.delta import DeltaOp
from .evolution.migration import MigrationReport, apply_adhoc, migrate, migration_report
from .integration import CONNECTOR_PREFIX, ConnectorSpec, Integration
from .metamodel.graph import VersionRef
from .metamodel.metaschema import Kind
from .metamodel.repository import DescriptionRecord, Repository
from .store import Store, _atomic_write, decode_frames, encode_frames
from .transport import Bus, CommMode, Message

BUS_STATE = "bus.json"
MANIFEST = "manifest.json"


class LogicalClock:
    """Deterministic clock: 1, 2, 3, ... (thread-safe)."""

    def __init__(self, start: int = 0):
        self._next = itertools.count(start + 1)
        self._lock = threading.Lock()
        self.last = start

    def __call__(self) -> int:
        with self._lock:
            self.last = next(self._next)
            return self.last

    def advance_to(self, value: int) -> None:
        with self._lock:
            if value > self.last:
                self._next = itertools.count(value + 1)
                self.last = value


def _batches(events: list[Event]) -> list[list[Event]]:
    """Group a log the way it was appended: the instantiate ENABLEs, then singles."""
    head = 1
    while head < len(events) and events[head].transition is EventType.ENABLE:
        head += 1
    return [events[:head]] + [[e] for e in events[head:]]


class System:
    def __init__(self, root: str | Path | None = None, *, clock=None, fault=None, k: int = DEFAULT_K,
                 dead_letter: CommMode | str = CommMode.INPROC):
        self.root = Path(root) if root is not None else None
        self.clock = clock if clock is not None else LogicalClock()
        self.store = Store(self.root, fault) if self.root is not None else None
        self.repo = Repository(self.clock, on_publish=self._persist_record)
        self.engine = Engine(self.repo, clock=self.clock, on_event=self._persist_events, k=k)
        spool = self.root / "spool" if self.root is not None else None
        self.bus = Bus(spool, fault, dead_letter)
        self.integration = Integration(self.repo, self.engine, self.bus)
        if self.store is not None:
            self._load_store()

    @classmethod
    def open(cls, root: str | Path, **kwargs) -> "System":
        return cls(root, **kwargs)

    # --- persistence hooks --------------------------------------------------

    def _persist_record(self, record: DescriptionRecord) -> None:
        if self.store is None:
            return
        seq = self.store.append(f"desc/{record.name}", record.encoded)
        if seq != record.version:
            raise StoreIOError(f"store holds {seq} versions of {record.name!r}, expected {record.version}")

    def _persist_events(self, item_id: str, events: list[Event]) -> None:
        if self.store is not None:
            self.store.append_batch(f"item/{item_id}", [e.encode() for e in events])

    # --- loading ------------------------------------------------------------

    def _load(self, descs: dict[str, list[bytes]], logs: dict[str, list[bytes]]) -> None:
        for name in sorted(descs):
            for raw in descs[name]:
                self.repo.load(DescriptionRecord.from_bytes(raw))
        latest = 0
        for item_id in sorted(logs):
            events = [Event.decode(raw) for raw in logs[item_id]]
            item = self.engine.replay(events)
            self.engine.adopt(item)
            latest = max([latest, *(e.timestamp for e in events)])
        for rec in self.repo.records():
            latest = max(latest, rec.published_at)
        if hasattr(self.clock, "advance_to"):
            self.clock.advance_to(latest)
        for name in self.integration.connectors():
            self.integration.attach(name)

    def _load_store(self) -> None:
        assert self.store is not None
        descs: dict[str, list[bytes]] = {}
        logs: dict[str, list[bytes]] = {}
        for key in self.store.log_keys():
            kind, _, name = key.partition("/")
            (descs if kind == "desc" else logs)[name] = self.store.read_all(key)
        self._load(descs, logs)
        state_file = self.root / BUS_STATE  # type: ignore[operator]
        if state_file.exists():
            self.bus.import_state(canonical.loads(state_file.read_bytes()))

    def checkpoint(self) -> None:
        """Persist in-memory bus queues (INPROC endpoints) next to the store."""
        if self.root is None:
            return
        path = self.root / BUS_STATE
        data = canonical.encode(self.bus.export_state())
        if not path.exists() or path.read_bytes() != data:
            _atomic_write(path, data)

    # --- convenience API ----------------------------------------------------

    def publish(self, kind: Kind | str, name: str, body) -> VersionRef:
        return self.repo.publish(kind, name, body)

    def instantiate(self, item_id: str, desc: VersionRef | str, agent: str = "system") -> Item:
        return self.engine.instantiate(item_id, desc, agent)

    def enabled(self, item_id: str) -> set[str]:
        return self.engine.enabled(item_id)

    def fire(self, item_id: str, activity_id: str, transition, agent: str = "", outcome: Node | None = None) -> Event:
        return self.engine.fire(item_id, activity_id, transition, agent, outcome)

    def migration_report(self, item_id: str, target: VersionRef | str | int) -> MigrationReport:
        return migration_report(self.engine, item_id, self._target(item_id, target))

    def migrate(self, item_id: str, target: VersionRef | str | int, agent: str = "system") -> Item:
        item = migrate(self.engine, item_id, self._target(item_id, target), agent)
        if item.id.startswith(CONNECTOR_PREFIX):
            self.integration.attach(item.id[len(CONNECTOR_PREFIX):])
        return item

    def _target(self, item_id: str, target: VersionRef | str | int) -> VersionRef | str:
        if isinstance(target, int) or (isinstance(target, str) and target.isdigit()):
            return VersionRef(self.engine.get(item_id).described_by.name, int(target))
        return target

    def apply_adhoc(self, item_id: str, op: DeltaOp, agent: str = "system") -> Item:
        return apply_adhoc(self.engine, item_id, op, agent)

    def deploy_connector(self, name: str, spec: ConnectorSpec | dict) -> Item:
        return self.integration.deploy_connector(name, spec)

    def send(self, endpoint: str, msg: Message) -> int:
        return self.bus.send(endpoint, msg)

    def step(self, seed: int = 0):
        return self.bus.step(seed)

    def logged_events(self, item_id: str) -> list[Event]:
        """The item's log as stored (or as held in memory without a store)."""
        if self.store is not None:
            return [Event.decode(raw) for raw in self.store.read_all(f"item/{item_id}")]
        return list(self.engine.get(item_id).log)

    def replay(self, item_id: str) -> Item:
        return self.engine.replay(self.logged_events(item_id))

    # --- snapshot / restore -------------------------------------------------

    def _members(self) -> dict[str, bytes]:
        members: dict[str, bytes] = {}
        for rec in self.repo.records():
            members[f"store/desc/{quote(rec.name, safe='')}/{rec.version}.rec"] = rec.encoded
        for item_id in sorted(self.engine.items):
            log = self.engine.items[item_id].log
            data = b"".join(encode_frames([e.encode() for e in batch]) for batch in _batches(log))
            members[f"store/item/{quote(item_id, safe='')}/log.rec"] = data
        for name, ep in sorted(self.bus.endpoints.items()):
            if ep.mode is CommMode.FILE and ep.spool is not None:
                for f in sorted(ep.spool.iterdir()):
                    if f.suffix in (".msg", ".done") and not f.name.startswith("."):
                        members[f"spool/{quote(name, safe='')}/{f.name}"] = f.read_bytes()
        return members

    def snapshot(self, archive: str | Path | None = None) -> bytes:
        """Archive the whole system (call while quiescent). Deterministic bytes."""
        members = self._members()
        manifest = {
            "format": 1,
            "files": {p: hashlib.sha256(b).hexdigest() for p, b in sorted(members.items())},
            "bus": self.bus.export_state(),
        }
        members[MANIFEST] = canonical.encode(manifest)
        raw = io.BytesIO()
        with tarfile.open(fileobj=raw, mode="w", format=tarfile.PAX_FORMAT) as tar:
            for path in sorted(members):
                info = tarfile.TarInfo(path)
                info.size = len(members[path])
                info.mtime = 0
                info.mode = 0o644
                tar.addfile(info, io.BytesIO(members[path]))
        out = io.BytesIO()
        with gzip.GzipFile(fileobj=out, mode="wb", mtime=0) as gz:
            gz.write(raw.getvalue())
        data = out.getvalue()
        if archive is not None:
            try:
                _atomic_write(Path(archive), data)
            except OSError as exc:
                raise StoreIOError(f"cannot write archive: {exc}") from None
        return data

    @classmethod
    def restore(cls, archive: str | Path | bytes, root: str | Path | None = None, **kwargs) -> "System":
        if isinstance(archive, (str, Path)):
            try:
                archive = Path(archive).read_bytes()
            except OSError as exc:
                raise StoreIOError(f"cannot read archive: {exc}") from None
        members = _read_archive(archive)
        manifest = canonical.loads(members.pop(MANIFEST))
        if root is not None:
            root = Path(root)
            if root.exists() and any(root.iterdir()):
                raise StoreIOError(f"restore target {root} is not empty")
            for path, data in members.items():
                target = root / path
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
            system = cls(root, **kwargs)
        else:
            if any(p.startswith("spool/") for p in members):
                raise StoreIOError("archive holds FILE spools; restore it into a directory")
            system = cls(None, **kwargs)
            descs: dict[str, list[bytes]] = {}
            logs: dict[str, list[bytes]] = {}
            for path in sorted(members, key=_member_order):
                parts = path.split("/")
                if parts[:2] == ["store", "desc"]:
                    descs.setdefault(unquote(parts[2]), []).append(members[path])
                elif parts[:2] == ["store", "item"]:
                    logs[unquote(parts[2])] = decode_frames(members[path])[0]
            system._load(descs, logs)
        system.bus.import_state(manifest["bus"])
        return system


def _member_order(path: str) -> tuple:
    parts = path.split("/")
    if parts[:2] == ["store", "desc"]:
        return (0, parts[2], int(parts[3].split(".")[0]))
    return (1, path, 0)


def _read_archive(data: bytes) -> dict[str, bytes]:
    try:
        raw = gzip.decompress(data)
        members: dict[str, bytes] = {}
        with tarfile.open(fileobj=io.BytesIO(raw), mode="r") as tar:
            for info in tar.getmembers():
                if not info.isfile() or info.name.startswith("/") or ".." in info.name.split("/"):
                    raise CorruptArchive(f"unexpected member {info.name!r}")
                fh = tar.extractfile(info)
                assert fh is not None
                members[info.name] = fh.read()
    except CorruptArchive:
        raise
    except (OSError, EOFError, zlib.error, tarfile.TarError) as exc:
        raise CorruptArchive(f"archive is unreadable: {exc}") from None
    if MANIFEST not in members:
        raise CorruptArchive("archive has no manifest")
    try:
        manifest = canonical.loads(members[MANIFEST])
        files = manifest["files"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptArchive(f"bad manifest: {exc}") from None
    if set(files) != set(members) - {MANIFEST}:
        raise CorruptArchive("archive members do not match the manifest")
    for path, digest in files.items():
        if hashlib.sha256(members[path]).hexdigest() != digest:
            raise CorruptArchive(f"checksum mismatch on {path}")
    return members
