"""Simulated transport: named endpoints with FIFO queues or file spools.

Delivery is pull-based. ``Bus.step`` hands at most one pending message to
each bound handler, in an order drawn from a seeded RNG, so a run is a
pure function of its initial state and seed.

FILE endpoints keep their queue on disk: one ``NNNNNN.msg`` file per
message, written to a temp name and renamed into place. A consumed file is
renamed to ``NNNNNN.done`` only after its handler returned and its outputs
were sent, which makes FILE delivery at-least-once across crashes.
"""

from __future__ import annotations

import os
import random
import threading
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from urllib.parse import quote, unquote

from . import canonical
from .errors import DuplicateEndpoint, NotFound, StoreIOError

DEAD_LETTER = "dead-letter"
RESERVED_HEADERS = ("msg-id", "format", "error")


class CommMode(str, Enum):
    INPROC = "INPROC"
    FILE = "FILE"


@dataclass(frozen=True)
class Message:
    id: str
    endpoint: str
    payload: str
    format: str = "CANONICAL"
    headers: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        raw = self.headers
        pairs = tuple(raw.items()) if isinstance(raw, dict) else tuple(tuple(p) for p in raw)
        object.__setattr__(self, "headers", pairs)

    def header(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.headers:
            if k == key:
                return v
        return default

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "endpoint": self.endpoint,
            "payload": self.payload,
            "format": self.format,
            "headers": [[k, v] for k, v in self.headers],
        }

    def encode(self) -> bytes:
        return canonical.encode(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Message":
        return cls(data["id"], data.get("endpoint", ""), data["payload"], data.get("format", "CANONICAL"),
                   tuple((k, v) for k, v in data.get("headers", [])))

    @classmethod
    def decode(cls, raw: bytes | str) -> "Message":
        return cls.from_dict(canonical.loads(raw))


@dataclass
class Endpoint:
    name: str
    mode: CommMode
    spool: Path | None = None
    queue: deque = field(default_factory=deque)
    next_receipt: int = 1
    history: list[Message] = field(default_factory=list)

    def pending(self) -> int:
        return len(self.queue)


Handler = Callable[[Message], list[Message]]


def _noop(point: str) -> None:
    pass


class Bus:
    """Endpoint registry plus the deterministic stepping driver."""

    def __init__(self, spool_root: str | Path | None = None, fault: Callable[[str], None] | None = None,
                 dead_letter: CommMode | str = CommMode.INPROC):
        self.spool_root = Path(spool_root) if spool_root is not None else None
        self.fault = fault or _noop
        self.endpoints: dict[str, Endpoint] = {}
        self.handlers: dict[str, Handler] = {}
        self.steps = 0
        self._lock = threading.RLock()
        if self.spool_root is not None and self.spool_root.is_dir():
            for entry in sorted(self.spool_root.iterdir()):
                if entry.is_dir():
                    self.open_endpoint(unquote(entry.name), CommMode.FILE)
        self.ensure_endpoint(DEAD_LETTER, dead_letter)

    # --- endpoints ----------------------------------------------------------

    def open_endpoint(self, name: str, mode: CommMode | str = CommMode.INPROC) -> Endpoint:
        mode = CommMode(mode)
        if not name:
            raise ValueError("endpoint name must be non-empty")
        with self._lock:
            if name in self.endpoints:
                raise DuplicateEndpoint(f"endpoint {name!r} already open")
            ep = Endpoint(name, mode)
            if mode is CommMode.FILE:
                if self.spool_root is None:
                    raise StoreIOError("FILE endpoints need a spool directory")
                ep.spool = self.spool_root / quote(name, safe="")
                try:
                    ep.spool.mkdir(parents=True, exist_ok=True)
                except OSError as exc:
                    raise StoreIOError(f"cannot create spool for {name!r}: {exc}") from None
                self._rescan(ep)
            self.endpoints[name] = ep
            return ep

    def ensure_endpoint(self, name: str, mode: CommMode | str = CommMode.INPROC) -> Endpoint:
        with self._lock:
            ep = self.endpoints.get(name)
            return ep if ep is not None else self.open_endpoint(name, mode)

    def _close(self, name: str) -> None:
        self.endpoints.pop(name, None)
        self.handlers.pop(name, None)

    def close_endpoint(self, name: str) -> None:
        with self._lock:
            if name not in self.endpoints:
                raise NotFound(f"no endpoint {name!r}")
            self._close(name)

    def endpoint(self, name: str) -> Endpoint:
        ep = self.endpoints.get(name)
        if ep is None:
            raise NotFound(f"no endpoint {name!r}")
        return ep

    def _rescan(self, ep: Endpoint) -> None:
        """Rebuild queue, history and receipt counter from the spool directory."""
        assert ep.spool is not None
        files: dict[int, Path] = {}
        for f in ep.spool.iterdir():
            stem, dot, ext = f.name.partition(".")
            if stem.isdigit() and len(stem) == 6 and ext in ("msg", "done"):
                files[int(stem)] = f
        ep.queue.clear()
        ep.history.clear()
        for seq in sorted(files):
            msg = Message.decode(files[seq].read_bytes())
            ep.history.append(msg)
            if files[seq].suffix == ".msg":
                ep.queue.append((seq, msg))
        ep.next_receipt = max(files, default=0) + 1

    # --- sending and receiving ---------------------------------------------

    def send(self, name: str, msg: Message) -> int:
        with self._lock:
            ep = self.endpoint(name)
            msg = replace(msg, endpoint=name)
            receipt = ep.next_receipt
            if ep.mode is CommMode.FILE:
                assert ep.spool is not None
                final = ep.spool / f"{receipt:06d}.msg"
                tmp = ep.spool / f".{receipt:06d}.tmp"
                try:
                    tmp.write_bytes(msg.encode())
                    self.fault("spool.write")
                    os.replace(tmp, final)
                except OSError as exc:
                    raise StoreIOError(f"spool write failed on {name!r}: {exc}") from None
            ep.next_receipt = receipt + 1
            ep.queue.append((receipt, msg))
            ep.history.append(msg)
            return receipt

    def peek(self, name: str) -> Message | None:
        ep = self.endpoint(name)
        return ep.queue[0][1] if ep.queue else None

    def ack(self, name: str) -> None:
        with self._lock:
            ep = self.endpoint(name)
            receipt, _ = ep.queue[0]
            if ep.mode is CommMode.FILE:
                assert ep.spool is not None
                self.fault("spool.done")
                try:
                    os.replace(ep.spool / f"{receipt:06d}.msg", ep.spool / f"{receipt:06d}.done")
                except OSError as exc:
                    raise StoreIOError(f"cannot mark {receipt} consumed on {name!r}: {exc}") from None
            ep.queue.popleft()

    def receive(self, name: str) -> Message | None:
        """Pop the head message (for endpoints nobody is bound to)."""
        msg = self.peek(name)
        if msg is not None:
            self.ack(name)
        return msg

    def pending(self, name: str) -> list[Message]:
        return [m for _, m in self.endpoint(name).queue]

    def history(self, name: str) -> list[Message]:
        return list(self.endpoint(name).history)

    # --- delivery -----------------------------------------------------------

    def bind(self, name: str, handler: Handler) -> None:
        self.endpoint(name)
        self.handlers[name] = handler

    def unbind(self, name: str) -> None:
        self.handlers.pop(name, None)

    def step(self, seed: int = 0) -> list[tuple[str, Message]]:
        """Deliver at most one message per bound endpoint, in seeded order."""
        with self._lock:
            ready = sorted(n for n in self.handlers if n in self.endpoints and self.endpoints[n].queue)
            if not ready:
                return []  # idle steps do not advance the RNG stream
            rng = random.Random(f"{seed}:{self.steps}")
            self.steps += 1
            rng.shuffle(ready)
            deliveries = []
            for name in ready:
                msg = self.peek(name)
                if msg is None:
                    continue
                for out in self.handlers[name](msg):
                    self.ensure_endpoint(out.endpoint, self.endpoints[name].mode)
                    self.send(out.endpoint, out)
                self.ack(name)
                deliveries.append((name, msg))
            return deliveries

    def run(self, seed: int = 0, max_steps: int = 10_000) -> list[tuple[str, Message]]:
        """Step until no bound endpoint has pending messages."""
        trace: list[tuple[str, Message]] = []
        for _ in range(max_steps):
            batch = self.step(seed)
            if not batch:
                break
            trace.extend(batch)
        return trace

    # --- state export (INPROC endpoints only live in memory) ----------------

    def export_state(self) -> dict:
        endpoints = {}
        for name, ep in sorted(self.endpoints.items()):
            entry: dict = {"mode": ep.mode.value}
            if ep.mode is CommMode.INPROC:
                entry["next"] = ep.next_receipt
                entry["queue"] = [[r, m.to_dict()] for r, m in ep.queue]
                entry["history"] = [m.to_dict() for m in ep.history]
            endpoints[name] = entry
        return {"steps": self.steps, "endpoints": endpoints}

    def import_state(self, state: dict) -> None:
        with self._lock:
            self.steps = state.get("steps", 0)
            for name, entry in state.get("endpoints", {}).items():
                mode = CommMode(entry["mode"])
                ep = self.ensure_endpoint(name, mode)
                if mode is CommMode.INPROC:
                    ep.next_receipt = entry["next"]
                    ep.queue = deque((r, Message.from_dict(m)) for r, m in entry["queue"])
                    ep.history = [Message.from_dict(m) for m in entry["history"]]
