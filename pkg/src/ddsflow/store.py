"""Plain-file persistence: append-only record logs plus a directory index.

Layout under ``<root>/store``::

    desc/<name>/<version>.rec   one description record per file
    item/<id>/log.rec           framed event records
    index.dir                   sorted ``key<TAB>ref`` lines

Names are percent-quoted so any id maps to a single path segment. Writing
the record is the commit point; the index is rewritten (temp file + rename)
afterwards and rebuilt on open for records that never made it in.

A log frame is ``>IIB`` (payload length, crc32, last-of-batch flag) then the
payload. Frames appended together share one batch: a reader drops a
trailing batch that lacks its final frame, so multi-record appends are
all-or-nothing across a crash.
"""

from __future__ import annotations

import os
import struct
import threading
import zlib
from collections.abc import Callable, Sequence
from pathlib import Path
from urllib.parse import quote, unquote

from .errors import StoreIOError

_FRAME = struct.Struct(">IIB")


def _noop(point: str) -> None:
    pass


def _q(name: str) -> str:
    return quote(name, safe="")


def encode_frames(records: Sequence[bytes]) -> bytes:
    out = bytearray()
    for i, rec in enumerate(records):
        out += _FRAME.pack(len(rec), zlib.crc32(rec), 1 if i == len(records) - 1 else 0)
        out += rec
    return bytes(out)


def decode_frames(data: bytes) -> tuple[list[bytes], int]:
    """Complete records and the byte length of the intact prefix."""
    records: list[bytes] = []
    batch: list[bytes] = []
    pos = good = 0
    while pos + _FRAME.size <= len(data):
        length, crc, last = _FRAME.unpack_from(data, pos)
        body = data[pos + _FRAME.size: pos + _FRAME.size + length]
        if len(body) != length or zlib.crc32(body) != crc or last not in (0, 1):
            break
        pos += _FRAME.size + length
        batch.append(bytes(body))
        if last:
            records.extend(batch)
            batch = []
            good = pos
    return records, good


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name("." + path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class Store:
    """Single-writer-per-key record store; readers never see partial records."""

    def __init__(self, root: str | Path, fault: Callable[[str], None] | None = None):
        self.root = Path(root) / "store"
        self.fault = fault or _noop
        self._lock = threading.RLock()
        self._index: dict[str, str] = {}
        self._counts: dict[str, int] = {}
        try:
            (self.root / "desc").mkdir(parents=True, exist_ok=True)
            (self.root / "item").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreIOError(f"cannot create store at {self.root}: {exc}") from None
        self.recover()

    # --- keys ---------------------------------------------------------------

    @staticmethod
    def _split(log_key: str) -> tuple[str, str]:
        kind, sep, name = log_key.partition("/")
        if not sep or kind not in ("desc", "item") or not name:
            raise StoreIOError(f"bad log key {log_key!r}")
        return kind, name

    def _item_path(self, name: str) -> Path:
        return self.root / "item" / _q(name) / "log.rec"

    def _desc_dir(self, name: str) -> Path:
        return self.root / "desc" / _q(name)

    # --- index --------------------------------------------------------------

    def _write_index(self) -> None:
        lines = "".join(f"{k}\t{v}\n" for k, v in sorted(self._index.items()))
        self.fault("store.index")
        _atomic_write(self.root / "index.dir", lines.encode("utf-8"))

    def _read_index(self) -> dict[str, str]:
        path = self.root / "index.dir"
        if not path.exists():
            return {}
        out = {}
        for line in path.read_text("utf-8").splitlines():
            key, sep, ref = line.partition("\t")
            if sep:
                out[key] = ref
        return out

    def lookup(self, key: str) -> str | None:
        return self._index.get(key)

    def keys(self, prefix: str = "") -> list[str]:
        return sorted(k for k in self._index if k.startswith(prefix))

    # --- records ------------------------------------------------------------

    def append(self, log_key: str, record: bytes) -> int:
        return self.append_batch(log_key, [record])

    def append_batch(self, log_key: str, records: Sequence[bytes]) -> int:
        """Append records atomically as one batch; returns the last seq."""
        if not records:
            raise ValueError("empty batch")
        kind, name = self._split(log_key)
        with self._lock:
            seq = self._counts.get(log_key, 0)
            new_keys = []
            try:
                self.fault("store.append:before")
                if kind == "desc":
                    folder = self._desc_dir(name)
                    folder.mkdir(parents=True, exist_ok=True)
                    for rec in records:
                        seq += 1
                        _atomic_write(folder / f"{seq}.rec", rec)
                        new_keys.append((f"desc/{name}/{seq}", f"desc/{_q(name)}/{seq}.rec"))
                else:
                    path = self._item_path(name)
                    path.parent.mkdir(parents=True, exist_ok=True)
                    data = encode_frames(records)
                    with open(path, "ab") as fh:
                        half = len(data) // 2
                        fh.write(data[:half])
                        fh.flush()
                        self.fault("store.append:mid")
                        fh.write(data[half:])
                        fh.flush()
                        os.fsync(fh.fileno())
                    if seq == 0:
                        new_keys.append((log_key, f"item/{_q(name)}/log.rec"))
                    seq += len(records)
            except OSError as exc:
                raise StoreIOError(f"append to {log_key!r} failed: {exc}") from None
            self._counts[log_key] = seq
            if new_keys:
                self._index.update(new_keys)
                try:
                    self._write_index()
                except OSError as exc:
                    raise StoreIOError(f"index update failed: {exc}") from None
            return seq

    def read_all(self, log_key: str) -> list[bytes]:
        kind, name = self._split(log_key)
        try:
            if kind == "desc":
                folder = self._desc_dir(name)
                if not folder.is_dir():
                    return []
                versions = sorted(int(p.stem) for p in folder.glob("*.rec") if p.stem.isdigit())
                out = []
                for expected, v in enumerate(versions, start=1):
                    if v != expected:
                        break
                    out.append((folder / f"{v}.rec").read_bytes())
                return out
            path = self._item_path(name)
            if not path.exists():
                return []
            return decode_frames(path.read_bytes())[0]
        except OSError as exc:
            raise StoreIOError(f"read of {log_key!r} failed: {exc}") from None

    def log_keys(self) -> list[str]:
        """Every log present on disk, descriptions first."""
        out = []
        for p in sorted((self.root / "desc").iterdir()):
            if p.is_dir():
                out.append("desc/" + unquote(p.name))
        for p in sorted((self.root / "item").iterdir()):
            if p.is_dir() and (p / "log.rec").exists():
                out.append("item/" + unquote(p.name))
        return out

    # --- recovery -----------------------------------------------------------

    def recover(self) -> None:
        """Truncate torn log tails and index records that lack entries."""
        with self._lock:
            index = self._read_index()
            found: dict[str, str] = {}
            counts: dict[str, int] = {}
            for folder in sorted((self.root / "desc").iterdir()):
                if not folder.is_dir():
                    continue
                for tmp in folder.glob(".*.tmp"):
                    tmp.unlink()
                name = unquote(folder.name)
                records = self.read_all("desc/" + name)
                counts["desc/" + name] = len(records)
                for v in range(1, len(records) + 1):
                    found[f"desc/{name}/{v}"] = f"desc/{folder.name}/{v}.rec"
            for folder in sorted((self.root / "item").iterdir()):
                path = folder / "log.rec"
                if not path.exists():
                    continue
                data = path.read_bytes()
                records, good = decode_frames(data)
                if good < len(data):
                    with open(path, "r+b") as fh:
                        fh.truncate(good)
                if not records:
                    path.unlink()
                    continue
                name = unquote(folder.name)
                counts["item/" + name] = len(records)
                found["item/" + name] = f"item/{folder.name}/log.rec"
            self._counts = counts
            self._index = found
            if index != found:
                self._write_index()
