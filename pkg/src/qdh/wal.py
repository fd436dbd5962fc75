"""Append-only record logs with snapshot compaction.

Every store persists as one JSONL mutation log plus an optional snapshot
file. A record is a single JSON line ``{"seq": n, "op": ..., "bundle":
..., ...}``; ``seq`` is contiguous per log. Rebuilding state = load
snapshot (if any), then replay records with ``seq`` greater than the
snapshot's.

Crash model: process death (kill -9). Appends flush to the OS after every
record, so a torn line can only be the final one; replay truncates such a
tail. A malformed line anywhere else means real corruption and refuses to
load. ``durability="fsync"`` additionally fsyncs every append for
power-loss durability.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path
from typing import Any, Callable, Optional

from qdh.errors import QdhError


class CrashInjected(RuntimeError):
    """Raised by test crash hooks to emulate dying mid-commit."""


# hook signature: (label) -> None; may raise CrashInjected or os._exit
CrashHook = Callable[[str], None]


class RecordLog:
    def __init__(self, directory: Path | str, *, durability: str = "os"):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.dir / "log.jsonl"
        self.snapshot_path = self.dir / "snapshot.json"
        self._durability = durability
        self._fh = None
        self._seq = 0

    # -- loading ---------------------------------------------------------

    def load(self) -> tuple[Optional[dict[str, Any]], list[dict[str, Any]]]:
        """Return (snapshot state or None, records after the snapshot).

        Must be called once before appending; establishes the next seq.
        """
        snapshot = None
        snap_seq = 0
        if self.snapshot_path.exists():
            try:
                doc = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
                snap_seq = int(doc["seq"])
                snapshot = doc["state"]
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise QdhError("CORRUPT_LOG", f"unreadable snapshot {self.snapshot_path}: {exc}")

        records: list[dict[str, Any]] = []
        last_seq = snap_seq
        if self.log_path.exists():
            raw = self.log_path.read_bytes()
            lines = raw.split(b"\n")
            for i, line in enumerate(lines):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    if i == len(lines) - 1 and not raw.endswith(b"\n"):
                        # torn tail from a crash mid-append: drop it
                        self._truncate_tail(len(raw) - len(line))
                        break
                    raise QdhError("CORRUPT_LOG",
                                   f"malformed record at {self.log_path} line {i + 1}")
                seq = int(rec["seq"])
                if seq > last_seq:
                    last_seq = seq
                if seq > snap_seq:
                    records.append(rec)
        self._seq = last_seq
        self._fh = open(self.log_path, "ab")
        return snapshot, records

    def _truncate_tail(self, keep: int) -> None:
        with open(self.log_path, "ab") as fh:
            fh.truncate(keep)

    # -- appending ---------------------------------------------------------

    @property
    def next_seq(self) -> int:
        return self._seq + 1

    def append(self, op: str, payload: dict[str, Any], *, bundle: Optional[str] = None) -> dict[str, Any]:
        if self._fh is None:
            raise QdhError("CORRUPT_LOG", "log not loaded before append")
        self._seq += 1
        rec = {"seq": self._seq, "timestamp": _now(), "op": op, "bundle": bundle,
               "payload": payload}
        self._fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n")
        self._fh.flush()
        if self._durability == "fsync":
            os.fsync(self._fh.fileno())
        return rec

    # -- compaction ----------------------------------------------------------

    def write_snapshot(self, state: Any) -> None:
        """Persist current state at the current seq and truncate the log.

        Caller must guarantee quiescence (no in-flight multi-store bundle).
        """
        tmp = self.snapshot_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps({"seq": self._seq, "state": state}, sort_keys=True),
                       encoding="utf-8")
        os.replace(tmp, self.snapshot_path)
        if self._fh is not None:
            self._fh.close()
        self._fh = open(self.log_path, "wb")
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
