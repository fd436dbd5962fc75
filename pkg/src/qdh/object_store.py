"""Versioned binary object storage with verifiable paths.

Content is stored content-addressed on the local filesystem (sha-256,
hex), written to a temporary name and atomically renamed, so a metadata
record never points at a missing or half-written blob. Versions per path
are contiguous from 1 and never overwritten; deletion is not part of the
public surface (an administrative purge hides behind a config flag).

The characterization dictionary maps a data category like ``XRD`` to a
path regex and lives in its own list-of-entries document.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from qdh.errors import QdhError
from qdh.regexp import compile_user_regex, regex_matches
from qdh.wal import RecordLog

CHECKSUM_ALGORITHM = "sha256"


@dataclass(frozen=True)
class StoredObject:
    obj_store_path: str
    sample_id: str
    size_bytes: int
    checksum: str
    checksum_algorithm: str
    uploaded_by: str
    timestamp: str
    version: int

    def to_json(self) -> dict[str, Any]:
        return {
            "obj_store_path": self.obj_store_path,
            "sample_id": self.sample_id,
            "size_bytes": self.size_bytes,
            "checksum": self.checksum,
            "checksum_algorithm": self.checksum_algorithm,
            "uploaded_by": self.uploaded_by,
            "timestamp": self.timestamp,
            "version": self.version,
        }


@dataclass(frozen=True)
class DictionaryEntry:
    characterization: str
    regex: str
    description: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"characterization": self.characterization, "regex": self.regex,
                "description": self.description}


class ObjectStore:
    def __init__(self, directory: Path | str, dictionary_path: Path | str, *,
                 durability: str = "os", quota_bytes: Optional[int] = None,
                 allow_purge: bool = False):
        self.dir = Path(directory)
        self._log = RecordLog(self.dir, durability=durability)
        self._content_dir = self.dir / "content"
        self._dictionary_path = Path(dictionary_path)
        self._quota = quota_bytes
        self._allow_purge = allow_purge
        self._versions: dict[str, list[StoredObject]] = {}
        self._stored_bytes = 0
        self._dictionary: dict[str, DictionaryEntry] = {}
        self._lock = threading.RLock()

    # -- lifecycle -------------------------------------------------------

    def open(self, skip_bundles: Iterable[str] = ()) -> None:
        skip = set(skip_bundles)
        self._content_dir.mkdir(parents=True, exist_ok=True)
        snapshot, records = self._log.load()
        if snapshot is not None:
            for doc in snapshot["objects"]:
                self._add_meta(_meta_from_json(doc))
        for rec in records:
            if rec.get("bundle") in skip:
                continue
            if rec["op"] == "put":
                self._add_meta(_meta_from_json(rec["payload"]["object"]))
            elif rec["op"] == "purge":
                self._versions.pop(rec["payload"]["path"], None)
        if self._dictionary_path.exists():
            for doc in json.loads(self._dictionary_path.read_text(encoding="utf-8")):
                entry = DictionaryEntry(doc["characterization"], doc["regex"],
                                        doc.get("description", ""))
                self._dictionary[entry.characterization] = entry

    def _add_meta(self, obj: StoredObject) -> None:
        self._versions.setdefault(obj.obj_store_path, []).append(obj)
        self._stored_bytes += obj.size_bytes

    def compact(self) -> None:
        with self._lock:
            state = {"objects": [o.to_json() for versions in self._versions.values()
                                 for o in versions]}
            self._log.write_snapshot(state)

    def close(self) -> None:
        self._log.close()

    # -- content addressing ------------------------------------------------

    def _blob_path(self, checksum: str) -> Path:
        return self._content_dir / checksum[:2] / checksum

    def _write_blob(self, content: bytes, checksum: str) -> None:
        blob = self._blob_path(checksum)
        if blob.exists():
            return
        blob.parent.mkdir(parents=True, exist_ok=True)
        tmp = blob.with_name(f".{checksum}.{os.getpid()}.tmp")
        tmp.write_bytes(content)
        os.replace(tmp, blob)

    # -- operations -----------------------------------------------------------

    def put_object(self, path: str, content: bytes, sample_id: str, uploader: str, *,
                   bundle: Optional[str] = None) -> StoredObject:
        with self._lock:
            if not path:
                raise QdhError("EMPTY_PATH", "object path must be non-empty")
            if self._quota is not None and self._stored_bytes + len(content) > self._quota:
                raise QdhError("QUOTA_EXCEEDED",
                               f"storing {len(content)} bytes would exceed the "
                               f"{self._quota}-byte quota")
            checksum = hashlib.sha256(content).hexdigest()
            version = len(self._versions.get(path, [])) + 1
            obj = StoredObject(
                obj_store_path=path,
                sample_id=sample_id,
                size_bytes=len(content),
                checksum=checksum,
                checksum_algorithm=CHECKSUM_ALGORITHM,
                uploaded_by=uploader,
                timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                version=version,
            )
            self._write_blob(content, checksum)  # blob lands before metadata
            self._log.append("put", {"object": obj.to_json()}, bundle=bundle)
            self._add_meta(obj)
            return obj

    def get_object(self, path: str, version: Optional[int] = None) -> tuple[bytes, StoredObject]:
        versions = self._versions.get(path)
        if not versions:
            raise QdhError("NOT_FOUND", f"no object at {path!r}")
        if version is None:
            obj = versions[-1]
        elif 1 <= version <= len(versions):
            obj = versions[version - 1]
        else:
            raise QdhError("UNKNOWN_VERSION",
                           f"object {path!r} has versions 1..{len(versions)}")
        content = self._blob_path(obj.checksum).read_bytes()
        actual = hashlib.sha256(content).hexdigest()
        if actual != obj.checksum:
            raise QdhError("CHECKSUM_MISMATCH",
                           f"content of {path!r} v{obj.version} does not match its recorded checksum")
        return content, obj

    def exists(self, path: str) -> bool:
        return path in self._versions

    @property
    def stored_bytes(self) -> int:
        return self._stored_bytes

    def stat(self, path: str, version: Optional[int] = None) -> StoredObject:
        return self.get_object(path, version)[1]

    def latest_objects(self) -> list[StoredObject]:
        return sorted((vs[-1] for vs in self._versions.values()),
                      key=lambda o: o.obj_store_path)

    def objects_for_sample(self, sample_id: str) -> list[StoredObject]:
        return [o for o in self.latest_objects() if o.sample_id == sample_id]

    def version_count(self, path: str) -> int:
        return len(self._versions.get(path, []))

    # -- characterization dictionary ---------------------------------------------

    def dictionary(self) -> list[DictionaryEntry]:
        return sorted(self._dictionary.values(), key=lambda e: e.characterization)

    def update_dictionary(self, entry: DictionaryEntry) -> dict[str, Any]:
        with self._lock:
            compile_user_regex(entry.regex)  # BAD_REGEX on failure
            if not entry.characterization:
                raise QdhError("BAD_REGEX", "characterization name must be non-empty")
            self._dictionary[entry.characterization] = entry
            tmp = self._dictionary_path.with_suffix(".tmp")
            tmp.parent.mkdir(parents=True, exist_ok=True)
            tmp.write_text(json.dumps([e.to_json() for e in self.dictionary()],
                                      sort_keys=True, indent=2) + "\n", encoding="utf-8")
            os.replace(tmp, self._dictionary_path)
            return {"characterization": entry.characterization}

    def find_by_characterization(self, characterization: str,
                                 sample_ids: Iterable[str]) -> list[str]:
        """Latest-version paths matching the characterization's regex,
        restricted to the given samples."""
        entry = self._dictionary.get(characterization)
        if entry is None:
            raise QdhError("UNKNOWN_CHARACTERIZATION",
                           f"no dictionary entry for {characterization!r}")
        pattern = compile_user_regex(entry.regex)
        scope = set(sample_ids)
        return [o.obj_store_path for o in self.latest_objects()
                if o.sample_id in scope and regex_matches(pattern, o.obj_store_path)]

    # -- administration ---------------------------------------------------------

    def purge_object(self, path: str) -> None:
        """Remove every version of a path. Exceptional-scenario tool; raw
        blobs may be shared and are left in place."""
        with self._lock:
            if not self._allow_purge:
                raise QdhError("PURGE_DISABLED", "administrative purge is disabled by config")
            if path not in self._versions:
                raise QdhError("NOT_FOUND", f"no object at {path!r}")
            self._log.append("purge", {"path": path})
            for obj in self._versions.pop(path):
                self._stored_bytes -= obj.size_bytes


def _meta_from_json(doc: dict[str, Any]) -> StoredObject:
    return StoredObject(
        obj_store_path=doc["obj_store_path"],
        sample_id=doc["sample_id"],
        size_bytes=int(doc["size_bytes"]),
        checksum=doc["checksum"],
        checksum_algorithm=doc.get("checksum_algorithm", CHECKSUM_ALGORITHM),
        uploaded_by=doc.get("uploaded_by", ""),
        timestamp=doc.get("timestamp", ""),
        version=int(doc["version"]),
    )
