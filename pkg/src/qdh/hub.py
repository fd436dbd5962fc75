"""The hub: owns the stores, the authorization state, and the atomic
cross-store ingest path.

Commit protocol for a bundle: validate everything up front (so the apply
phase cannot fail, only crash), write an intent record, apply to each
store with every record tagged by the bundle id, then write the commit
marker. Recovery reads the intent log first; bundles with an intent but
no marker are discarded during store replay, so a crash anywhere in the
apply phase leaves either a fully present or a fully absent bundle.

Concurrency: one hub-wide lock serializes mutations; reads take the same
lock briefly, which realizes the one-consistent-view guarantee
conservatively (a query never observes a half-applied bundle).
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from qdh.access import AccessControl
from qdh.errors import QdhError
from qdh.graph_store import GraphStore
from qdh.model import GemdGraph, validate_graph
from qdh.object_store import DictionaryEntry, ObjectStore
from qdh.shred import apply_ingest_defaults, insert_order, shred
from qdh.tabular_store import CORE_SCHEMAS, TableExtension, TabularStore
from qdh.wal import RecordLog


@dataclass
class HubConfig:
    data_dir: Path
    admin_users: tuple[str, ...] = ()
    durability: str = "os"
    quota_bytes: Optional[int] = None
    allow_purge: bool = False
    token_cache_ttl: float = 300.0

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)


@dataclass
class IngestBundle:
    """A normalized cross-store data set committed all-or-nothing."""

    sample_id: str
    graph: GemdGraph
    rows: dict[str, list[dict[str, Any]]]
    objects: list[tuple[str, bytes]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


class Hub:
    def __init__(self, config: HubConfig):
        self.config = config
        d = config.data_dir
        self._intents = RecordLog(d / "intents", durability=config.durability)
        self.graphs = GraphStore(d / "graph", durability=config.durability)
        self.tabular = TabularStore(d / "tabular", durability=config.durability)
        self.objects = ObjectStore(d / "objects", d / "dictionary",
                                   durability=config.durability,
                                   quota_bytes=config.quota_bytes,
                                   allow_purge=config.allow_purge)
        self.access = AccessControl(d / "access", admin_users=config.admin_users,
                                    durability=config.durability)
        self.lock = threading.RLock()
        # test/fault-injection hook, called with a step label between commit steps
        self.crash_hook: Optional[Callable[[str], None]] = None

    # -- lifecycle -------------------------------------------------------

    def open(self) -> "Hub":
        """Recover to the last committed state: uncommitted bundles are
        discarded during replay."""
        _, records = self._intents.load()
        intents = {r["payload"]["bundle_id"] for r in records if r["op"] == "intent"}
        commits = {r["payload"]["bundle_id"] for r in records if r["op"] == "commit"}
        aborted = intents - commits
        self.graphs.open(skip_bundles=aborted)
        self.tabular.open(skip_bundles=aborted)
        self.objects.open(skip_bundles=aborted)
        self.access.open(skip_bundles=aborted)
        return self

    def compact(self) -> None:
        with self.lock:
            self.graphs.compact()
            self.tabular.compact()
            self.objects.compact()
            self.access.compact()
            self._intents.write_snapshot({})

    def close(self) -> None:
        for store in (self.graphs, self.tabular, self.objects, self.access):
            store.close()
        self._intents.close()

    def _step(self, label: str) -> None:
        if self.crash_hook is not None:
            self.crash_hook(label)

    # -- bundle ingest ------------------------------------------------------

    def build_bundle(self, graph: GemdGraph, objects: Iterable[tuple[str, bytes]] = (),
                     principal: Optional[str] = None) -> IngestBundle:
        """Shred a graph into rows and assemble the cross-store bundle."""
        rows, report = shred(graph)
        if principal is not None:
            now = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            apply_ingest_defaults(rows, principal, now, report)
        return IngestBundle(sample_id=graph.sample_id, graph=graph, rows=rows,
                            objects=list(objects), warnings=list(report.warnings))

    def ingest_bundle(self, bundle: IngestBundle, principal: str) -> dict[str, Any]:
        """All-or-nothing commit across graph, tabular and object stores."""
        with self.lock:
            subject = self._writer_subject(principal, bundle.sample_id)
            self._validate_bundle(bundle)

            bundle_id = uuid.uuid4().hex
            reingest = self.graphs.has_sample(bundle.sample_id)
            self._intents.append("intent", {"bundle_id": bundle_id,
                                            "sample_id": bundle.sample_id})
            self._step("intent")

            for path, content in bundle.objects:
                self.objects.put_object(path, content, bundle.sample_id, principal,
                                        bundle=bundle_id)
                self._step(f"object:{path}")

            if reingest:
                self.tabular.delete_sample_rows(bundle.sample_id, bundle=bundle_id)
                self._step("retract_rows")
            for table in insert_order():
                for row in bundle.rows.get(table, []):
                    if table in ("samples", "measurements"):
                        self.tabular.insert_row(table, row, bundle=bundle_id)
                    else:
                        self.tabular.upsert_row(table, row, bundle=bundle_id)
                    self._step(f"row:{table}")

            receipt = self.graphs.upsert_sample_graph(bundle.sample_id, bundle.graph,
                                                      bundle=bundle_id)
            self._step("graph")
            self.access.register_object(bundle.sample_id, subject.group_id,
                                        bundle=bundle_id)
            self._step("register")

            self._intents.append("commit", {"bundle_id": bundle_id})
            return {
                "bundle_id": bundle_id,
                "sample_id": bundle.sample_id,
                "version": receipt["version"],
                "rows": {t: len(r) for t, r in bundle.rows.items()},
                "objects": len(bundle.objects),
                "warnings": list(bundle.warnings),
            }

    def _writer_subject(self, principal: str, sample_id: str):
        try:
            subject = self.access.subject_of(principal)
        except QdhError as exc:
            raise QdhError("AUTHZ_DENIED", f"principal {principal!r} may not write: "
                           f"{exc.message}") from None
        if self.access.has_object(sample_id):
            decision = self.access.authorize(principal, sample_id, "update")
            if not decision.allowed:
                raise QdhError("AUTHZ_DENIED",
                               f"principal {principal!r} may not update sample {sample_id!r}")
        return subject

    def _validate_bundle(self, bundle: IngestBundle) -> None:
        """Every check that could fail must fail here, before the intent."""
        report = validate_graph(bundle.graph)
        if not report.ok:
            raise QdhError("INVALID_GRAPH", "bundle graph fails validation",
                           violations=report.to_dict()["violations"])
        if bundle.graph.sample_id != bundle.sample_id:
            raise QdhError("INVALID_GRAPH", "bundle and graph disagree on sample_id")
        for nid in bundle.graph.nodes:
            owner = self.graphs.sample_of(nid)
            if owner is not None and owner != bundle.sample_id:
                raise QdhError("CONSTRAINT_FAILED",
                               f"node id {nid!r} already owned by sample {owner!r}")

        unknown_tables = set(bundle.rows) - set(CORE_SCHEMAS)
        if unknown_tables:
            raise QdhError("CONSTRAINT_FAILED",
                           f"bundle rows target unknown tables {sorted(unknown_tables)}")

        bundled_paths = {path for path, _ in bundle.objects}
        for path, _ in bundle.objects:
            if not path:
                raise QdhError("CONSTRAINT_FAILED", "bundle contains an empty object path")
        for row in bundle.rows.get("measurements", []):
            pointer = row.get("file_location_path", "")
            if pointer and pointer not in bundled_paths and not self.objects.exists(pointer):
                raise QdhError(
                    "CONSTRAINT_FAILED",
                    f"measurement {row.get('measurement_id')!r} points at {pointer!r}, "
                    "which is neither in the bundle nor already stored")
        if self.config.quota_bytes is not None:
            incoming = sum(len(content) for _, content in bundle.objects)
            if self.objects.stored_bytes + incoming > self.config.quota_bytes:
                raise QdhError("QUOTA_EXCEEDED", "bundle exceeds the object-store quota")

        replace = bundle.sample_id if self.graphs.has_sample(bundle.sample_id) else None
        try:
            self.tabular.check_bundle_rows(bundle.rows, insert_order(), replace_sample=replace)
        except QdhError as exc:
            if exc.code in ("DUPLICATE_KEY", "FK_VIOLATION", "SCHEMA_MISMATCH"):
                raise QdhError("CONSTRAINT_FAILED", f"bundle row rejected: {exc.message}",
                               cause=exc.code, **exc.details) from None
            raise

    # -- convenience write paths --------------------------------------------------

    def submit_graph(self, graph: GemdGraph, principal: str,
                     objects: Iterable[tuple[str, bytes]] = ()) -> dict[str, Any]:
        bundle = self.build_bundle(graph, objects, principal=principal)
        return self.ingest_bundle(bundle, principal)

    def put_object(self, sample_id: str, path: str, content: bytes,
                   principal: str) -> dict[str, Any]:
        with self.lock:
            if not self.access.has_object(sample_id):
                raise QdhError("UNKNOWN_OBJECT", f"no sample {sample_id!r}")
            decision = self.access.authorize(principal, sample_id, "write")
            if not decision.allowed:
                raise QdhError("AUTHZ_DENIED",
                               f"principal {principal!r} may not write to {sample_id!r}")
            return self.objects.put_object(path, content, sample_id, principal).to_json()

    def get_object(self, path: str, principal: str,
                   version: Optional[int] = None) -> tuple[bytes, dict[str, Any]]:
        with self.lock:
            content, obj = self.objects.get_object(path, version)
            if obj.sample_id and self.access.has_object(obj.sample_id):
                if not self.access.authorize(principal, obj.sample_id, "read").allowed:
                    raise QdhError("NOT_FOUND", f"no object at {path!r}")
            return content, obj.to_json()

    def register_extension(self, ext: TableExtension, principal: str) -> dict[str, Any]:
        with self.lock:
            self.access.subject_of(principal)  # onboarding requires a registered subject
            return self.tabular.register_table_extension(ext)

    def update_dictionary(self, entry: DictionaryEntry, principal: str) -> dict[str, Any]:
        with self.lock:
            self.access.subject_of(principal)
            return self.objects.update_dictionary(entry)
