"""Constraint-checked tabular catalog mirroring each sample's graph.

Core tables: samples, materials, material_props, measurements,
instruments. Inserts are eager-checked against the six referential
constraints; a rejected insert changes nothing. Onboarded groups extend
the catalog with new tables registered under semantic entities; tables
flagged ``joins_into_sample_union`` contribute their rows to the
federated ``sample`` entity.

Numbered constraints (reported in FK_VIOLATION details):
  1 measurement.sample_id must exist in samples
  2 measurement.material_id must equal its sample's end_material_id
  3 sample.end_material_id must exist in materials
  4 measurement.material_id must exist in materials
  5 every sample.start_material_ids element must exist in materials
  6 measurement.instr_id must exist in instruments
The material_props -> materials foreign key is not one of the six and is
reported as constraint 0. Empty-string foreign keys mean "unknown" (a
best-effort shred gap) and skip the existence checks; key columns must
always be non-empty.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from qdh.errors import QdhError
from qdh.regexp import compile_user_regex, regex_matches
from qdh.wal import RecordLog

Row = dict[str, Any]

CORE_SCHEMAS: dict[str, dict[str, Any]] = {
    "samples": {
        "columns": ["sample_id", "name", "project_id", "owner", "date",
                    "start_material_ids", "end_material_id", "description", "status"],
        "key": ["sample_id"],
        "list_columns": ["start_material_ids"],
    },
    "materials": {
        "columns": ["mat_id", "name", "supplier", "form", "description"],
        "key": ["mat_id"],
        "list_columns": [],
    },
    "material_props": {
        "columns": ["mat_id", "property_name", "property_value"],
        "key": ["mat_id", "property_name"],
        "list_columns": [],
    },
    "measurements": {
        "columns": ["measurement_id", "sample_id", "material_id", "instr_id",
                    "measure_date", "measure_owner", "measure_type", "description",
                    "file_type", "file_location_path"],
        "key": ["measurement_id"],
        "list_columns": [],
    },
    "instruments": {
        "columns": ["instr_id", "type", "make", "model", "specification"],
        "key": ["instr_id"],
        "list_columns": [],
    },
}

SAMPLE_ENTITY = "sample"


@dataclass(frozen=True)
class ExtensionColumn:
    name: str
    semantic_type: str  # "key" marks key columns


@dataclass(frozen=True)
class TableExtension:
    table_name: str
    columns: tuple[ExtensionColumn, ...]
    semantic_entity: str
    joins_into_sample_union: bool = False

    def key_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.semantic_type == "key"]

    def to_json(self) -> dict[str, Any]:
        return {
            "table_name": self.table_name,
            "columns": [{"name": c.name, "semantic_type": c.semantic_type} for c in self.columns],
            "semantic_entity": self.semantic_entity,
            "joins_into_sample_union": self.joins_into_sample_union,
        }

    @staticmethod
    def from_json(doc: dict[str, Any]) -> "TableExtension":
        return TableExtension(
            table_name=doc["table_name"],
            columns=tuple(ExtensionColumn(c["name"], c["semantic_type"])
                          for c in doc.get("columns", [])),
            semantic_entity=doc.get("semantic_entity", ""),
            joins_into_sample_union=bool(doc.get("joins_into_sample_union")),
        )


@dataclass(frozen=True)
class Filter:
    column: str
    op: str  # "equals" | "regex"
    operand: str


class TabularStore:
    def __init__(self, directory: Path | str, *, durability: str = "os"):
        self._log = RecordLog(Path(directory), durability=durability)
        self._tables: dict[str, dict[tuple, Row]] = {name: {} for name in CORE_SCHEMAS}
        self._extensions: dict[str, TableExtension] = {}
        self._lock = threading.RLock()

    # -- lifecycle -------------------------------------------------------

    def open(self, skip_bundles: Iterable[str] = ()) -> None:
        skip = set(skip_bundles)
        snapshot, records = self._log.load()
        if snapshot is not None:
            for doc in snapshot.get("extensions", []):
                ext = TableExtension.from_json(doc)
                self._extensions[ext.table_name] = ext
                self._tables[ext.table_name] = {}
            for table, rows in snapshot.get("tables", {}).items():
                for row in rows:
                    self._tables[table][self._key_of(table, row)] = row
        for rec in records:
            if rec.get("bundle") in skip:
                continue
            self._apply(rec["op"], rec["payload"])

    def _apply(self, op: str, payload: dict[str, Any]) -> None:
        if op in ("insert", "upsert"):
            table, row = payload["table"], payload["row"]
            self._tables[table][self._key_of(table, row)] = row
        elif op == "delete_sample_rows":
            self._drop_sample_rows(payload["sample_id"])
        elif op == "register_extension":
            ext = TableExtension.from_json(payload["extension"])
            self._extensions[ext.table_name] = ext
            self._tables.setdefault(ext.table_name, {})

    def compact(self) -> None:
        with self._lock:
            state = {
                "tables": {t: list(rows.values()) for t, rows in self._tables.items()},
                "extensions": [e.to_json() for e in self._extensions.values()],
            }
            self._log.write_snapshot(state)

    def close(self) -> None:
        self._log.close()

    # -- schema helpers ------------------------------------------------------

    def _schema(self, table: str) -> dict[str, Any]:
        if table in CORE_SCHEMAS:
            return CORE_SCHEMAS[table]
        ext = self._extensions.get(table)
        if ext is None:
            raise QdhError("UNKNOWN_TABLE", f"no table {table!r}")
        return {"columns": [c.name for c in ext.columns], "key": ext.key_columns(),
                "list_columns": []}

    def _key_of(self, table: str, row: Row) -> tuple:
        return tuple(row[k] for k in self._schema(table)["key"])

    def columns(self, table: str) -> list[str]:
        return list(self._schema(table)["columns"])

    def extensions(self) -> list[TableExtension]:
        return list(self._extensions.values())

    # -- constraint checking ----------------------------------------------------

    def _normalize(self, table: str, row: Row) -> Row:
        schema = self._schema(table)
        unknown = set(row) - set(schema["columns"])
        if unknown:
            raise QdhError("SCHEMA_MISMATCH",
                           f"unknown columns for {table!r}: {sorted(unknown)}")
        out: Row = {}
        for col in schema["columns"]:
            if col in schema["list_columns"]:
                val = row.get(col, [])
                if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
                    raise QdhError("SCHEMA_MISMATCH", f"{table}.{col} must be a list of ids")
                out[col] = list(val)
            else:
                val = row.get(col, "")
                if not isinstance(val, str):
                    raise QdhError("SCHEMA_MISMATCH", f"{table}.{col} must be text")
                out[col] = val
        for k in schema["key"]:
            if not out[k]:
                raise QdhError("SCHEMA_MISMATCH", f"key column {table}.{k} must be non-empty")
        return out

    def _check_constraints(self, table: str, row: Row,
                           tables: dict[str, dict[tuple, Row]]) -> None:
        def exists(t: str, *key: str) -> bool:
            return tuple(key) in tables[t]

        if table == "samples":
            end = row["end_material_id"]
            if end and not exists("materials", end):
                raise QdhError("FK_VIOLATION", f"end_material_id {end!r} not in materials",
                               constraint=3)
            for mid in row["start_material_ids"]:
                if mid and not exists("materials", mid):
                    raise QdhError("FK_VIOLATION", f"start material {mid!r} not in materials",
                                   constraint=5)
        elif table == "material_props":
            if not exists("materials", row["mat_id"]):
                raise QdhError("FK_VIOLATION", f"mat_id {row['mat_id']!r} not in materials",
                               constraint=0)
        elif table == "measurements":
            sid = row["sample_id"]
            if not exists("samples", sid):
                raise QdhError("FK_VIOLATION", f"sample_id {sid!r} not in samples", constraint=1)
            mid = row["material_id"]
            if mid and not exists("materials", mid):
                raise QdhError("FK_VIOLATION", f"material_id {mid!r} not in materials",
                               constraint=4)
            end = tables["samples"][(sid,)]["end_material_id"]
            if mid != end:
                raise QdhError("FK_VIOLATION",
                               f"material_id {mid!r} must equal the sample's end material {end!r}",
                               constraint=2)
            iid = row["instr_id"]
            if iid and not exists("instruments", iid):
                raise QdhError("FK_VIOLATION", f"instr_id {iid!r} not in instruments",
                               constraint=6)

    # -- mutations ------------------------------------------------------------

    def insert_row(self, table: str, row: Row, *, bundle: Optional[str] = None) -> dict[str, Any]:
        with self._lock:
            normalized = self._normalize(table, row)
            key = self._key_of(table, normalized)
            if key in self._tables[table]:
                raise QdhError("DUPLICATE_KEY", f"{table} already has key {key!r}")
            self._check_constraints(table, normalized, self._tables)
            rec = self._log.append("insert", {"table": table, "row": normalized}, bundle=bundle)
            self._tables[table][key] = normalized
            return {"table": table, "key": list(key), "seq": rec["seq"]}

    def upsert_row(self, table: str, row: Row, *, bundle: Optional[str] = None) -> dict[str, Any]:
        """Insert-or-replace by key; used by ingest for shared rows
        (materials, instruments) that may already exist."""
        with self._lock:
            normalized = self._normalize(table, row)
            key = self._key_of(table, normalized)
            self._check_constraints(table, normalized, self._tables)
            rec = self._log.append("upsert", {"table": table, "row": normalized}, bundle=bundle)
            self._tables[table][key] = normalized
            return {"table": table, "key": list(key), "seq": rec["seq"]}

    def _drop_sample_rows(self, sample_id: str) -> None:
        self._tables["samples"].pop((sample_id,), None)
        meas = self._tables["measurements"]
        for key in [k for k, r in meas.items() if r["sample_id"] == sample_id]:
            del meas[key]

    def delete_sample_rows(self, sample_id: str, *, bundle: Optional[str] = None) -> None:
        """Internal re-ingest support: retract a sample's row and its
        measurements before the replacement rows arrive (same bundle)."""
        with self._lock:
            self._log.append("delete_sample_rows", {"sample_id": sample_id}, bundle=bundle)
            self._drop_sample_rows(sample_id)

    def check_bundle_rows(self, rows_by_table: dict[str, list[Row]], order: Iterable[str],
                          replace_sample: Optional[str] = None) -> None:
        """Dry-run a bundle's rows against (current state - replaced rows +
        bundle), raising exactly what the real inserts would raise. Used by
        the ingest commit to guarantee the apply phase cannot fail."""
        with self._lock:
            shadow = {t: dict(tbl) for t, tbl in self._tables.items()}
            if replace_sample is not None:
                shadow["samples"].pop((replace_sample,), None)
                shadow["measurements"] = {k: r for k, r in shadow["measurements"].items()
                                          if r["sample_id"] != replace_sample}
            for table in order:
                for row in rows_by_table.get(table, []):
                    normalized = self._normalize(table, row)
                    key = self._key_of(table, normalized)
                    if table in ("samples", "measurements") and key in shadow[table]:
                        raise QdhError("DUPLICATE_KEY", f"{table} already has key {key!r}")
                    self._check_constraints(table, normalized, shadow)
                    shadow[table][key] = normalized

    def register_table_extension(self, ext: TableExtension, *,
                                 bundle: Optional[str] = None) -> dict[str, Any]:
        with self._lock:
            if not ext.table_name:
                raise QdhError("INVALID_EXTENSION", "extension table needs a name")
            if ext.table_name in CORE_SCHEMAS or ext.table_name in self._extensions:
                raise QdhError("NAME_COLLISION", f"table {ext.table_name!r} already exists")
            if not ext.columns:
                raise QdhError("INVALID_EXTENSION", "extension needs at least one column")
            if len({c.name for c in ext.columns}) != len(ext.columns):
                raise QdhError("INVALID_EXTENSION", "duplicate column names")
            if not ext.key_columns():
                raise QdhError("INVALID_EXTENSION",
                               "extension needs at least one column with semantic_type 'key'")
            if not ext.semantic_entity:
                raise QdhError("INVALID_EXTENSION", "extension needs a semantic_entity")
            if ext.semantic_entity in CORE_SCHEMAS:
                raise QdhError("INVALID_EXTENSION",
                               f"semantic_entity may not shadow core table {ext.semantic_entity!r}")
            rec = self._log.append("register_extension", {"extension": ext.to_json()},
                                   bundle=bundle)
            self._extensions[ext.table_name] = ext
            self._tables[ext.table_name] = {}
            self._write_schema_document()
            return {"table": ext.table_name, "seq": rec["seq"]}

    def _write_schema_document(self) -> None:
        # human-inspectable registry mirror; the log stays authoritative
        doc = {"extensions": [e.to_json() for e in self._extensions.values()]}
        tmp = self._log.dir / "schema.json.tmp"
        tmp.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, self._log.dir / "schema.json")

    # -- queries ---------------------------------------------------------------

    def entity_tables(self, name: str) -> list[str]:
        """Tables contributing to a table-or-entity name, in registration order."""
        if name == SAMPLE_ENTITY:
            return ["samples"] + [e.table_name for e in self._extensions.values()
                                  if e.joins_into_sample_union]
        if name in CORE_SCHEMAS or name in self._extensions:
            return [name]
        matches = [e.table_name for e in self._extensions.values() if e.semantic_entity == name]
        if not matches:
            raise QdhError("UNKNOWN_TABLE", f"no table or entity {name!r}")
        return matches

    def query_rows(self, table_or_entity: str, filters: Iterable[Filter] = (),
                   order: str = "latest_first") -> list[Row]:
        """Filtered rows; entity names resolve to their table union. Each
        returned row carries a reserved ``_table`` provenance key."""
        filters = list(filters)
        tables = self.entity_tables(table_or_entity)
        for f in filters:
            if f.op not in ("equals", "regex"):
                raise QdhError("BAD_FILTER", f"unknown filter op {f.op!r}")
            if len(tables) == 1 and f.column not in self._schema(tables[0])["columns"]:
                raise QdhError("BAD_FILTER",
                               f"no column {f.column!r} in {tables[0]!r}")
        compiled = {f.operand: compile_user_regex(f.operand)
                    for f in filters if f.op == "regex"}

        out: list[Row] = []
        for table in tables:
            cols = set(self._schema(table)["columns"])
            # in a union, a member lacking a filtered column contributes nothing
            if any(f.column not in cols for f in filters):
                continue
            for row in self._tables[table].values():
                if all(self._filter_matches(row, f, compiled) for f in filters):
                    out.append({**row, "_table": table})
        if order == "latest_first":
            # stable two-phase sort: deterministic tiebreak, then newest date
            # first (ISO-8601 UTC text compares chronologically); undated last
            out.sort(key=lambda r: (r["_table"], str(self._key_of(r["_table"], r))))
            out.sort(key=_date_of, reverse=True)
        elif order == "none":
            pass
        else:
            raise QdhError("BAD_FILTER", f"unknown order {order!r}")
        return out

    @staticmethod
    def _filter_matches(row: Row, f: Filter, compiled: dict[str, Any]) -> bool:
        val = row.get(f.column)
        if isinstance(val, list):
            texts = val
        else:
            texts = [val if val is not None else ""]
        if f.op == "equals":
            return any(t == f.operand for t in texts)
        return any(regex_matches(compiled[f.operand], t) for t in texts)

    def get_row(self, table: str, *key: str) -> Optional[Row]:
        if table not in self._tables:
            raise QdhError("UNKNOWN_TABLE", f"no table {table!r}")
        row = self._tables[table].get(tuple(key))
        return dict(row) if row is not None else None

    def rows(self, table: str) -> list[Row]:
        if table not in self._tables:
            raise QdhError("UNKNOWN_TABLE", f"no table {table!r}")
        return [dict(r) for r in self._tables[table].values()]

    def row_counts(self) -> dict[str, int]:
        return {t: len(rows) for t, rows in sorted(self._tables.items())}


def _date_of(row: Row) -> str:
    return row.get("date") or row.get("measure_date") or ""
