"""Deterministic projection of a synthesis graph into catalog rows.

Shredding is best-effort: a gap in the graph (no end material, a
measurement without an instrument, a root without owner/date) becomes a
warning plus an empty field, never a fabricated value and never a
failure. Defaults for owner/date are applied later by the ingest commit,
which knows the acting principal, and are flagged there as well.

Instrument identity: instruments live only once in the catalog even when
dozens of samples used them, so instr_id comes from an ``instr_id``
attribute when present and otherwise from a stable hash of
(type, make, model).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Optional

from qdh.errors import QdhError
from qdh.model import GemdGraph, GemdNode, validate_graph

Rows = dict[str, list[dict[str, Any]]]

MATERIAL_FIELD_ATTRS = ("supplier", "form", "description")
SAMPLE_FIELD_ATTRS = ("project_id", "owner", "date", "description", "status")


@dataclass
class ShredReport:
    counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"counts": dict(self.counts), "warnings": list(self.warnings)}


def _attr_text(node: GemdNode, name: str) -> str:
    attr = node.attributes.get(name)
    return attr.render() if attr is not None else ""


def instrument_identity(node: GemdNode) -> str:
    explicit = _attr_text(node, "instr_id")
    if explicit:
        return explicit
    basis = "|".join((_attr_text(node, "type"), _attr_text(node, "make"),
                      _attr_text(node, "model")))
    return "instr-" + hashlib.sha256(basis.encode("utf-8")).hexdigest()[:12]


def shred(graph: GemdGraph) -> tuple[Rows, ShredReport]:
    """Map a valid graph onto samples/materials/material_props/
    measurements/instruments rows."""
    report = validate_graph(graph)
    if not report.ok:
        raise QdhError("INVALID_GRAPH", "cannot shred an invalid graph",
                       violations=report.to_dict()["violations"])
    out: Rows = {"samples": [], "materials": [], "material_props": [],
                 "measurements": [], "instruments": []}
    warnings: list[str] = []
    root = graph.root()
    assert root is not None  # guaranteed by validation

    flows_in: dict[str, list[str]] = {}
    flows_out: dict[str, list[str]] = {}
    for e in graph.edges:
        if e.label == "flows_to":
            flows_in.setdefault(e.dst, []).append(e.src)
            flows_out.setdefault(e.src, []).append(e.dst)

    # materials and their property bags
    material_runs = sorted(graph.nodes_of_kind("material_run"), key=lambda n: n.node_id)
    for node in material_runs:
        out["materials"].append({
            "mat_id": node.node_id,
            "name": node.name,
            "supplier": _attr_text(node, "supplier"),
            "form": _attr_text(node, "form"),
            "description": _attr_text(node, "description"),
        })
        for attr_name in sorted(node.attributes):
            if attr_name in MATERIAL_FIELD_ATTRS:
                continue
            out["material_props"].append({
                "mat_id": node.node_id,
                "property_name": attr_name,
                "property_value": node.attributes[attr_name].render(),
            })

    # end material: the material_run flowing into the root
    ends = sorted(nid for nid in flows_in.get(root.node_id, [])
                  if graph.nodes[nid].kind == "material_run")
    if not ends:
        end_material_id = ""
        warnings.append("NO_END_MATERIAL: no material_run flows into the sample root")
    else:
        end_material_id = ends[0]
        if len(ends) > 1:
            warnings.append(f"MULTIPLE_END_MATERIALS: picked {ends[0]!r} of {ends}")

    # start materials: material_runs nothing flows into
    start_ids = sorted(n.node_id for n in material_runs if not flows_in.get(n.node_id))

    # instruments, deduplicated by identity
    instr_of_node: dict[str, str] = {}
    seen_instr: set[str] = set()
    for node in sorted(graph.nodes_of_kind("instrument_run"), key=lambda n: n.node_id):
        instr_id = instrument_identity(node)
        instr_of_node[node.node_id] = instr_id
        if instr_id in seen_instr:
            continue
        seen_instr.add(instr_id)
        out["instruments"].append({
            "instr_id": instr_id,
            "type": _attr_text(node, "type"),
            "make": _attr_text(node, "make"),
            "model": _attr_text(node, "model"),
            "specification": _attr_text(node, "specification"),
        })

    # measurements: only file-bearing measurement runs become catalog rows
    for node in sorted(graph.nodes_of_kind("measurement_run"), key=lambda n: n.node_id):
        if node.file_ref is None:
            continue
        if not end_material_id:
            warnings.append(f"SKIPPED_MEASUREMENT: {node.node_id!r} has a file but the "
                            "sample has no end material to attach it to")
            continue
        uses = [e.dst for e in graph.out_edges(node.node_id, "uses")]
        instr_id = instr_of_node.get(uses[0], "") if uses else ""
        if not instr_id:
            warnings.append(f"NO_INSTRUMENT: measurement {node.node_id!r} names no instrument")
        file_type = _attr_text(node, "file_type") or _suffix(node.file_ref)
        out["measurements"].append({
            "measurement_id": node.node_id,
            "sample_id": graph.sample_id,
            "material_id": end_material_id,
            "instr_id": instr_id,
            "measure_date": _attr_text(node, "measure_date") or _attr_text(node, "date"),
            "measure_owner": _attr_text(node, "measure_owner") or _attr_text(node, "owner"),
            "measure_type": _attr_text(node, "measure_type"),
            "description": _attr_text(node, "description"),
            "file_type": file_type,
            "file_location_path": node.file_ref,
        })

    sample_row = {
        "sample_id": graph.sample_id,
        "name": root.name,
        "start_material_ids": start_ids,
        "end_material_id": end_material_id,
    }
    for attr_name in SAMPLE_FIELD_ATTRS:
        sample_row[attr_name] = _attr_text(root, attr_name)
    if not sample_row["status"]:
        sample_row["status"] = "unknown"
    if not sample_row["owner"]:
        warnings.append("MISSING_OWNER: root carries no owner attribute")
    if not sample_row["date"]:
        warnings.append("MISSING_DATE: root carries no date attribute")
    out["samples"].append(sample_row)

    return out, ShredReport(counts={t: len(rows) for t, rows in out.items()},
                            warnings=warnings)


def _suffix(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[-1] if "." in name else ""


def insert_order() -> list[str]:
    """Foreign-key-safe insert order for shredded rows."""
    return ["materials", "instruments", "samples", "material_props", "measurements"]


def apply_ingest_defaults(rows: Rows, principal: str, now: str,
                          report: Optional[ShredReport] = None) -> None:
    """Fill best-effort owner/date gaps at commit time; flagged, never silent."""
    for row in rows.get("samples", []):
        if not row.get("owner"):
            row["owner"] = principal
            if report is not None:
                report.warnings.append(
                    f"DEFAULTED_OWNER: sample {row['sample_id']!r} owner set to ingesting "
                    f"principal {principal!r}")
        if not row.get("date"):
            row["date"] = now
            if report is not None:
                report.warnings.append(
                    f"DEFAULTED_DATE: sample {row['sample_id']!r} date set to ingest time")
