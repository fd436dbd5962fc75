"""Planning and executing federated queries across the three stores.

Plans are deterministic and fixed-order: the catalog step narrows the
sample scope first, the graph step matches inside that scope, the object
step searches the surviving samples, and the projection joins on
sample_id. Every sample-scoped intermediate is filtered by the caller's
read decisions *before* it is handed to the next store, so an
unauthorized principal's query degrades to the empty result rather than
an error. Results are deduplicated and deterministically ordered:
latest-first over catalog rows, then lexically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from qdh.errors import QdhError
from qdh.graph_store import NodeFilter, NodePredicate, PathPattern, node_field_text
from qdh.hub import Hub
from qdh.query_language import OBJECT_VAR, QueryAst, parse_query
from qdh.tabular_store import Filter

ResultRow = dict[str, Any]


@dataclass(frozen=True)
class FederatedPlan:
    steps: tuple[dict[str, Any], ...]

    def to_json(self) -> list[dict[str, Any]]:
        return [dict(s) for s in self.steps]


def _pattern_json(pattern: PathPattern) -> dict[str, Any]:
    return {
        "direction": pattern.direction,
        "preds": [
            {"variable": p.variable, "kind": p.kind,
             "filters": [[f.attribute, f.op, f.operand] for f in p.filters]}
            for p in pattern.preds
        ],
        "hops": list(pattern.hops),
    }


def plan_query(ast: QueryAst) -> FederatedPlan:
    """Fixed left-to-right plan: tabular -> graph -> object -> project."""
    steps: list[dict[str, Any]] = []
    if ast.graph and ast.graph.scoped_vars and ast.tabular is None:
        raise QdhError("UNPLANNABLE", "a $-scoped pattern needs a FROM clause")
    if ast.tabular:
        steps.append({
            "step": "tabular_filter",
            "entity": ast.tabular.entity,
            "filters": [[f.column, f.op, f.operand] for f in ast.tabular.filters],
        })
    if ast.graph:
        steps.append({
            "step": "graph_pattern",
            "scoped": bool(ast.graph.scoped_vars),
            "pattern": _pattern_json(ast.graph.pattern),
        })
    if ast.objects:
        steps.append({
            "step": "object_regex",
            "characterization": ast.objects.characterization,
        })
    steps.append({
        "step": "project",
        "projections": [f"{var}.{attr}" for var, attr in ast.returns.projections],
    })
    return FederatedPlan(tuple(steps))


def _pattern_from_json(doc: dict[str, Any]) -> PathPattern:
    return PathPattern(
        preds=tuple(NodePredicate(p["variable"], p["kind"],
                                  tuple(NodeFilter(a, o, v) for a, o, v in p["filters"]))
                    for p in doc["preds"]),
        hops=tuple(doc["hops"]),
        direction=doc["direction"],
    )


def execute_query(hub: Hub, plan: FederatedPlan, principal: str) -> list[ResultRow]:
    """Run a plan against one consistent view of the stores."""
    with hub.lock:
        return _execute_locked(hub, plan, principal)


def _execute_locked(hub: Hub, plan: FederatedPlan, principal: str) -> list[ResultRow]:
    tab_entity: Optional[str] = None
    tab_rows: Optional[list[dict[str, Any]]] = None
    bindings: Optional[list[tuple[Optional[str], dict[str, str]]]] = None
    obj_rows: Optional[list[dict[str, Any]]] = None
    projections: list[str] = []
    sample_scope: Optional[set[str]] = None

    for index, step in enumerate(plan.steps):
        try:
            kind = step["step"]
            if kind == "tabular_filter":
                tab_entity = step["entity"]
                filters = [Filter(c, o, v) for c, o, v in step["filters"]]
                rows = hub.tabular.query_rows(tab_entity, filters, order="latest_first")
                has_sample_column = any(
                    "sample_id" in hub.tabular.columns(t)
                    for t in hub.tabular.entity_tables(tab_entity))
                kept: list[dict[str, Any]] = []
                for row in rows:
                    sid = row.get("sample_id") or None
                    if sid is not None and not _readable(hub, principal, sid):
                        continue
                    kept.append(row)
                tab_rows = kept
                if has_sample_column:
                    sample_scope = {r["sample_id"] for r in kept if r.get("sample_id")}
            elif kind == "graph_pattern":
                pattern = _pattern_from_json(step["pattern"])
                candidates = set(hub.graphs.sample_ids())
                if step["scoped"] and sample_scope is not None:
                    candidates &= sample_scope
                allowed = {s for s in candidates if _readable(hub, principal, s)}
                found = hub.graphs.match_path(pattern, scope=allowed)
                bindings = []
                for b in found:
                    any_node = next(iter(b.values()))
                    bindings.append((hub.graphs.sample_of(any_node), b))
                sample_scope = {s for s, _ in bindings if s is not None}
            elif kind == "object_regex":
                if sample_scope is not None:
                    samples = sample_scope
                else:
                    samples = {o.sample_id for o in hub.objects.latest_objects()}
                samples = {s for s in samples if _readable(hub, principal, s)}
                paths = hub.objects.find_by_characterization(step["characterization"], samples)
                obj_rows = []
                for path in paths:
                    obj = hub.objects.stat(path)
                    obj_rows.append({
                        "path": obj.obj_store_path,
                        "sample_id": obj.sample_id,
                        "version": obj.version,
                        "size_bytes": obj.size_bytes,
                        "checksum": obj.checksum,
                    })
            elif kind == "project":
                projections = list(step["projections"])
            else:
                raise QdhError("UNPLANNABLE", f"unknown step {kind!r}")
        except QdhError as exc:
            exc.details.setdefault("step", index)
            raise

    return _project(hub, projections, tab_entity, tab_rows, bindings, obj_rows)


def _readable(hub: Hub, principal: str, sample_id: str) -> bool:
    if not hub.access.has_object(sample_id):
        return False
    return hub.access.authorize(principal, sample_id, "read").allowed


def _project(hub: Hub, projections: list[str], tab_entity: Optional[str],
             tab_rows, bindings, obj_rows) -> list[ResultRow]:
    # components: (sample or None, payload, order) — None samples join anything
    combos: list[tuple[Optional[str], dict[str, Any], tuple]] = [(None, {}, ())]

    def merge(items: list[tuple[Optional[str], dict[str, Any]]]) -> None:
        nonlocal combos
        merged = []
        for sample, payload, order in combos:
            for i, (item_sample, item_payload) in enumerate(items):
                if sample is not None and item_sample is not None and sample != item_sample:
                    continue
                merged.append((sample or item_sample, {**payload, **item_payload},
                               order + (i,)))
        combos = merged

    if tab_rows is not None:
        merge([(row.get("sample_id") or None, {"__tab__": row}) for row in tab_rows])
    if bindings is not None:
        merge([(sample, {"__bind__": b}) for sample, b in bindings])
    if obj_rows is not None:
        merge([(row["sample_id"] or None, {"__obj__": row}) for row in obj_rows])

    out: list[tuple[tuple, tuple, ResultRow]] = []
    for sample, payload, order in combos:
        row: ResultRow = {}
        for proj in projections:
            var, attr = proj.split(".", 1)
            row[proj] = _resolve(hub, var, attr, tab_entity, payload)
        values = tuple(str(v) for v in row.values())
        out.append((values, order, row))

    # dedupe on projected values, keeping the earliest combo; final order is
    # component order (latest-first catalog rows, then the stores' canonical
    # enumeration), then lexical on the values
    out.sort(key=lambda item: (item[1], item[0]))
    seen: set[tuple] = set()
    deduped: list[ResultRow] = []
    for values, order, row in out:
        if values in seen:
            continue
        seen.add(values)
        deduped.append(row)
    return deduped


def _resolve(hub: Hub, var: str, attr: str, tab_entity: Optional[str],
             payload: dict[str, Any]) -> Any:
    if var == tab_entity and "__tab__" in payload:
        value = payload["__tab__"].get(attr, "")
        if isinstance(value, list):
            return ",".join(value)
        return value
    if var == OBJECT_VAR and "__obj__" in payload:
        return payload["__obj__"].get(attr, "")
    binding = payload.get("__bind__")
    if binding is not None and var in binding:
        node_id = binding[var]
        sid = hub.graphs.sample_of(node_id)
        if sid is None:
            return ""
        node = hub.graphs.get_graph(sid).nodes.get(node_id)
        if node is None:
            return ""
        return node_field_text(node, attr) or ""
    return ""


def run_query(hub: Hub, text: str, principal: str) -> list[ResultRow]:
    """parse -> plan -> execute in one call (the service entry point)."""
    return execute_query(hub, plan_query(parse_query(text)), principal)


# --- navigability ------------------------------------------------------------------


def related_items(hub: Hub, item_id: str, principal: str) -> list[dict[str, str]]:
    """Directly linked items across all stores, access-filtered.

    Repeated calls walk the whole linkage closure: graph edges, row
    references, file pointers, and the sample row <-> synthesis graph
    bridge.
    """
    with hub.lock:
        found = False
        out: list[dict[str, str]] = []

        def emit(ident: str, kind: str, relation: str) -> None:
            out.append({"id": ident, "kind": kind, "relation": relation})

        # graph node perspective
        owner = hub.graphs.sample_of(item_id)
        if owner is not None:
            if _readable(hub, principal, owner):
                found = True
                graph = hub.graphs.get_graph(owner)
                if item_id in graph.nodes:
                    node = graph.nodes[item_id]
                    for edge, far in hub.graphs.neighbors(item_id, "both"):
                        direction = "out" if edge.src == item_id else "in"
                        emit(far.node_id, f"node:{far.kind}", f"edge:{edge.label}:{direction}")
                    if node.kind == "sample_root":
                        emit(owner, "row:samples", "catalog_row")
                    if node.file_ref:
                        emit(node.file_ref, "object", "file_pointer")

        # catalog row perspectives
        row = hub.tabular.get_row("samples", item_id)
        if row is not None and _readable(hub, principal, item_id):
            found = True
            if hub.graphs.has_sample(item_id):
                emit(item_id, "node:sample_root", "synthesis_graph")
                # measurements characterize the sample even when they carry no
                # file and sit outside the material flow
                for n in hub.graphs.get_graph(item_id).nodes_of_kind("measurement_run"):
                    emit(n.node_id, "node:measurement_run", "characterization")
            if row["end_material_id"]:
                emit(row["end_material_id"], "row:materials", "end_material")
            for mid in row["start_material_ids"]:
                emit(mid, "row:materials", "start_material")
            for m in hub.tabular.rows("measurements"):
                if m["sample_id"] == item_id:
                    emit(m["measurement_id"], "row:measurements", "measurement")
            for obj in hub.objects.objects_for_sample(item_id):
                emit(obj.obj_store_path, "object", "stored_object")

        row = hub.tabular.get_row("measurements", item_id)
        if row is not None and _readable(hub, principal, row["sample_id"]):
            found = True
            emit(row["sample_id"], "row:samples", "sample")
            if row["material_id"]:
                emit(row["material_id"], "row:materials", "material")
            if row["instr_id"]:
                emit(row["instr_id"], "row:instruments", "instrument")
            if hub.graphs.sample_of(item_id) is not None:
                emit(item_id, "node:measurement_run", "graph_node")
            if row["file_location_path"] and hub.objects.exists(row["file_location_path"]):
                emit(row["file_location_path"], "object", "measurement_file")

        row = hub.tabular.get_row("materials", item_id)
        if row is not None:
            found = True
            for s in hub.tabular.rows("samples"):
                if not _readable(hub, principal, s["sample_id"]):
                    continue
                if s["end_material_id"] == item_id:
                    emit(s["sample_id"], "row:samples", "produced_by")
                if item_id in s["start_material_ids"]:
                    emit(s["sample_id"], "row:samples", "consumed_by")

        row = hub.tabular.get_row("instruments", item_id)
        if row is not None:
            found = True
            for m in hub.tabular.rows("measurements"):
                if m["instr_id"] == item_id and _readable(hub, principal, m["sample_id"]):
                    emit(m["measurement_id"], "row:measurements", "used_by")

        # stored object perspective
        if hub.objects.exists(item_id):
            obj = hub.objects.stat(item_id)
            if obj.sample_id and _readable(hub, principal, obj.sample_id):
                found = True
                emit(obj.sample_id, "row:samples", "sample")
                for m in hub.tabular.rows("measurements"):
                    if (m["file_location_path"] == item_id
                            and _readable(hub, principal, m["sample_id"])):
                        emit(m["measurement_id"], "row:measurements", "measurement")

        if not found:
            raise QdhError("UNKNOWN_ID", f"no item {item_id!r}")
        unique = {(d["id"], d["kind"], d["relation"]): d for d in out}
        return [unique[k] for k in sorted(unique)]
