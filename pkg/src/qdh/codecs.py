"""Bulk-upload codecs: canonical GEMD JSON, graphML, and directory-of-JSON.

All three encodings carry the same graph. Parsers are structural only
(well-formedness, known kinds, resolvable endpoints); model invariants are
the job of ``validate_graph``. Serializers are canonical: nodes sorted by
id, edges sorted by (src, dst, label), keys sorted, so identical graphs
produce byte-identical documents.
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Any, Optional

from qdh.errors import QdhError
from qdh.model import NODE_KINDS, AttributeValue, GemdEdge, GemdGraph, GemdNode

GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"

_SAFE_FILENAME = re.compile(r"^[A-Za-z0-9._-]+$")


# --- canonical GEMD JSON -----------------------------------------------------

def _node_to_json(node: GemdNode) -> dict[str, Any]:
    doc: dict[str, Any] = {"node_id": node.node_id, "kind": node.kind, "name": node.name}
    if node.attributes:
        doc["attributes"] = {k: v.to_json() for k, v in sorted(node.attributes.items())}
    if node.tags:
        doc["tags"] = list(node.tags)
    if node.file_ref is not None:
        doc["file_ref"] = node.file_ref
    if node.ontology_ref is not None:
        doc["ontology_ref"] = node.ontology_ref
    return doc


def _edge_to_json(edge: GemdEdge) -> dict[str, Any]:
    doc: dict[str, Any] = {"src": edge.src, "dst": edge.dst, "label": edge.label}
    if edge.attributes:
        doc["attributes"] = {k: v.to_json() for k, v in sorted(edge.attributes.items())}
    return doc


def graph_to_json(graph: GemdGraph) -> dict[str, Any]:
    return {
        "sample_id": graph.sample_id,
        "nodes": [_node_to_json(n) for n in sorted(graph.nodes.values(), key=lambda n: n.node_id)],
        "edges": [_edge_to_json(e) for e in sorted(graph.edges, key=lambda e: e.key())],
    }


def serialize_gemd_json(graph: GemdGraph) -> str:
    return json.dumps(graph_to_json(graph), sort_keys=True, indent=2) + "\n"


def _parse_node(doc: Any, sample_id: str, location: str) -> GemdNode:
    if not isinstance(doc, dict):
        raise QdhError("MALFORMED", "node must be an object", location=location)
    for req in ("node_id", "kind", "name"):
        if req not in doc:
            raise QdhError("MALFORMED", f"node missing required field {req!r}", location=location)
    kind = doc["kind"]
    if kind not in NODE_KINDS:
        raise QdhError("UNKNOWN_KIND", f"unknown node kind {kind!r}", location=location)
    attrs = {
        k: AttributeValue.from_json(v)
        for k, v in (doc.get("attributes") or {}).items()
    }
    tags = doc.get("tags") or []
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise QdhError("MALFORMED", "tags must be a list of strings", location=location)
    return GemdNode(
        node_id=str(doc["node_id"]),
        kind=kind,
        name=str(doc["name"]),
        sample_id=sample_id,
        attributes=attrs,
        tags=tuple(tags),
        file_ref=doc.get("file_ref"),
        ontology_ref=doc.get("ontology_ref"),
    )


def parse_gemd_json(document: str | bytes | dict[str, Any]) -> GemdGraph:
    """Parse a canonical single-document GEMD JSON upload."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise QdhError("MALFORMED", f"invalid JSON: {exc.msg}",
                           location=f"line {exc.lineno} col {exc.colno}") from None
    else:
        doc = document
    if not isinstance(doc, dict) or "sample_id" not in doc:
        raise QdhError("MALFORMED", "document must be an object with a sample_id", location="$")
    sample_id = str(doc["sample_id"])
    nodes = [
        _parse_node(nd, sample_id, f"nodes[{i}]")
        for i, nd in enumerate(doc.get("nodes") or [])
    ]
    known = {n.node_id for n in nodes}
    edges: list[GemdEdge] = []
    for i, ed in enumerate(doc.get("edges") or []):
        if not isinstance(ed, dict) or not {"src", "dst", "label"} <= set(ed):
            raise QdhError("MALFORMED", "edge must carry src, dst and label", location=f"edges[{i}]")
        if ed["src"] not in known or ed["dst"] not in known:
            raise QdhError("DANGLING_EDGE", f"edge {ed['src']!r}->{ed['dst']!r} references a missing node",
                           location=f"edges[{i}]")
        attrs = {k: AttributeValue.from_json(v) for k, v in (ed.get("attributes") or {}).items()}
        edges.append(GemdEdge(src=str(ed["src"]), dst=str(ed["dst"]), label=str(ed["label"]), attributes=attrs))
    return GemdGraph(sample_id, nodes, edges)


# --- graphML -------------------------------------------------------------------

def serialize_graphml(graph: GemdGraph) -> str:
    """Deterministic graphML encoding of one sample graph."""
    node_attr_names = sorted({a for n in graph.nodes.values() for a in n.attributes})
    edge_attr_names = sorted({a for e in graph.edges for a in e.attributes})

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<graphml xmlns="{GRAPHML_NS}">',
        '  <key id="sample_id" for="graph" attr.name="sample_id" attr.type="string"/>',
    ]
    for key in ("kind", "name", "tags", "file_ref", "ontology_ref"):
        lines.append(f'  <key id="{key}" for="node" attr.name="{key}" attr.type="string"/>')
    for name in node_attr_names:
        lines.append(f'  <key id="attr:{_xml_escape(name)}" for="node" '
                     f'attr.name="attr:{_xml_escape(name)}" attr.type="string"/>')
    lines.append('  <key id="label" for="edge" attr.name="label" attr.type="string"/>')
    for name in edge_attr_names:
        lines.append(f'  <key id="eattr:{_xml_escape(name)}" for="edge" '
                     f'attr.name="eattr:{_xml_escape(name)}" attr.type="string"/>')

    lines.append(f'  <graph id="{_xml_escape(graph.sample_id)}" edgedefault="directed">')
    lines.append(f'    <data key="sample_id">{_xml_escape(graph.sample_id)}</data>')
    for node in sorted(graph.nodes.values(), key=lambda n: n.node_id):
        lines.append(f'    <node id="{_xml_escape(node.node_id)}">')
        lines.append(f'      <data key="kind">{_xml_escape(node.kind)}</data>')
        lines.append(f'      <data key="name">{_xml_escape(node.name)}</data>')
        if node.tags:
            lines.append(f'      <data key="tags">{_xml_escape(json.dumps(list(node.tags)))}</data>')
        if node.file_ref is not None:
            lines.append(f'      <data key="file_ref">{_xml_escape(node.file_ref)}</data>')
        if node.ontology_ref is not None:
            lines.append(f'      <data key="ontology_ref">{_xml_escape(node.ontology_ref)}</data>')
        for name in sorted(node.attributes):
            blob = json.dumps(node.attributes[name].to_json(), sort_keys=True)
            lines.append(f'      <data key="attr:{_xml_escape(name)}">{_xml_escape(blob)}</data>')
        lines.append('    </node>')
    for edge in sorted(graph.edges, key=lambda e: e.key()):
        lines.append(f'    <edge source="{_xml_escape(edge.src)}" target="{_xml_escape(edge.dst)}">')
        lines.append(f'      <data key="label">{_xml_escape(edge.label)}</data>')
        for name in sorted(edge.attributes):
            blob = json.dumps(edge.attributes[name].to_json(), sort_keys=True)
            lines.append(f'      <data key="eattr:{_xml_escape(name)}">{_xml_escape(blob)}</data>')
        lines.append('    </edge>')
    lines.append('  </graph>')
    lines.append('</graphml>')
    return "\n".join(lines) + "\n"


def _xml_escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _data_of(element: ET.Element) -> dict[str, str]:
    out = {}
    for child in element:
        if _local(child.tag) == "data" and child.get("key") is not None:
            out[child.get("key")] = child.text or ""
    return out


def parse_graphml(document: str | bytes) -> GemdGraph:
    """Parse the graphML subset: one <graph> per sample, node data keys
    kind/name/tags/file_ref/ontology_ref/attr:*, edge data key label."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise QdhError("MALFORMED", f"invalid XML: {exc}") from None
    if _local(root.tag) != "graphml":
        raise QdhError("MALFORMED", f"expected <graphml> document, got <{_local(root.tag)}>")
    graphs = [el for el in root if _local(el.tag) == "graph"]
    if len(graphs) != 1:
        raise QdhError("MALFORMED", f"expected exactly one <graph>, found {len(graphs)}")
    g = graphs[0]

    graph_data = _data_of(g)
    sample_id = graph_data.get("sample_id") or g.get("id")
    if not sample_id:
        raise QdhError("MISSING_KEY", "graph carries no sample_id", key="sample_id")

    nodes: list[GemdNode] = []
    edges: list[GemdEdge] = []
    for el in g:
        tag = _local(el.tag)
        if tag == "node":
            node_id = el.get("id")
            if not node_id:
                raise QdhError("MALFORMED", "node without id attribute")
            data = _data_of(el)
            if "kind" not in data:
                raise QdhError("MISSING_KEY", f"node {node_id!r} carries no kind", key="kind")
            kind = data["kind"]
            if kind not in NODE_KINDS:
                raise QdhError("UNKNOWN_KIND", f"unknown node kind {kind!r}", location=node_id)
            attrs = {}
            for key, raw in data.items():
                if key.startswith("attr:"):
                    attrs[key[len("attr:"):]] = AttributeValue.from_json(_json_data(raw, node_id))
            tags: tuple[str, ...] = ()
            if data.get("tags"):
                parsed = _json_data(data["tags"], node_id)
                if not isinstance(parsed, list):
                    raise QdhError("MALFORMED", f"tags on {node_id!r} must be a JSON list")
                tags = tuple(str(t) for t in parsed)
            nodes.append(GemdNode(
                node_id=node_id,
                kind=kind,
                name=data.get("name", ""),
                sample_id=sample_id,
                attributes=attrs,
                tags=tags,
                file_ref=data.get("file_ref"),
                ontology_ref=data.get("ontology_ref"),
            ))
        elif tag == "edge":
            src, dst = el.get("source"), el.get("target")
            if not src or not dst:
                raise QdhError("MALFORMED", "edge without source/target")
            data = _data_of(el)
            if "label" not in data:
                raise QdhError("MISSING_KEY", f"edge {src!r}->{dst!r} carries no label", key="label")
            attrs = {}
            for key, raw in data.items():
                if key.startswith("eattr:"):
                    attrs[key[len("eattr:"):]] = AttributeValue.from_json(_json_data(raw, f"{src}->{dst}"))
            edges.append(GemdEdge(src=src, dst=dst, label=data["label"], attributes=attrs))

    known = {n.node_id for n in nodes}
    for e in edges:
        if e.src not in known or e.dst not in known:
            raise QdhError("DANGLING_EDGE", f"edge {e.src!r}->{e.dst!r} references a missing node")
    return GemdGraph(sample_id, nodes, edges)


def _json_data(raw: str, subject: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        raise QdhError("MALFORMED", f"data element on {subject!r} is not valid JSON") from None


# --- directory of JSON -----------------------------------------------------------

def write_json_directory(graph: GemdGraph, root: Path) -> None:
    """Explode a graph into one <node_id>.json file per node; edges become
    {"ref": "<file>"} pointers inside the source node's file."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for node in graph.nodes.values():
        if not _SAFE_FILENAME.match(node.node_id):
            raise QdhError("MALFORMED",
                           f"node id {node.node_id!r} is not filename-safe for directory encoding")
    for node in sorted(graph.nodes.values(), key=lambda n: n.node_id):
        doc = _node_to_json(node)
        if node.kind == "sample_root":
            doc["sample_id"] = graph.sample_id
        out_edges = [e for e in graph.edges if e.src == node.node_id]
        if out_edges:
            doc["edges"] = [
                {
                    "label": e.label,
                    "dst": {"ref": f"{e.dst}.json"},
                    **({"attributes": {k: v.to_json() for k, v in sorted(e.attributes.items())}}
                       if e.attributes else {}),
                }
                for e in sorted(out_edges, key=lambda e: e.key())
            ]
        path = root / f"{node.node_id}.json"
        path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def parse_json_directory(root: Path | str) -> GemdGraph:
    """Assemble a graph from a directory of per-node JSON files."""
    root = Path(root)
    files = sorted(p for p in root.glob("*.json") if p.is_file())
    if not files:
        raise QdhError("MALFORMED", f"no node files under {root}", location=str(root))

    docs: dict[str, dict[str, Any]] = {}   # resolved absolute path -> doc
    by_node_id: dict[str, str] = {}        # node_id -> resolved path
    for path in files:
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise QdhError("MALFORMED", f"invalid JSON in {path.name}: {exc.msg}",
                           location=path.name) from None
        if not isinstance(doc, dict) or "node_id" not in doc:
            raise QdhError("MALFORMED", f"{path.name} is not a node document", location=path.name)
        node_id = str(doc["node_id"])
        if node_id in by_node_id:
            raise QdhError("DUPLICATE_NODE_ID", f"node id {node_id!r} declared by both "
                           f"{Path(by_node_id[node_id]).name} and {path.name}")
        key = str(path.resolve())
        docs[key] = doc
        by_node_id[node_id] = key

    sample_id: Optional[str] = None
    for doc in docs.values():
        if doc.get("kind") == "sample_root" and "sample_id" in doc:
            sample_id = str(doc["sample_id"])
            break
    if sample_id is None:
        for doc in docs.values():
            if "sample_id" in doc:
                sample_id = str(doc["sample_id"])
                break
    if sample_id is None:
        raise QdhError("MALFORMED", "no node file declares a sample_id", location=str(root))

    nodes: list[GemdNode] = []
    edges: list[GemdEdge] = []
    spec_ref: dict[str, str] = {}
    for key, doc in sorted(docs.items()):
        node = _parse_node(doc, sample_id, Path(key).name)
        nodes.append(node)
        base = Path(key).parent
        for i, ed in enumerate(doc.get("edges") or []):
            if not isinstance(ed, dict) or "label" not in ed or "dst" not in ed:
                raise QdhError("MALFORMED", f"edge {i} in {Path(key).name} must carry label and dst")
            ref = ed["dst"].get("ref") if isinstance(ed["dst"], dict) else None
            if not ref:
                raise QdhError("MALFORMED", f"edge {i} in {Path(key).name} dst must be a "
                               '{"ref": "<path>"} object')
            target = (base / ref).resolve()
            target_doc = docs.get(str(target))
            if target_doc is None:
                raise QdhError("BROKEN_REFERENCE", f"{Path(key).name} references missing file {ref!r}",
                               path=ref)
            dst_id = str(target_doc["node_id"])
            attrs = {k: AttributeValue.from_json(v) for k, v in (ed.get("attributes") or {}).items()}
            edges.append(GemdEdge(src=node.node_id, dst=dst_id, label=str(ed["label"]), attributes=attrs))
            if ed["label"] == "has_spec":
                spec_ref[node.node_id] = dst_id

    # a has_spec chain that loops between files is structurally malformed
    for start in spec_ref:
        seen = {start}
        cur = spec_ref.get(start)
        while cur is not None:
            if cur in seen:
                raise QdhError("CYCLIC_REFERENCE", f"has_spec references form a cycle at {cur!r}")
            seen.add(cur)
            cur = spec_ref.get(cur)

    return GemdGraph(sample_id, nodes, edges)
