"""Typed synthesis-history graph model (GEMD++).

A sample's synthesis history is a directed graph of typed nodes and
labeled edges. ``_spec`` kinds declare the permitted design of a
material/process/measurement; ``_run`` kinds record one actual execution
and point at their spec via a ``has_spec`` edge. Material flow is the
single canonical ``flows_to`` edge label, directed from inputs toward the
``sample_root`` sink.

Everything here is an immutable value; validation collects violations
exhaustively instead of failing fast so callers (e.g. a graph editor) can
display every problem at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from qdh.errors import QdhError

# --- node and edge vocabularies -------------------------------------------

NODE_KINDS = frozenset({
    "sample_root",
    "material_spec", "material_run",
    "ingredient_spec", "ingredient_run",
    "process_spec", "process_run",
    "measurement_spec", "measurement_run",
    "instrument_run",
    "person", "organization", "project",
    "dataset", "report", "tool", "service", "infrastructure",
})

RUN_KINDS = frozenset(k for k in NODE_KINDS if k.endswith("_run"))
SPEC_KINDS = frozenset(k for k in NODE_KINDS if k.endswith("_spec"))

# instrument_run has no spec counterpart
SPEC_FOR_RUN = {
    "material_run": "material_spec",
    "ingredient_run": "ingredient_spec",
    "process_run": "process_spec",
    "measurement_run": "measurement_spec",
}

# kinds allowed to carry a file_ref into the object store
FILE_REF_KINDS = frozenset({"measurement_run", "dataset", "report"})

# kinds that participate in material flow; sample_root is the sink
FLOW_KINDS = frozenset({"material_run", "ingredient_run", "process_run", "sample_root"})

EDGE_LABELS = frozenset({"has_spec", "flows_to", "uses", "role_in", "part_of"})

ATTRIBUTE_TYPES = frozenset({
    "real_scalar", "uniform_real", "integer", "categorical", "text", "fraction",
})

FRACTION_BASES = frozenset({"mass", "volume", "absolute"})


# --- attribute values ------------------------------------------------------

@dataclass(frozen=True)
class AttributeValue:
    """Tagged attribute value; ``type`` selects which fields are meaningful.

    Mirrors the on-wire schema form, e.g.
    ``{"type": "uniform_real", "units": "celsius", "lower_bound": 450.5,
    "upper_bound": 451.5}``.
    """

    type: str
    value: Any = None
    units: Optional[str] = None
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None
    basis: Optional[str] = None

    @staticmethod
    def real_scalar(value: float, units: str) -> "AttributeValue":
        return AttributeValue("real_scalar", value=float(value), units=units)

    @staticmethod
    def uniform_real(units: str, lower_bound: float, upper_bound: float) -> "AttributeValue":
        return AttributeValue("uniform_real", units=units,
                              lower_bound=float(lower_bound), upper_bound=float(upper_bound))

    @staticmethod
    def integer(value: int) -> "AttributeValue":
        return AttributeValue("integer", value=int(value))

    @staticmethod
    def categorical(value: str) -> "AttributeValue":
        return AttributeValue("categorical", value=value)

    @staticmethod
    def text(value: str) -> "AttributeValue":
        return AttributeValue("text", value=value)

    @staticmethod
    def fraction(basis: str, value: float) -> "AttributeValue":
        return AttributeValue("fraction", basis=basis, value=float(value))

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"type": self.type}
        if self.type == "real_scalar":
            doc["value"] = self.value
            doc["units"] = self.units
        elif self.type == "uniform_real":
            doc["units"] = self.units
            doc["lower_bound"] = self.lower_bound
            doc["upper_bound"] = self.upper_bound
        elif self.type in ("integer", "categorical", "text"):
            doc["value"] = self.value
        elif self.type == "fraction":
            doc["basis"] = self.basis
            doc["value"] = self.value
        else:
            doc["value"] = self.value
        return doc

    @staticmethod
    def from_json(doc: dict[str, Any]) -> "AttributeValue":
        if not isinstance(doc, dict) or "type" not in doc:
            raise QdhError("MALFORMED", "attribute value must be an object with a 'type' tag",
                           location=repr(doc))
        return AttributeValue(
            type=doc["type"],
            value=doc.get("value"),
            units=doc.get("units"),
            lower_bound=doc.get("lower_bound"),
            upper_bound=doc.get("upper_bound"),
            basis=doc.get("basis"),
        )

    def render(self) -> str:
        """Canonical single-line text form, used for catalog property values
        and query projections."""
        if self.type == "real_scalar":
            return f"{_num(self.value)} {self.units}"
        if self.type == "uniform_real":
            return f"{_num(self.lower_bound)}..{_num(self.upper_bound)} {self.units}"
        if self.type == "integer":
            return str(self.value)
        if self.type in ("categorical", "text"):
            return str(self.value)
        if self.type == "fraction":
            return f"{_num(self.value)} ({self.basis} fraction)"
        return str(self.value)


def _num(x: Any) -> str:
    # 450.5 -> "450.5", 3.0 -> "3"; stable across runs
    if isinstance(x, float) and x == int(x):
        return str(int(x))
    return str(x)


# --- graph values -----------------------------------------------------------

@dataclass(frozen=True)
class GemdNode:
    node_id: str
    kind: str
    name: str
    sample_id: str
    attributes: dict[str, AttributeValue] = field(default_factory=dict)
    tags: tuple[str, ...] = ()
    file_ref: Optional[str] = None
    ontology_ref: Optional[str] = None


@dataclass(frozen=True)
class GemdEdge:
    src: str
    dst: str
    label: str
    attributes: dict[str, AttributeValue] = field(default_factory=dict)

    def key(self) -> tuple:
        attrs = tuple(sorted((k, v) for k, v in self.attributes.items()))
        return (self.src, self.dst, self.label, attrs)


class GemdGraph:
    """One sample's synthesis graph: nodes keyed by id plus labeled edges.

    Value semantics: equality ignores node/edge insertion order.
    """

    def __init__(self, sample_id: str, nodes: Iterable[GemdNode] = (), edges: Iterable[GemdEdge] = ()):
        self.sample_id = sample_id
        self.nodes: dict[str, GemdNode] = {}
        for n in nodes:
            if n.node_id in self.nodes:
                raise QdhError("DUPLICATE_NODE_ID", f"node id {n.node_id!r} declared twice")
            self.nodes[n.node_id] = n
        self.edges: list[GemdEdge] = list(edges)

    def node(self, node_id: str) -> GemdNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise QdhError("UNKNOWN_NODE", f"no node {node_id!r} in sample {self.sample_id!r}") from None

    def out_edges(self, node_id: str, label: Optional[str] = None) -> list[GemdEdge]:
        return [e for e in self.edges if e.src == node_id and (label is None or e.label == label)]

    def in_edges(self, node_id: str, label: Optional[str] = None) -> list[GemdEdge]:
        return [e for e in self.edges if e.dst == node_id and (label is None or e.label == label)]

    def nodes_of_kind(self, kind: str) -> list[GemdNode]:
        return [n for n in self.nodes.values() if n.kind == kind]

    def root(self) -> Optional[GemdNode]:
        roots = self.nodes_of_kind("sample_root")
        return roots[0] if len(roots) == 1 else None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GemdGraph):
            return NotImplemented
        return (self.sample_id == other.sample_id
                and self.nodes == other.nodes
                and sorted(e.key() for e in self.edges) == sorted(e.key() for e in other.edges))

    def __repr__(self) -> str:
        return f"GemdGraph({self.sample_id!r}, {len(self.nodes)} nodes, {len(self.edges)} edges)"


# --- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    subject: str  # node id, edge "src->dst", or "node_id:attr"
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]

    @staticmethod
    def collect(violations: Iterable[Violation]) -> "ValidationReport":
        ordered = tuple(sorted(violations, key=lambda v: (v.code, v.subject, v.message)))
        return ValidationReport(ok=not ordered, violations=ordered)

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": [
                {"code": v.code, "subject": v.subject, "message": v.message}
                for v in self.violations
            ],
        }


def check_attribute(value: AttributeValue, subject: str = "attribute") -> ValidationReport:
    """Validate one attribute value; violations are data, never raised."""
    out: list[Violation] = []
    if value.type not in ATTRIBUTE_TYPES:
        out.append(Violation("BAD_TYPE", subject, f"unknown attribute type {value.type!r}"))
        return ValidationReport.collect(out)
    if value.type == "real_scalar":
        if not isinstance(value.value, (int, float)) or isinstance(value.value, bool):
            out.append(Violation("MISSING_FIELD", subject, "real_scalar requires a numeric value"))
    elif value.type == "uniform_real":
        if value.lower_bound is None or value.upper_bound is None:
            out.append(Violation("MISSING_FIELD", subject, "uniform_real requires lower_bound and upper_bound"))
        elif value.lower_bound > value.upper_bound:
            out.append(Violation(
                "BOUNDS_ORDER", subject,
                f"lower_bound {value.lower_bound} exceeds upper_bound {value.upper_bound}"))
    elif value.type == "integer":
        if not isinstance(value.value, int) or isinstance(value.value, bool):
            out.append(Violation("MISSING_FIELD", subject, "integer requires an int value"))
    elif value.type in ("categorical", "text"):
        if not isinstance(value.value, str):
            out.append(Violation("MISSING_FIELD", subject, f"{value.type} requires a text value"))
    elif value.type == "fraction":
        if value.basis not in FRACTION_BASES:
            out.append(Violation("BAD_BASIS", subject, f"fraction basis must be one of {sorted(FRACTION_BASES)}"))
        if not isinstance(value.value, (int, float)) or isinstance(value.value, bool):
            out.append(Violation("MISSING_FIELD", subject, "fraction requires a numeric value"))
        elif value.basis in ("mass", "volume") and not (0.0 <= float(value.value) <= 1.0):
            out.append(Violation("FRACTION_RANGE", subject,
                                 f"{value.basis} fraction must lie in [0, 1], got {value.value}"))
    if value.units is not None:
        if value.units == "" or value.units != value.units.strip():
            out.append(Violation("EMPTY_UNITS", subject, "units must be a non-empty token"))
    return ValidationReport.collect(out)


def validate_graph(graph: GemdGraph, *, partial: bool = False) -> ValidationReport:
    """Check every model invariant; exhaustive, pure, order-independent.

    ``partial=True`` relaxes only root cardinality (0 or 1 roots) so that
    material-history views, which deliberately exclude the downstream
    root, still validate. Full sample graphs require exactly one root.
    """
    out: list[Violation] = []

    for node in graph.nodes.values():
        if node.kind not in NODE_KINDS:
            out.append(Violation("UNKNOWN_KIND", node.node_id, f"unknown node kind {node.kind!r}"))
            continue
        if node.sample_id != graph.sample_id:
            out.append(Violation("SAMPLE_ID_MISMATCH", node.node_id,
                                 f"node owned by {node.sample_id!r}, graph is {graph.sample_id!r}"))
        if node.file_ref is not None and node.kind not in FILE_REF_KINDS:
            out.append(Violation("FILE_REF_FORBIDDEN", node.node_id,
                                 f"kind {node.kind!r} cannot carry a file_ref"))
        for attr_name, attr in node.attributes.items():
            rep = check_attribute(attr, subject=f"{node.node_id}:{attr_name}")
            out.extend(rep.violations)

    roots = graph.nodes_of_kind("sample_root")
    if len(roots) > 1:
        out.append(Violation("MULTIPLE_ROOTS", graph.sample_id,
                             f"{len(roots)} sample_root nodes, expected one"))
    elif not roots and not partial:
        out.append(Violation("MISSING_ROOT", graph.sample_id, "no sample_root node"))
    if len(roots) == 1 and roots[0].node_id != graph.sample_id:
        out.append(Violation("ROOT_ID_MISMATCH", roots[0].node_id,
                             f"root node_id must record the sample_id {graph.sample_id!r}"))

    known = graph.nodes
    spec_edges: dict[str, int] = {}
    for e in graph.edges:
        subject = f"{e.src}->{e.dst}"
        if e.src not in known or e.dst not in known:
            out.append(Violation("DANGLING_EDGE", subject, "edge endpoint not in graph"))
            continue
        src, dst = known[e.src], known[e.dst]
        for attr_name, attr in e.attributes.items():
            rep = check_attribute(attr, subject=f"{subject}:{attr_name}")
            out.extend(rep.violations)
        if e.label not in EDGE_LABELS:
            out.append(Violation("UNKNOWN_LABEL", subject, f"unknown edge label {e.label!r}"))
        elif e.label == "has_spec":
            spec_edges[e.src] = spec_edges.get(e.src, 0) + 1
            want = SPEC_FOR_RUN.get(src.kind)
            if want is None or dst.kind != want:
                out.append(Violation("BAD_SPEC_EDGE", subject,
                                     f"has_spec must link a run to its matching spec, got {src.kind}->{dst.kind}"))
        elif e.label == "flows_to":
            if src.kind not in FLOW_KINDS or dst.kind not in FLOW_KINDS:
                out.append(Violation("BAD_FLOW_ENDPOINT", subject,
                                     f"flows_to endpoints must be flow kinds, got {src.kind}->{dst.kind}"))
        elif e.label == "uses":
            if src.kind != "measurement_run" or dst.kind != "instrument_run":
                out.append(Violation("BAD_USES", subject,
                                     f"uses must link measurement_run->instrument_run, got {src.kind}->{dst.kind}"))
        elif e.label == "role_in":
            if src.kind not in ("person", "organization") or dst.kind not in ("project", "process_run"):
                out.append(Violation("BAD_ROLE", subject,
                                     f"role_in must link person/organization->project/process_run, "
                                     f"got {src.kind}->{dst.kind}"))
            elif "role" not in e.attributes:
                out.append(Violation("MISSING_ROLE", subject, "role_in edge needs a 'role' attribute"))

    for node in graph.nodes.values():
        if node.kind in SPEC_FOR_RUN:  # every run kind except instrument_run
            n = spec_edges.get(node.node_id, 0)
            if n == 0:
                out.append(Violation("MISSING_SPEC", node.node_id,
                                     f"{node.kind} has no has_spec edge"))
            elif n > 1:
                out.append(Violation("MULTIPLE_SPEC", node.node_id,
                                     f"{node.kind} has {n} has_spec edges, expected one"))

    for cycle in _flow_cycles(graph):
        out.append(Violation("FLOW_CYCLE", ",".join(sorted(cycle)),
                             f"flows_to cycle through {sorted(cycle)}"))

    return ValidationReport.collect(out)


def _flow_cycles(graph: GemdGraph) -> list[set[str]]:
    """Strongly connected components of the flows_to subgraph that form cycles
    (size > 1, or a self-loop)."""
    adj: dict[str, list[str]] = {}
    self_loops: set[str] = set()
    for e in graph.edges:
        if e.label != "flows_to" or e.src not in graph.nodes or e.dst not in graph.nodes:
            continue
        if e.src == e.dst:
            self_loops.add(e.src)
        adj.setdefault(e.src, []).append(e.dst)
        adj.setdefault(e.dst, [])

    # iterative Tarjan
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = [0]
    sccs: list[set[str]] = []

    for start in adj:
        if start in index:
            continue
        work = [(start, iter(adj[start]))]
        index[start] = low[start] = counter[0]
        counter[0] += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adj[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp: set[str] = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                if len(comp) > 1 or (comp & self_loops):
                    sccs.append(comp)
    return sccs


# --- traversal ----------------------------------------------------------------

def flow_ancestors(graph: GemdGraph, node_id: str) -> set[str]:
    """All nodes with a flows_to path of length >= 1 into ``node_id``."""
    preds: dict[str, list[str]] = {}
    for e in graph.edges:
        if e.label == "flows_to":
            preds.setdefault(e.dst, []).append(e.src)
    seen: set[str] = set()
    frontier = list(preds.get(node_id, []))
    while frontier:
        cur = frontier.pop()
        if cur in seen:
            continue
        seen.add(cur)
        frontier.extend(preds.get(cur, []))
    return seen


def material_history(graph: GemdGraph, node_id: str) -> GemdGraph:
    """Upstream closure of ``node_id`` along flows_to, with spec/instrument
    attachments, as an induced subgraph. The result is a partial view: it
    contains the sample_root only when ``node_id`` is (or is downstream of)
    the root itself.
    """
    if node_id not in graph.nodes:
        raise QdhError("UNKNOWN_NODE", f"no node {node_id!r} in sample {graph.sample_id!r}")
    selected = flow_ancestors(graph, node_id)
    selected.add(node_id)
    for e in graph.edges:
        if e.src in selected and e.label in ("has_spec", "uses"):
            selected.add(e.dst)
    nodes = [graph.nodes[i] for i in sorted(selected)]
    edges = [e for e in graph.edges if e.src in selected and e.dst in selected]
    return GemdGraph(graph.sample_id, nodes, edges)


def spec_template(graph: GemdGraph) -> GemdGraph:
    """The reusable design view of a sample: its spec nodes and the edges
    between them."""
    selected = {n.node_id for n in graph.nodes.values() if n.kind in SPEC_KINDS}
    nodes = [graph.nodes[i] for i in sorted(selected)]
    edges = [e for e in graph.edges if e.src in selected and e.dst in selected]
    return GemdGraph(graph.sample_id, nodes, edges)
