"""Embedded property-graph store: one versioned synthesis graph per sample.

Holds every committed version of each sample's graph; queries answer from
the latest version only, while prior versions stay retrievable. Pattern
matching walks ``flows_to`` paths with per-query reachability closures
(graphs are small DAGs), then joins node predicates, which keeps results
deterministic and directly comparable against brute-force oracles.

Single-writer/multi-reader: mutations are serialized by the owning hub;
readers operate on graph values that are never mutated in place.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from qdh.codecs import graph_to_json, parse_gemd_json
from qdh.errors import QdhError
from qdh.model import NODE_KINDS, GemdEdge, GemdGraph, GemdNode, validate_graph
from qdh.regexp import compile_user_regex, regex_matches
from qdh.wal import RecordLog

NODE_FIELDS = ("node_id", "name", "kind", "sample_id")


@dataclass(frozen=True)
class NodeFilter:
    attribute: str
    op: str  # "equals" | "regex"
    operand: str


@dataclass(frozen=True)
class NodePredicate:
    variable: str
    kind: Optional[str] = None
    filters: tuple[NodeFilter, ...] = ()


@dataclass(frozen=True)
class PathPattern:
    """Alternating node predicates and hops over flows_to edges.

    ``hops[i]`` relates ``preds[i]`` to ``preds[i+1]``; ``direct`` is one
    edge, ``reachable`` a path of length >= 1. ``direction`` applies to
    the whole pattern.
    """

    preds: tuple[NodePredicate, ...]
    hops: tuple[str, ...] = ()
    direction: str = "forward"

    def validate(self) -> None:
        if not self.preds:
            raise QdhError("BAD_PATTERN", "pattern needs at least one node predicate")
        if len(self.hops) != len(self.preds) - 1:
            raise QdhError("BAD_PATTERN", "pattern must alternate predicates and hops")
        if self.direction not in ("forward", "reverse"):
            raise QdhError("BAD_PATTERN", f"unknown direction {self.direction!r}")
        seen: set[str] = set()
        for p in self.preds:
            if not p.variable:
                raise QdhError("BAD_PATTERN", "pattern variable must be non-empty")
            if p.variable in seen:
                raise QdhError("BAD_PATTERN", f"duplicate pattern variable {p.variable!r}")
            seen.add(p.variable)
            if p.kind is not None and p.kind not in NODE_KINDS:
                raise QdhError("BAD_PATTERN", f"unknown node kind {p.kind!r}")
        for hop in self.hops:
            if hop not in ("direct", "reachable"):
                raise QdhError("BAD_PATTERN", f"unknown hop {hop!r}")

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(p.variable for p in self.preds)


def node_field_text(node: GemdNode, attribute: str) -> Optional[str]:
    """Text view of a node field or attribute, as predicates see it."""
    if attribute in NODE_FIELDS:
        return getattr(node, attribute)
    attr = node.attributes.get(attribute)
    return attr.render() if attr is not None else None


def _predicate_matches(node: GemdNode, pred: NodePredicate,
                       compiled: dict[str, re.Pattern]) -> bool:
    if pred.kind is not None and node.kind != pred.kind:
        return False
    for f in pred.filters:
        text = node_field_text(node, f.attribute)
        if text is None:
            return False
        if f.op == "equals":
            if text != f.operand:
                return False
        else:
            if not regex_matches(compiled[f.operand], text):
                return False
    return True


def flow_closure(graph: GemdGraph) -> dict[str, set[str]]:
    """reach[v] = nodes reachable from v over >= 1 flows_to edge."""
    adj: dict[str, list[str]] = {nid: [] for nid in graph.nodes}
    indeg = {nid: 0 for nid in graph.nodes}
    for e in graph.edges:
        if e.label == "flows_to" and e.src in adj and e.dst in adj:
            adj[e.src].append(e.dst)
            indeg[e.dst] += 1
    order: list[str] = [n for n, d in indeg.items() if d == 0]
    i = 0
    while i < len(order):
        for w in adj[order[i]]:
            indeg[w] -= 1
            if indeg[w] == 0:
                order.append(w)
        i += 1
    reach: dict[str, set[str]] = {nid: set() for nid in graph.nodes}
    for v in reversed(order):
        for w in adj[v]:
            reach[v].add(w)
            reach[v] |= reach[w]
    return reach


class GraphStore:
    def __init__(self, directory: Path | str, *, durability: str = "os"):
        self._log = RecordLog(Path(directory), durability=durability)
        self._versions: dict[str, list[GemdGraph]] = {}
        self._owner: dict[str, str] = {}  # node_id -> sample_id, across all versions
        self._lock = threading.RLock()

    # -- lifecycle -------------------------------------------------------

    def open(self, skip_bundles: Iterable[str] = ()) -> None:
        skip = set(skip_bundles)
        snapshot, records = self._log.load()
        if snapshot is not None:
            for sid, docs in snapshot["samples"].items():
                self._versions[sid] = [parse_gemd_json(d) for d in docs]
        for rec in records:
            if rec.get("bundle") in skip:
                continue
            if rec["op"] == "upsert":
                graph = parse_gemd_json(rec["payload"]["graph"])
                self._versions.setdefault(rec["payload"]["sample_id"], []).append(graph)
        for sid, versions in self._versions.items():
            for g in versions:
                for nid in g.nodes:
                    self._owner[nid] = sid

    def compact(self) -> None:
        with self._lock:
            state = {"samples": {sid: [graph_to_json(g) for g in vs]
                                 for sid, vs in self._versions.items()}}
            self._log.write_snapshot(state)

    def close(self) -> None:
        self._log.close()

    # -- mutations ---------------------------------------------------------

    def upsert_sample_graph(self, sample_id: str, graph: GemdGraph, *,
                            bundle: Optional[str] = None) -> dict[str, Any]:
        """Replace (or create) the sample's graph; the previous version is
        retained in history."""
        with self._lock:
            if graph.sample_id != sample_id:
                raise QdhError("INVALID_GRAPH",
                               f"graph belongs to {graph.sample_id!r}, not {sample_id!r}")
            report = validate_graph(graph)
            if not report.ok:
                raise QdhError("INVALID_GRAPH", "graph fails validation",
                               violations=report.to_dict()["violations"])
            for nid in graph.nodes:
                owner = self._owner.get(nid)
                if owner is not None and owner != sample_id:
                    raise QdhError("ID_COLLISION",
                                   f"node id {nid!r} already owned by sample {owner!r}")
            rec = self._log.append("upsert", {"sample_id": sample_id,
                                              "graph": graph_to_json(graph)}, bundle=bundle)
            self._versions.setdefault(sample_id, []).append(graph)
            for nid in graph.nodes:
                self._owner[nid] = sample_id
            return {"sample_id": sample_id, "version": len(self._versions[sample_id]),
                    "seq": rec["seq"]}

    # -- reads -----------------------------------------------------------------

    def sample_ids(self) -> list[str]:
        return sorted(self._versions)

    def has_sample(self, sample_id: str) -> bool:
        return sample_id in self._versions

    def version_count(self, sample_id: str) -> int:
        return len(self._versions.get(sample_id, []))

    def get_graph(self, sample_id: str, version: Optional[int] = None) -> GemdGraph:
        versions = self._versions.get(sample_id)
        if not versions:
            raise QdhError("NOT_FOUND", f"no graph for sample {sample_id!r}")
        if version is None:
            return versions[-1]
        if not 1 <= version <= len(versions):
            raise QdhError("UNKNOWN_VERSION",
                           f"sample {sample_id!r} has versions 1..{len(versions)}")
        return versions[version - 1]

    def sample_of(self, node_id: str) -> Optional[str]:
        return self._owner.get(node_id)

    def get_node(self, node_id: str) -> tuple[str, GemdNode]:
        """Resolve a node id in the latest version of its owning sample."""
        sid = self._owner.get(node_id)
        if sid is not None:
            latest = self._versions[sid][-1]
            if node_id in latest.nodes:
                return sid, latest.nodes[node_id]
        raise QdhError("UNKNOWN_NODE", f"no node {node_id!r}")

    def neighbors(self, node_id: str, direction: str = "both",
                  labels: Optional[set[str]] = None) -> list[tuple[GemdEdge, GemdNode]]:
        sid, _ = self.get_node(node_id)
        graph = self._versions[sid][-1]
        out: list[tuple[GemdEdge, GemdNode]] = []
        for e in graph.edges:
            if labels is not None and e.label not in labels:
                continue
            if direction in ("forward", "both") and e.src == node_id:
                out.append((e, graph.nodes[e.dst]))
            if direction in ("reverse", "both") and e.dst == node_id:
                out.append((e, graph.nodes[e.src]))
        out.sort(key=lambda pair: (pair[0].key(), pair[1].node_id))
        return out

    # -- pattern matching ---------------------------------------------------------

    def match_path(self, pattern: PathPattern,
                   scope: Optional[set[str]] = None) -> list[dict[str, str]]:
        """All bindings of the pattern over latest-version graphs.

        Returns one dict per binding, mapping each pattern variable to a
        node id, sorted by the bound ids in pattern-variable order.
        """
        pattern.validate()
        compiled: dict[str, re.Pattern] = {}
        for p in pattern.preds:
            for f in p.filters:
                if f.op == "regex" and f.operand not in compiled:
                    compiled[f.operand] = compile_user_regex(f.operand)

        results: list[tuple[str, ...]] = []
        for sid in self.sample_ids():
            if scope is not None and sid not in scope:
                continue
            graph = self._versions[sid][-1]
            results.extend(self._match_in_graph(graph, pattern, compiled))
        results.sort()
        names = pattern.variables
        return [dict(zip(names, tup)) for tup in results]

    def _match_in_graph(self, graph: GemdGraph, pattern: PathPattern,
                        compiled: dict[str, re.Pattern]) -> list[tuple[str, ...]]:
        candidates: list[list[str]] = []
        for p in pattern.preds:
            cand = [n.node_id for n in graph.nodes.values()
                    if _predicate_matches(n, p, compiled)]
            if not cand:
                return []
            candidates.append(sorted(cand))

        if len(pattern.preds) == 1:
            return [(c,) for c in candidates[0]]

        reach = flow_closure(graph)
        adj: dict[str, set[str]] = {nid: set() for nid in graph.nodes}
        for e in graph.edges:
            if e.label == "flows_to" and e.src in adj and e.dst in adj:
                adj[e.src].add(e.dst)

        def related(a: str, b: str, hop: str) -> bool:
            # pattern direction reverses the roles of a and b
            src, dst = (a, b) if pattern.direction == "forward" else (b, a)
            if hop == "direct":
                return dst in adj[src]
            return dst in reach[src]

        partial: list[tuple[str, ...]] = [(c,) for c in candidates[0]]
        for i, hop in enumerate(pattern.hops):
            nxt: list[tuple[str, ...]] = []
            for tup in partial:
                for c in candidates[i + 1]:
                    if related(tup[-1], c, hop):
                        nxt.append(tup + (c,))
            if not nxt:
                return []
            partial = nxt
        return partial
