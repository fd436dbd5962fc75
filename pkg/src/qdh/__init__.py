"""qdh: a desk-scale materials-provenance data hub.

Synthesis histories live as typed graphs, mirrored into a
constraint-checked catalog and a versioned object store; a small pattern
language queries all three stores through one planner, under group plus
discretionary access control.
"""

from qdh.access import AccessControl, Decision, ObjectRef, Subject
from qdh.codecs import (parse_gemd_json, parse_graphml, parse_json_directory,
                        serialize_gemd_json, serialize_graphml, write_json_directory)
from qdh.errors import QdhError, QuerySyntaxError
from qdh.federation import FederatedPlan, execute_query, plan_query, related_items, run_query
from qdh.graph_store import GraphStore, NodeFilter, NodePredicate, PathPattern
from qdh.hub import Hub, HubConfig, IngestBundle
from qdh.model import (AttributeValue, GemdEdge, GemdGraph, GemdNode, ValidationReport,
                       Violation, check_attribute, material_history, spec_template,
                       validate_graph)
from qdh.object_store import DictionaryEntry, ObjectStore, StoredObject
from qdh.query_language import QueryAst, parse_query
from qdh.shred import ShredReport, shred
from qdh.tabular_store import ExtensionColumn, Filter, TableExtension, TabularStore
from qdh.tokens import CachingVerifier, HttpTokenVerifier, MockTokenProvider

__all__ = [
    "AccessControl", "AttributeValue", "CachingVerifier", "Decision", "DictionaryEntry",
    "ExtensionColumn", "FederatedPlan", "Filter", "GemdEdge", "GemdGraph", "GemdNode",
    "GraphStore", "Hub", "HubConfig", "HttpTokenVerifier", "IngestBundle",
    "MockTokenProvider", "NodeFilter", "NodePredicate", "ObjectRef", "ObjectStore",
    "PathPattern", "QdhError", "QueryAst", "QuerySyntaxError", "ShredReport",
    "StoredObject", "Subject", "TableExtension", "TabularStore", "ValidationReport",
    "Violation", "check_attribute", "execute_query", "material_history", "parse_gemd_json",
    "parse_graphml", "parse_json_directory", "parse_query", "plan_query", "related_items",
    "run_query", "serialize_gemd_json", "serialize_graphml", "shred", "spec_template",
    "validate_graph", "write_json_directory",
]
