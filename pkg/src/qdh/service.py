"""HTTP front door: every capability behind bearer-token auth under /v1.

Uniform envelope: responses carry an X-Request-Id header, errors a
``{code, message, details, request_id}`` body. Every request appends one
record to the access log. Mutations all funnel through the hub's
single-writer commit path; no DELETE route exists for samples.
"""

from __future__ import annotations

import email
import email.policy
import io
import json
import os
import time
import uuid
import zipfile
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from qdh.access import RIGHTS, ROLES
from qdh.codecs import (graph_to_json, parse_gemd_json, parse_graphml,
                        parse_json_directory)
from qdh.errors import QdhError
from qdh.federation import related_items, run_query
from qdh.hub import Hub, HubConfig
from qdh.model import (FILE_REF_KINDS, NODE_KINDS, SPEC_FOR_RUN, GemdGraph,
                       material_history, spec_template, validate_graph)
from qdh.object_store import DictionaryEntry
from qdh.tabular_store import ExtensionColumn, TableExtension
from qdh.tokens import (CachingVerifier, HttpTokenVerifier, MockTokenProvider,
                        TokenVerifier, provider_app)

DEFAULT_PAGE = 100

_STATUS_BY_CODE: dict[str, int] = {
    "INVALID_TOKEN": 401, "PROVIDER_UNREACHABLE": 401, "MISSING_TOKEN": 401,
    "AUTHZ_DENIED": 403, "NOT_OWNER": 403, "NOT_ADMIN": 403, "UNREGISTERED_USER": 403,
    "NOT_FOUND": 404, "UNKNOWN_NODE": 404, "UNKNOWN_OBJECT": 404, "UNKNOWN_TABLE": 404,
    "UNKNOWN_VERSION": 404, "UNKNOWN_ID": 404, "UNKNOWN_CHARACTERIZATION": 404,
    "UNKNOWN_GROUP": 404,
    "DUPLICATE_KEY": 409, "FK_VIOLATION": 409, "CONSTRAINT_FAILED": 409,
    "ID_COLLISION": 409, "NAME_COLLISION": 409, "DUPLICATE_GROUP": 409,
    "ALREADY_MEMBER_ELSEWHERE": 409,
    "QUOTA_EXCEEDED": 413,
}
_DEFAULT_STATUS = 422  # malformed/invalid input


def _status_for(code: str) -> int:
    return _STATUS_BY_CODE.get(code, _DEFAULT_STATUS)


class AccessLog:
    """Append-only usability log, one record per request."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, entry: dict[str, Any]) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def read(self) -> list[dict[str, Any]]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(json.loads(line))
        return out


def procedure_library() -> dict[str, Any]:
    """Palette payload for the procedure editor: node kinds plus starter
    process/measurement templates."""
    kinds = []
    for kind in sorted(NODE_KINDS):
        kinds.append({
            "kind": kind,
            "spec_kind": SPEC_FOR_RUN.get(kind),
            "file_ref_allowed": kind in FILE_REF_KINDS,
        })
    templates = [
        {"name": "Heating", "kind": "process_run",
         "attributes": {"temperature": {"type": "uniform_real", "units": "celsius",
                                        "lower_bound": 450.5, "upper_bound": 451.5},
                        "duration": {"type": "real_scalar", "value": 4.0, "units": "hour"}}},
        {"name": "Quenching", "kind": "process_run",
         "attributes": {"medium": {"type": "categorical", "value": "ice water"}}},
        {"name": "Grinding", "kind": "process_run", "attributes": {}},
        {"name": "Mixing", "kind": "process_run", "attributes": {}},
        {"name": "Pressing", "kind": "process_run",
         "attributes": {"pressure": {"type": "real_scalar", "value": 5.0, "units": "ton"}}},
        {"name": "Sealed vessel growth", "kind": "process_run",
         "attributes": {"atmosphere": {"type": "categorical", "value": "vacuum"}}},
        {"name": "Starting material", "kind": "material_run",
         "attributes": {"form": {"type": "text", "value": "powder"}}},
        {"name": "Ingredient (mass fraction)", "kind": "ingredient_run",
         "attributes": {"quantity": {"type": "fraction", "basis": "mass", "value": 0.3}}},
        {"name": "XRD scan", "kind": "measurement_run",
         "attributes": {"measure_type": {"type": "text", "value": "XRD"}}},
        {"name": "VSM loop", "kind": "measurement_run",
         "attributes": {"measure_type": {"type": "text", "value": "VSM"}}},
        {"name": "Diffractometer", "kind": "instrument_run",
         "attributes": {"type": {"type": "text", "value": "XRD"},
                        "make": {"type": "text", "value": "Rigaku"},
                        "model": {"type": "text", "value": "SmartLab"}}},
    ]
    return {"kinds": kinds, "templates": templates}


def _multipart_files(body: bytes, content_type: str) -> list[tuple[str, str, bytes]]:
    """(field name, filename, content) triples from a multipart/form-data body,
    parsed with the stdlib email machinery."""
    header = f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n".encode("ascii")
    msg = email.message_from_bytes(header + body, policy=email.policy.HTTP)
    if not msg.is_multipart():
        raise QdhError("MALFORMED", "expected a multipart/form-data body")
    out = []
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition") or ""
        filename = part.get_filename() or ""
        payload = part.get_payload(decode=True) or b""
        out.append((str(name), str(filename), payload))
    return out


def _paginate(items: list[Any], cursor: Optional[str], limit: int) -> dict[str, Any]:
    start = int(cursor) if cursor else 0
    page = items[start:start + limit]
    next_cursor = str(start + limit) if start + limit < len(items) else None
    return {"items": page, "next_cursor": next_cursor, "total": len(items)}


def create_app(hub: Hub, verifier: TokenVerifier, *,
               provider: Optional[MockTokenProvider] = None) -> FastAPI:
    app = FastAPI(title="qdh hub", version="1")
    log = AccessLog(hub.config.data_dir / "access_log.jsonl")

    if provider is not None:
        app.mount("/provider", provider_app(provider))

    def authenticate(request: Request) -> str:
        auth = request.headers.get("authorization", "")
        if not auth.lower().startswith("bearer "):
            raise QdhError("MISSING_TOKEN", "request carries no bearer token")
        user_id = verifier.verify(auth[7:].strip())
        request.state.user = user_id
        return user_id

    @app.middleware("http")
    async def envelope(request: Request, call_next):
        request_id = uuid.uuid4().hex[:12]
        request.state.request_id = request_id
        request.state.user = None
        request.state.objects = []
        request.state.basis = ""
        started = time.monotonic()
        try:
            response = await call_next(request)
        except QdhError as exc:
            response = JSONResponse(status_code=_status_for(exc.code),
                                    content={**exc.to_dict(), "request_id": request_id})
        response.headers["X-Request-Id"] = request_id
        log.record({
            "ts": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "request_id": request_id,
            "user": request.state.user,
            "endpoint": f"{request.method} {request.url.path}",
            "status": response.status_code,
            "objects": list(request.state.objects),
            "basis": request.state.basis,
            "latency_ms": round((time.monotonic() - started) * 1000, 3),
        })
        return response

    def touches(request: Request, *object_ids: str, basis: str = "") -> None:
        request.state.objects.extend(object_ids)
        if basis:
            request.state.basis = basis

    # -- auth ------------------------------------------------------------

    @app.post("/v1/auth/verify")
    def auth_verify(request: Request):
        user = authenticate(request)
        subject = hub.access.subject_of(user)  # UNREGISTERED_USER -> 403
        return {"user_id": subject.user_id, "group_id": subject.group_id,
                "role": subject.role}

    # -- samples -----------------------------------------------------------

    def _readable_sample_ids(user: str) -> list[str]:
        ids = hub.graphs.sample_ids()
        return sorted(hub.access.readable_samples(user, ids))

    @app.get("/v1/samples")
    def list_samples(request: Request, cursor: Optional[str] = None,
                     limit: int = DEFAULT_PAGE):
        user = authenticate(request)
        with hub.lock:
            rows = []
            for sid in _readable_sample_ids(user):
                row = hub.tabular.get_row("samples", sid) or {"sample_id": sid}
                row["graph_versions"] = hub.graphs.version_count(sid)
                rows.append(row)
        rows.sort(key=lambda r: (r.get("date") or "", r["sample_id"]), reverse=True)
        return _paginate(rows, cursor, limit)

    @app.post("/v1/samples", status_code=201)
    async def create_sample(request: Request):
        user = authenticate(request)
        doc = await request.json()
        graph = parse_gemd_json(doc.get("graph", doc))
        receipt = hub.submit_graph(graph, user)
        touches(request, receipt["sample_id"], basis="group")
        return receipt

    @app.get("/v1/samples/{sample_id}")
    def get_sample(request: Request, sample_id: str, version: Optional[int] = None,
                   view: str = "full", node: Optional[str] = None):
        user = authenticate(request)
        with hub.lock:
            if (not hub.access.has_object(sample_id)
                    or not hub.access.authorize(user, sample_id, "read").allowed):
                raise QdhError("NOT_FOUND", f"no sample {sample_id!r}")
            decision = hub.access.authorize(user, sample_id, "read")
            touches(request, sample_id, basis=decision.basis)
            graph = hub.graphs.get_graph(sample_id, version)
            row = hub.tabular.get_row("samples", sample_id)
            versions = hub.graphs.version_count(sample_id)
        if view == "template":
            graph = spec_template(graph)
        elif view == "history":
            graph = material_history(graph, node or sample_id)
        elif view != "full":
            raise QdhError("BAD_FILTER", f"unknown view {view!r}")
        return {
            "sample_id": sample_id,
            "row": row,
            "graph": graph_to_json(graph),
            "graph_versions": versions,
            "version": version or versions,
        }

    @app.put("/v1/samples/{sample_id}")
    async def update_sample(request: Request, sample_id: str):
        user = authenticate(request)
        doc = await request.json()
        out: dict[str, Any] = {"sample_id": sample_id}
        if "public" in doc:
            out["public"] = hub.access.set_public(user, sample_id, bool(doc["public"]))
            touches(request, sample_id, basis="group")
        if "graph" in doc:
            graph = parse_gemd_json(doc["graph"])
            if graph.sample_id != sample_id:
                raise QdhError("INVALID_GRAPH",
                               f"document is for {graph.sample_id!r}, route says {sample_id!r}")
            out["receipt"] = hub.submit_graph(graph, user)
            touches(request, sample_id)
        if len(out) == 1:
            raise QdhError("MALFORMED", "body must carry 'graph' and/or 'public'")
        return out

    # -- objects ---------------------------------------------------------------

    @app.post("/v1/samples/{sample_id}/objects", status_code=201)
    async def upload_object(request: Request, sample_id: str, path: str = ""):
        user = authenticate(request)
        content = await request.body()
        if not path:
            raise QdhError("EMPTY_PATH", "object path must be given as ?path=")
        receipt = hub.put_object(sample_id, path, content, user)
        touches(request, sample_id, basis="group")
        return receipt

    @app.get("/v1/objects")
    def get_object(request: Request, path: str, version: Optional[int] = None,
                   meta: bool = False):
        user = authenticate(request)
        content, obj = hub.get_object(path, user, version)
        touches(request, obj["sample_id"])
        if meta:
            return obj
        return Response(content=content, media_type="application/octet-stream",
                        headers={"X-Qdh-Checksum": obj["checksum"],
                                 "X-Qdh-Version": str(obj["version"]),
                                 "X-Qdh-Sample": obj["sample_id"]})

    # -- query and navigation -----------------------------------------------------

    @app.post("/v1/query")
    async def query(request: Request):
        user = authenticate(request)
        doc = await request.json()
        text = doc.get("query", "")
        rows = run_query(hub, text, user)
        return {"rows": rows, "count": len(rows)}

    @app.get("/v1/navigate/{item_id:path}")
    def navigate(request: Request, item_id: str):
        user = authenticate(request)
        items = related_items(hub, item_id, user)
        touches(request, item_id)
        return {"id": item_id, "items": items}

    # -- bulk ingest ------------------------------------------------------------

    @app.post("/v1/ingest/bulk", status_code=201)
    async def ingest_bulk(request: Request, format: Optional[str] = None):
        user = authenticate(request)
        content_type = request.headers.get("content-type", "")
        body = await request.body()
        if content_type.startswith("multipart/"):
            files = _multipart_files(body, content_type)
            if not files:
                raise QdhError("MALFORMED", "multipart body carries no file")
            name, filename, payload = files[0]
            fmt = format or _guess_format(filename or name)
        else:
            payload = body
            fmt = format or _guess_format(request.headers.get("x-qdh-filename", ""))
        graph, objects = _parse_upload(payload, fmt)
        bundle = hub.build_bundle(graph, objects, principal=user)
        receipt = hub.ingest_bundle(bundle, user)
        touches(request, receipt["sample_id"], basis="group")
        return receipt

    # -- groups, grants ------------------------------------------------------------

    @app.post("/v1/groups", status_code=201)
    async def create_group(request: Request):
        user = authenticate(request)
        doc = await request.json()
        return hub.access.create_group(user, doc.get("group_id", ""), doc.get("owner", ""))

    @app.post("/v1/groups/{group_id}/members", status_code=201)
    async def add_member(request: Request, group_id: str):
        user = authenticate(request)
        doc = await request.json()
        if "representative" in doc and "role" not in doc:
            return hub.access.set_representative(user, group_id, doc.get("user", ""),
                                                 bool(doc["representative"]))
        role = doc.get("role", "")
        if role not in ROLES:
            raise QdhError("INVALID_ROLE", f"role must be one of {list(ROLES)}")
        receipt = hub.access.add_member(user, group_id, doc.get("user", ""), role)
        if doc.get("representative"):
            hub.access.set_representative(user, group_id, doc.get("user", ""), True)
        return receipt

    @app.post("/v1/grants", status_code=201)
    async def create_grant(request: Request):
        user = authenticate(request)
        doc = await request.json()
        rights = doc.get("rights", [])
        if isinstance(rights, str):
            rights = [rights]
        if not set(rights) <= RIGHTS:
            raise QdhError("INVALID_RIGHTS", f"rights must be among {sorted(RIGHTS)}")
        receipt = hub.access.grant_discretionary(user, doc.get("subject", ""),
                                                 doc.get("object", ""), rights)
        touches(request, doc.get("object", ""), basis="discretionary")
        return receipt

    # -- onboarding -------------------------------------------------------------------

    @app.post("/v1/onboarding/schema", status_code=201)
    async def onboard_schema(request: Request):
        user = authenticate(request)
        doc = await request.json()
        tables = doc["tables"] if "tables" in doc else [doc]
        receipts = []
        for t in tables:
            ext = TableExtension(
                table_name=t.get("table_name", ""),
                columns=tuple(ExtensionColumn(c.get("name", ""), c.get("semantic_type", ""))
                              for c in t.get("columns", [])),
                semantic_entity=t.get("semantic_entity", ""),
                joins_into_sample_union=bool(t.get("joins_into_sample_union")),
            )
            receipts.append(hub.register_extension(ext, user))
        return {"registered": receipts}

    @app.post("/v1/onboarding/dictionary", status_code=201)
    async def onboard_dictionary(request: Request):
        user = authenticate(request)
        doc = await request.json()
        entries = doc["entries"] if "entries" in doc else [doc]
        receipts = []
        for e in entries:
            entry = DictionaryEntry(e.get("characterization", ""), e.get("regex", ""),
                                    e.get("description", ""))
            receipts.append(hub.update_dictionary(entry, user))
        return {"updated": receipts}

    # rows into onboarded extension tables
    @app.post("/v1/tables/{table}/rows", status_code=201)
    async def insert_extension_row(request: Request, table: str):
        user = authenticate(request)
        hub.access.subject_of(user)
        doc = await request.json()
        with hub.lock:
            return hub.tabular.insert_row(table, doc)

    @app.get("/v1/tables/{table}/rows")
    def list_table_rows(request: Request, table: str, cursor: Optional[str] = None,
                        limit: int = DEFAULT_PAGE):
        user = authenticate(request)
        with hub.lock:
            rows = hub.tabular.query_rows(table, (), order="latest_first")
            kept = [r for r in rows
                    if not r.get("sample_id")
                    or (hub.access.has_object(r["sample_id"])
                        and hub.access.authorize(user, r["sample_id"], "read").allowed)]
        return _paginate(kept, cursor, limit)

    # -- procedure editor ----------------------------------------------------------------

    @app.get("/v1/procedures/library")
    def library(request: Request):
        authenticate(request)
        return procedure_library()

    @app.post("/v1/procedures/validate")
    async def validate_procedure(request: Request):
        user = authenticate(request)
        body = await request.body()
        try:
            graph = parse_graphml(body)
        except QdhError as exc:
            return {"ok": False,
                    "violations": [{"code": exc.code, "subject": "document",
                                    "message": exc.message}]}
        report = validate_graph(graph)
        return report.to_dict()

    @app.post("/v1/procedures/submit", status_code=201)
    async def submit_procedure(request: Request):
        user = authenticate(request)
        body = await request.body()
        graph = parse_graphml(body)
        report = validate_graph(graph)
        if not report.ok:
            raise QdhError("INVALID_GRAPH", "procedure fails validation",
                           violations=report.to_dict()["violations"])
        receipt = hub.submit_graph(graph, user)
        touches(request, receipt["sample_id"], basis="group")
        return receipt

    # -- administration ---------------------------------------------------------------------

    @app.get("/v1/log")
    def read_log(request: Request, cursor: Optional[str] = None, limit: int = DEFAULT_PAGE):
        user = authenticate(request)
        if not hub.access.is_admin(user):
            raise QdhError("NOT_ADMIN", "the access log is admin-only")
        return _paginate(log.read(), cursor, limit)

    @app.post("/v1/admin/objects/{object_id}")
    async def admin_object(request: Request, object_id: str):
        user = authenticate(request)
        doc = await request.json()
        receipt = hub.access.admin_restore_or_delete(user, object_id,
                                                     doc.get("action", ""))
        touches(request, object_id, basis="admin")
        return receipt

    return app


def _guess_format(filename: str) -> str:
    lower = filename.lower()
    if lower.endswith(".graphml") or lower.endswith(".xml"):
        return "graphml"
    if lower.endswith(".zip"):
        return "zip"
    return "gemd-json"


def _parse_upload(payload: bytes, fmt: str) -> tuple[GemdGraph, list[tuple[str, bytes]]]:
    """Decode one bulk upload; zipped directories may carry binary payloads
    under objects/."""
    if fmt == "graphml":
        return parse_graphml(payload), []
    if fmt == "zip":
        import tempfile
        objects: list[tuple[str, bytes]] = []
        with tempfile.TemporaryDirectory() as tmp:
            try:
                archive = zipfile.ZipFile(io.BytesIO(payload))
            except zipfile.BadZipFile:
                raise QdhError("MALFORMED", "upload is not a readable zip archive") from None
            root = Path(tmp)
            for info in archive.infolist():
                name = Path(info.filename)
                if name.is_absolute() or ".." in name.parts:
                    raise QdhError("MALFORMED", f"unsafe zip member {info.filename!r}")
                if info.is_dir():
                    continue
                if name.parts[0] == "objects":
                    objects.append(("/".join(name.parts[1:]), archive.read(info)))
                else:
                    target = root / name
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_bytes(archive.read(info))
            graph = parse_json_directory(root)
        return graph, objects
    if fmt == "gemd-json":
        return parse_gemd_json(payload), []
    raise QdhError("MALFORMED", f"unknown upload format {fmt!r}")


# -- process entry point ---------------------------------------------------------


def serve(data_dir: str | Path, host: str = "127.0.0.1", port: int = 8080, *,
          admin_users: tuple[str, ...] = (), provider_url: Optional[str] = None,
          provider_secret: str = "qdh-dev-secret", token_cache_ttl: float = 300.0,
          durability: str = "os", quota_bytes: Optional[int] = None) -> None:
    """Build the hub from data_dir (recovering committed state) and serve it."""
    import uvicorn

    config = HubConfig(Path(data_dir), admin_users=tuple(admin_users),
                       durability=durability, quota_bytes=quota_bytes,
                       token_cache_ttl=token_cache_ttl)
    hub = Hub(config).open()
    _install_crash_point(hub)

    provider = None
    if provider_url:
        verifier: TokenVerifier = HttpTokenVerifier(provider_url)
    else:
        provider = MockTokenProvider(provider_secret)
        verifier = provider
    app = create_app(hub, CachingVerifier(verifier, token_cache_ttl), provider=provider)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def _install_crash_point(hub: Hub) -> None:
    """QDH_CRASH_POINT=<n> makes the nth commit step die abruptly, for
    crash-recovery drills."""
    target = os.environ.get("QDH_CRASH_POINT")
    if not target:
        return
    remaining = [int(target)]

    def hook(label: str) -> None:
        remaining[0] -= 1
        if remaining[0] < 0:
            os._exit(17)

    hub.crash_hook = hook
