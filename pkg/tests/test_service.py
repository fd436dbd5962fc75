"""Service-boundary behavior: auth on every endpoint, error envelopes,
procedure endpoints, onboarding, pagination, and the access log."""

from __future__ import annotations

import io
import json
import zipfile

import pytest
from fastapi.testclient import TestClient

from conftest import (ADMIN, FIXTURES, OUTSIDER, OUTSIDER_PI, PI, RESEARCHER,
                      make_hub, seed_fixtures, seed_groups)
from qdh.service import create_app
from qdh.tokens import CachingVerifier, MockTokenProvider


@pytest.fixture
def service(tmp_path):
    hub = make_hub(tmp_path / "data")
    seed_groups(hub)
    seed_fixtures(hub)
    provider = MockTokenProvider("test-secret")
    app = create_app(hub, CachingVerifier(provider, 300.0), provider=provider)
    client = TestClient(app)
    yield client, provider, hub
    hub.close()


def auth(provider, user):
    return {"Authorization": f"Bearer {provider.issue(user)}"}


# --- authentication boundary ----------------------------------------------------

def test_missing_token_is_401(service):
    client, provider, hub = service
    assert client.get("/v1/samples").status_code == 401


def test_tampered_token_is_401(service):
    client, provider, hub = service
    token = provider.issue(PI)
    resp = client.get("/v1/samples",
                      headers={"Authorization": f"Bearer {token[:-4]}XXXX"})
    assert resp.status_code == 401
    assert resp.json()["code"] == "INVALID_TOKEN"


def test_every_response_carries_request_id(service):
    client, provider, hub = service
    resp = client.get("/v1/samples", headers=auth(provider, PI))
    assert resp.headers.get("X-Request-Id")
    resp = client.get("/v1/samples")
    assert resp.headers.get("X-Request-Id")
    assert resp.json()["request_id"] == resp.headers["X-Request-Id"]


def test_auth_verify_returns_subject(service):
    client, provider, hub = service
    resp = client.post("/v1/auth/verify", headers=auth(provider, RESEARCHER))
    assert resp.status_code == 200
    assert resp.json() == {"user_id": RESEARCHER, "group_id": "flux-lab",
                           "role": "researcher"}


def test_auth_verify_unregistered_is_403(service):
    client, provider, hub = service
    resp = client.post("/v1/auth/verify", headers=auth(provider, "stranger"))
    assert resp.status_code == 403
    assert resp.json()["code"] == "UNREGISTERED_USER"


MUTATING_ENDPOINTS = [
    ("POST", "/v1/samples", {"json": {"sample_id": "x", "nodes": [], "edges": []}}),
    ("PUT", "/v1/samples/eus-001", {"json": {"public": True}}),
    ("POST", "/v1/samples/eus-001/objects?path=a", {"content": b"x"}),
    ("POST", "/v1/query", {"json": {"query": "RETURN x.y"}}),
    ("POST", "/v1/ingest/bulk", {"content": b"{}"}),
    ("POST", "/v1/groups", {"json": {"group_id": "g", "owner": "o"}}),
    ("POST", "/v1/groups/flux-lab/members", {"json": {"user": "u", "role": "student"}}),
    ("POST", "/v1/grants", {"json": {"subject": "s", "object": "o", "rights": ["read"]}}),
    ("POST", "/v1/onboarding/schema", {"json": {"tables": []}}),
    ("POST", "/v1/onboarding/dictionary", {"json": {"entries": []}}),
    ("POST", "/v1/procedures/validate", {"content": b"<graphml/>"}),
    ("POST", "/v1/procedures/submit", {"content": b"<graphml/>"}),
    ("POST", "/v1/admin/objects/eus-001", {"json": {"action": "delete"}}),
]


@pytest.mark.parametrize("method,path,kwargs", MUTATING_ENDPOINTS,
                         ids=[e[1] for e in MUTATING_ENDPOINTS])
def test_every_mutating_endpoint_requires_a_token(service, method, path, kwargs):
    client, provider, hub = service
    resp = client.request(method, path, **kwargs)
    assert resp.status_code == 401


# --- samples -----------------------------------------------------------------------

def test_list_samples_is_access_filtered(service):
    client, provider, hub = service
    mine = client.get("/v1/samples", headers=auth(provider, PI)).json()
    assert {r["sample_id"] for r in mine["items"]} == {
        "eus-001", "fluxb-1", "fluxb-2", "fluxb-3", "fluxb-4", "fluxb-5"}
    theirs = client.get("/v1/samples", headers=auth(provider, OUTSIDER_PI)).json()
    assert theirs["items"] == []


def test_pagination_cursor(service):
    client, provider, hub = service
    page1 = client.get("/v1/samples?limit=2", headers=auth(provider, PI)).json()
    assert len(page1["items"]) == 2 and page1["next_cursor"]
    page2 = client.get(f"/v1/samples?limit=2&cursor={page1['next_cursor']}",
                       headers=auth(provider, PI)).json()
    assert len(page2["items"]) == 2
    assert {r["sample_id"] for r in page1["items"]}.isdisjoint(
        r["sample_id"] for r in page2["items"])


def test_get_sample_with_views(service):
    client, provider, hub = service
    full = client.get("/v1/samples/eus-001", headers=auth(provider, PI)).json()
    assert full["row"]["name"] == "Synthesized EuS"
    assert len(full["graph"]["nodes"]) == 73
    template = client.get("/v1/samples/eus-001?view=template",
                          headers=auth(provider, PI)).json()
    assert all(n["kind"].endswith("_spec") for n in template["graph"]["nodes"])
    history = client.get("/v1/samples/eus-001?view=history&node=mat-eus",
                         headers=auth(provider, PI)).json()
    assert {n["node_id"] for n in history["graph"]["nodes"]} >= {"mat-eus", "mat-s"}


def test_get_sample_not_readable_is_404(service):
    client, provider, hub = service
    resp = client.get("/v1/samples/eus-001", headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 404


def test_no_delete_route_for_samples(service):
    client, provider, hub = service
    resp = client.delete("/v1/samples/eus-001", headers=auth(provider, PI))
    assert resp.status_code == 405


def test_put_sample_publish_then_outsider_reads(service):
    client, provider, hub = service
    resp = client.put("/v1/samples/eus-001", json={"public": True},
                      headers=auth(provider, PI))
    assert resp.status_code == 200
    resp = client.get("/v1/samples/eus-001", headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 200


def test_create_sample_via_post(service):
    client, provider, hub = service
    doc = {"sample_id": "post-1",
           "nodes": [{"node_id": "post-1", "kind": "sample_root", "name": "posted"}],
           "edges": []}
    resp = client.post("/v1/samples", json=doc, headers=auth(provider, PI))
    assert resp.status_code == 201
    assert resp.json()["sample_id"] == "post-1"
    assert client.get("/v1/samples/post-1", headers=auth(provider, PI)).status_code == 200


# --- objects --------------------------------------------------------------------------

def test_object_upload_and_versioned_download(service):
    client, provider, hub = service
    up = client.post("/v1/samples/eus-001/objects", params={"path": "eus-001/extra.bin"},
                     content=b"v1", headers=auth(provider, PI))
    assert up.status_code == 201
    client.post("/v1/samples/eus-001/objects", params={"path": "eus-001/extra.bin"},
                content=b"v2", headers=auth(provider, PI))
    latest = client.get("/v1/objects", params={"path": "eus-001/extra.bin"},
                        headers=auth(provider, PI))
    assert latest.content == b"v2" and latest.headers["X-Qdh-Version"] == "2"
    first = client.get("/v1/objects", params={"path": "eus-001/extra.bin", "version": 1},
                       headers=auth(provider, PI))
    assert first.content == b"v1"
    meta = client.get("/v1/objects", params={"path": "eus-001/extra.bin", "meta": True},
                      headers=auth(provider, PI)).json()
    assert meta["version"] == 2 and meta["checksum_algorithm"] == "sha256"


def test_object_of_foreign_sample_hidden(service):
    client, provider, hub = service
    resp = client.get("/v1/objects", params={"path": "eus-001/xrd/scan1.xrdml"},
                      headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 404


def test_object_upload_to_foreign_sample_denied(service):
    client, provider, hub = service
    resp = client.post("/v1/samples/eus-001/objects", params={"path": "x"},
                       content=b"x", headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 403


# --- query + navigate --------------------------------------------------------------------

def test_query_endpoint_runs_example2(service):
    client, provider, hub = service
    text = (FIXTURES / "eus_heating.qdhql").read_text()
    resp = client.post("/v1/query", json={"query": text}, headers=auth(provider, PI))
    assert resp.status_code == 200
    assert resp.json()["count"] == 6


def test_query_syntax_error_is_422_with_position(service):
    client, provider, hub = service
    resp = client.post("/v1/query", json={"query": "RETURN x.y"},
                       headers=auth(provider, PI))
    assert resp.status_code == 422
    body = resp.json()
    assert body["code"] == "SYNTAX_ERROR" and "line" in body["details"]


def test_navigate_object_path_with_slashes(service):
    client, provider, hub = service
    resp = client.get("/v1/navigate/eus-001/xrd/scan1.xrdml", headers=auth(provider, PI))
    assert resp.status_code == 200
    assert {d["id"] for d in resp.json()["items"]} >= {"eus-001", "meas-xrd-1"}


# --- bulk ingest ---------------------------------------------------------------------------

def test_bulk_ingest_graphml(service):
    client, provider, hub = service
    payload = (FIXTURES / "ganb4se8.graphml").read_bytes()
    resp = client.post("/v1/ingest/bulk",
                       files={"upload": ("ganb4se8.graphml", payload, "application/xml")},
                       headers=auth(provider, PI))
    assert resp.status_code == 201
    assert resp.json()["sample_id"] == "ganb4se8-001"


def test_bulk_ingest_zip_directory_with_objects(service, tmp_path):
    client, provider, hub = service
    buf = io.BytesIO()
    src = FIXTURES / "eus_dir"
    with zipfile.ZipFile(buf, "w") as zf:
        for member in sorted(src.rglob("*")):
            if member.is_file():
                zf.write(member, member.relative_to(src).as_posix())
    # re-ingest of eus-001 by its owner: version 2
    resp = client.post("/v1/ingest/bulk",
                       files={"upload": ("eus.zip", buf.getvalue(), "application/zip")},
                       headers=auth(provider, PI))
    assert resp.status_code == 201
    assert resp.json()["version"] == 2


def test_bulk_ingest_dangling_pointer_conflict(service):
    client, provider, hub = service
    doc = {"sample_id": "dang-1", "nodes": [
        {"node_id": "dang-1", "kind": "sample_root", "name": "r"},
        {"node_id": "m", "kind": "material_run", "name": "m"},
        {"node_id": "m-spec", "kind": "material_spec", "name": "s"},
        {"node_id": "meas", "kind": "measurement_run", "name": "scan",
         "file_ref": "dang-1/never-uploaded.bin"},
        {"node_id": "meas-spec", "kind": "measurement_spec", "name": "ms"},
    ], "edges": [
        {"src": "m", "dst": "m-spec", "label": "has_spec"},
        {"src": "meas", "dst": "meas-spec", "label": "has_spec"},
        {"src": "m", "dst": "dang-1", "label": "flows_to"},
    ]}
    resp = client.post("/v1/ingest/bulk", content=json.dumps(doc).encode(),
                       headers=auth(provider, PI))
    assert resp.status_code == 409
    assert resp.json()["code"] == "CONSTRAINT_FAILED"
    assert client.get("/v1/samples/dang-1", headers=auth(provider, PI)).status_code == 404


# --- groups and grants ------------------------------------------------------------------------

def test_group_flow_and_discretionary_grant(service):
    client, provider, hub = service
    resp = client.post("/v1/grants",
                       json={"subject": OUTSIDER, "object": "eus-001", "rights": ["read"]},
                       headers=auth(provider, PI))
    assert resp.status_code == 201
    resp = client.get("/v1/samples/eus-001", headers=auth(provider, OUTSIDER))
    assert resp.status_code == 200
    # the grantee's groupmates gain nothing
    resp = client.get("/v1/samples/eus-001", headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 404


def test_non_owner_grant_is_403(service):
    client, provider, hub = service
    resp = client.post("/v1/grants",
                       json={"subject": OUTSIDER, "object": "eus-001", "rights": ["read"]},
                       headers=auth(provider, RESEARCHER))
    assert resp.status_code == 403 and resp.json()["code"] == "NOT_OWNER"


def test_add_member_and_representative_flag(service):
    client, provider, hub = service
    resp = client.post("/v1/groups/flux-lab/members",
                       json={"user": "newbie", "role": "student"},
                       headers=auth(provider, PI))
    assert resp.status_code == 201
    resp = client.post("/v1/groups/flux-lab/members",
                       json={"user": RESEARCHER, "representative": True},
                       headers=auth(provider, PI))
    assert resp.status_code == 201
    resp = client.post("/v1/grants",
                       json={"subject": OUTSIDER, "object": "fluxb-1", "rights": ["read"]},
                       headers=auth(provider, RESEARCHER))
    assert resp.status_code == 201


def test_group_creation_requires_admin_token(service):
    client, provider, hub = service
    resp = client.post("/v1/groups", json={"group_id": "g2", "owner": "x"},
                       headers=auth(provider, PI))
    assert resp.status_code == 403
    resp = client.post("/v1/groups", json={"group_id": "g2", "owner": "x"},
                       headers=auth(provider, ADMIN))
    assert resp.status_code == 201


# --- onboarding ------------------------------------------------------------------------------

def test_onboarding_schema_dictionary_and_rows(service):
    client, provider, hub = service
    schema = json.loads((FIXTURES / "onboarding" / "monark_schema.json").read_text())
    resp = client.post("/v1/onboarding/schema", json=schema,
                       headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 201 and len(resp.json()["registered"]) == 4
    entries = json.loads((FIXTURES / "onboarding" / "monark_dict.json").read_text())
    resp = client.post("/v1/onboarding/dictionary", json=entries,
                       headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 201
    resp = client.post("/v1/tables/devices/rows",
                       json={"device_id": "dev-1", "stack_id": "st-1",
                             "name": "hall bar A", "date": "2026-06-01T00:00:00Z",
                             "owner": OUTSIDER_PI},
                       headers=auth(provider, OUTSIDER_PI))
    assert resp.status_code == 201
    rows = client.get("/v1/tables/devices/rows", headers=auth(provider, OUTSIDER_PI)).json()
    assert rows["total"] == 1
    resp = client.post("/v1/query",
                       json={"query": 'FROM 2d_device {} RETURN 2d_device.device_id'},
                       headers=auth(provider, OUTSIDER_PI))
    assert resp.json()["rows"] == [{"2d_device.device_id": "dev-1"}]


# --- procedures --------------------------------------------------------------------------------

def test_procedure_validate_good_and_bad(service):
    client, provider, hub = service
    good = (FIXTURES / "ganb4se8.graphml").read_bytes()
    resp = client.post("/v1/procedures/validate", content=good, headers=auth(provider, PI))
    assert resp.status_code == 200 and resp.json()["ok"] is True

    bad = good.decode().replace(
        '<edge source="gnb-proc-heat" target="gnb-proc-heat-spec">\n      '
        '<data key="label">has_spec</data>\n    </edge>\n    ', "")
    resp = client.post("/v1/procedures/validate", content=bad.encode(),
                       headers=auth(provider, PI))
    body = resp.json()
    assert body["ok"] is False
    assert any(v["code"] == "MISSING_SPEC" and v["subject"] == "gnb-proc-heat"
               for v in body["violations"])

    resp = client.post("/v1/procedures/validate", content=b"not xml",
                       headers=auth(provider, PI))
    body = resp.json()
    assert body["ok"] is False and body["violations"][0]["code"] == "MALFORMED"


def test_procedure_submit_then_queryable(service):
    client, provider, hub = service
    resp = client.post("/v1/procedures/submit",
                       content=(FIXTURES / "ganb4se8.graphml").read_bytes(),
                       headers=auth(provider, PI))
    assert resp.status_code == 201
    sid = resp.json()["sample_id"]
    resp = client.post("/v1/query",
                       json={"query": f'FROM sample {{name = "GaNb4Se8"}} '
                                      f'RETURN sample.sample_id'},
                       headers=auth(provider, PI))
    assert resp.json()["rows"] == [{"sample.sample_id": sid}]


def test_procedure_submit_invalid_is_422(service):
    client, provider, hub = service
    good = (FIXTURES / "ganb4se8.graphml").read_text()
    bad = good.replace('<edge source="gnb-proc-heat" target="gnb-proc-heat-spec">\n      '
                       '<data key="label">has_spec</data>\n    </edge>\n    ', "")
    resp = client.post("/v1/procedures/submit", content=bad.encode(),
                       headers=auth(provider, PI))
    assert resp.status_code == 422
    assert resp.json()["code"] == "INVALID_GRAPH"


def test_procedure_library_payload(service):
    client, provider, hub = service
    lib = client.get("/v1/procedures/library", headers=auth(provider, PI)).json()
    assert len(lib["kinds"]) == 18
    by_kind = {k["kind"]: k for k in lib["kinds"]}
    assert by_kind["instrument_run"]["spec_kind"] is None
    assert by_kind["measurement_run"]["spec_kind"] == "measurement_spec"
    assert any(t["name"] == "Heating" for t in lib["templates"])


# --- access log ----------------------------------------------------------------------------------

def test_access_log_admin_only_and_well_formed(service):
    client, provider, hub = service
    client.get("/v1/samples", headers=auth(provider, PI))
    resp = client.get("/v1/log", headers=auth(provider, PI))
    assert resp.status_code == 403
    resp = client.get("/v1/log", headers=auth(provider, ADMIN))
    assert resp.status_code == 200
    records = resp.json()["items"]
    assert records, "log must not be empty"
    for rec in records:
        assert {"ts", "user", "endpoint", "status", "objects", "basis",
                "latency_ms", "request_id"} <= set(rec)
    assert any(r["endpoint"] == "GET /v1/samples" and r["user"] == PI for r in records)


def test_mutations_match_log_and_store_state(service):
    """Every 2xx mutating request corresponds to a committed change."""
    client, provider, hub = service
    before = hub.graphs.version_count("eus-001")
    ok = client.post("/v1/samples/eus-001/objects", params={"path": "eus-001/g.bin"},
                     content=b"g", headers=auth(provider, PI))
    denied = client.post("/v1/samples/eus-001/objects", params={"path": "eus-001/h.bin"},
                         content=b"h", headers=auth(provider, OUTSIDER))
    assert ok.status_code == 201 and denied.status_code == 403
    assert hub.objects.exists("eus-001/g.bin")
    assert not hub.objects.exists("eus-001/h.bin")
    log = client.get("/v1/log", headers=auth(provider, ADMIN)).json()["items"]
    outcomes = {(r["user"], r["status"]) for r in log
                if r["endpoint"].startswith("POST /v1/samples/eus-001/objects")}
    assert (PI, 201) in outcomes and (OUTSIDER, 403) in outcomes


# --- admin tombstone ---------------------------------------------------------------------------------

def test_admin_tombstone_restore_via_http(service):
    client, provider, hub = service
    resp = client.post("/v1/admin/objects/eus-001", json={"action": "delete"},
                       headers=auth(provider, ADMIN))
    assert resp.status_code == 200
    assert client.get("/v1/samples/eus-001", headers=auth(provider, PI)).status_code == 404
    text = (FIXTURES / "eus_heating.qdhql").read_text()
    rows = client.post("/v1/query", json={"query": text},
                       headers=auth(provider, PI)).json()["rows"]
    assert rows == []
    client.post("/v1/admin/objects/eus-001", json={"action": "restore"},
                headers=auth(provider, ADMIN))
    assert client.get("/v1/samples/eus-001", headers=auth(provider, PI)).status_code == 200


def test_member_cannot_tombstone(service):
    client, provider, hub = service
    resp = client.post("/v1/admin/objects/eus-001", json={"action": "delete"},
                       headers=auth(provider, PI))
    assert resp.status_code == 403 and resp.json()["code"] == "NOT_ADMIN"
