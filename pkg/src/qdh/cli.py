"""qdh command-line client and admin tool.

Mirrors the /v1 HTTP API one-to-one; `qdh serve` hosts the hub itself.
Config lives at ~/.qdh/config (JSON: endpoint, token_path, format),
overridable by QDH_CONFIG / QDH_ENDPOINT / QDH_TOKEN and by flags.

Exit codes: 0 success, 1 domain error reported by the hub, 2 usage error,
3 connection failure, 4 authentication/authorization failure.
"""

from __future__ import annotations

import io
import json
import os
import sys
import zipfile
from pathlib import Path
from typing import Any, Optional

import click
import httpx

EXIT_DOMAIN = 1
EXIT_CONNECT = 3
EXIT_AUTH = 4


def _config_path() -> Path:
    return Path(os.environ.get("QDH_CONFIG", Path.home() / ".qdh" / "config"))


def load_config() -> dict[str, Any]:
    path = _config_path()
    config: dict[str, Any] = {
        "endpoint": "http://127.0.0.1:8080",
        "token_path": str(path.parent / "token"),
        "format": "table",
    }
    if path.exists():
        try:
            config.update(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError:
            raise click.ClickException(f"config file {path} is not valid JSON")
    if os.environ.get("QDH_ENDPOINT"):
        config["endpoint"] = os.environ["QDH_ENDPOINT"]
    return config


class Client:
    def __init__(self, endpoint: str, token: Optional[str], fmt: str):
        self.endpoint = endpoint.rstrip("/")
        self.token = token
        self.fmt = fmt
        self._client = httpx.Client(timeout=30.0)

    def request(self, method: str, path: str, **kwargs) -> httpx.Response:
        headers = dict(kwargs.pop("headers", {}))
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            return self._client.request(method, f"{self.endpoint}{path}",
                                        headers=headers, **kwargs)
        except httpx.HTTPError as exc:
            click.echo(f"connection to {self.endpoint} failed: {exc}", err=True)
            sys.exit(EXIT_CONNECT)

    def call(self, method: str, path: str, **kwargs) -> httpx.Response:
        resp = self.request(method, path, **kwargs)
        if resp.status_code >= 400:
            self._fail(resp)
        return resp

    def _fail(self, resp: httpx.Response) -> None:
        try:
            body = resp.json()
            message = f"{body.get('code', resp.status_code)}: {body.get('message', '')}"
        except ValueError:
            message = f"HTTP {resp.status_code}"
        click.echo(message, err=True)
        sys.exit(EXIT_AUTH if resp.status_code in (401, 403) else EXIT_DOMAIN)

    def show(self, resp: httpx.Response) -> None:
        if self.fmt == "json":
            # machine mode: the raw response body, byte-for-byte
            click.echo(resp.text, nl=False)
            if not resp.text.endswith("\n"):
                click.echo()
            return
        try:
            doc = resp.json()
        except ValueError:
            click.echo(resp.text)
            return
        _render_table(doc)


def _render_table(doc: Any, indent: str = "") -> None:
    if isinstance(doc, dict):
        rows = doc.get("rows") if "rows" in doc else doc.get("items")
        if isinstance(rows, list):
            _render_rows(rows)
            rest = {k: v for k, v in doc.items() if k not in ("rows", "items")}
            for k, v in rest.items():
                click.echo(f"{indent}{k}: {_scalar(v)}")
            return
        for k, v in doc.items():
            if isinstance(v, (dict, list)):
                click.echo(f"{indent}{k}:")
                _render_table(v, indent + "  ")
            else:
                click.echo(f"{indent}{k}: {_scalar(v)}")
    elif isinstance(doc, list):
        _render_rows(doc, indent)
    else:
        click.echo(f"{indent}{_scalar(doc)}")


def _render_rows(rows: list, indent: str = "") -> None:
    if not rows:
        click.echo(f"{indent}(no rows)")
        return
    if not all(isinstance(r, dict) for r in rows):
        for r in rows:
            click.echo(f"{indent}{_scalar(r)}")
        return
    columns: list[str] = []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    widths = {c: max(len(c), *(len(_scalar(r.get(c, ""))) for r in rows)) for c in columns}
    click.echo(indent + "  ".join(c.ljust(widths[c]) for c in columns))
    for r in rows:
        click.echo(indent + "  ".join(_scalar(r.get(c, "")).ljust(widths[c]) for c in columns))


def _scalar(v: Any) -> str:
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


pass_client = click.make_pass_decorator(Client)


@click.group()
@click.option("--endpoint", default=None, help="hub URL (default from config/QDH_ENDPOINT)")
@click.option("--token", default=None, help="bearer token (default from token file/QDH_TOKEN)")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default=None,
              help="output format")
@click.pass_context
def main(ctx: click.Context, endpoint: Optional[str], token: Optional[str],
         fmt: Optional[str]):
    """Materials-provenance hub client."""
    config = load_config()
    if token is None:
        token = os.environ.get("QDH_TOKEN")
    if token is None:
        token_path = Path(config["token_path"])
        if token_path.exists():
            token = token_path.read_text(encoding="utf-8").strip()
    ctx.obj = Client(endpoint or config["endpoint"], token, fmt or config["format"])


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8080, type=int)
@click.option("--admin", "admins", multiple=True, help="admin user id (repeatable)")
@click.option("--provider-url", default=None, help="external token provider URL")
@click.option("--provider-secret", default="qdh-dev-secret")
@click.option("--token-cache-ttl", default=300.0, type=float)
@click.option("--durability", type=click.Choice(["os", "fsync"]), default="os")
@click.option("--quota-bytes", default=None, type=int)
def serve(data_dir, host, port, admins, provider_url, provider_secret,
          token_cache_ttl, durability, quota_bytes):
    """Run the hub service (embeds a mock token provider unless an external
    provider URL is given)."""
    from qdh.service import serve as run_service
    run_service(data_dir, host, port, admin_users=tuple(admins),
                provider_url=provider_url, provider_secret=provider_secret,
                token_cache_ttl=token_cache_ttl, durability=durability,
                quota_bytes=quota_bytes)


@main.command()
@click.argument("user_id")
@click.option("--provider-url", default=None,
              help="token provider base URL (default: <endpoint>/provider)")
@pass_client
def login(client: Client, user_id: str, provider_url: Optional[str]):
    """Obtain a token from the provider and store it at the token path."""
    base = (provider_url or f"{client.endpoint}/provider").rstrip("/")
    try:
        resp = httpx.post(f"{base}/issue", json={"user_id": user_id}, timeout=10.0)
    except httpx.HTTPError as exc:
        click.echo(f"provider unreachable: {exc}", err=True)
        sys.exit(EXIT_CONNECT)
    if resp.status_code != 200:
        click.echo(f"login rejected: HTTP {resp.status_code}", err=True)
        sys.exit(EXIT_AUTH)
    token = resp.json()["token"]
    token_path = Path(load_config()["token_path"])
    token_path.parent.mkdir(parents=True, exist_ok=True)
    token_path.write_text(token + "\n", encoding="utf-8")
    click.echo(f"token for {user_id} stored at {token_path}")


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["gemd-json", "graphml", "zip"]),
              default=None, help="override format detection")
@pass_client
def ingest(client: Client, path: str, fmt: Optional[str]):
    """Bulk-upload a GEMD JSON file, a graphML file, or a directory of
    per-node JSON (binary payloads under objects/)."""
    src = Path(path)
    if src.is_dir():
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w") as zf:
            for member in sorted(src.rglob("*")):
                if member.is_file():
                    zf.write(member, member.relative_to(src).as_posix())
        payload, fmt, filename = buffer.getvalue(), fmt or "zip", f"{src.name}.zip"
    else:
        payload = src.read_bytes()
        fmt = fmt or ("graphml" if src.suffix in (".graphml", ".xml") else
                      "zip" if src.suffix == ".zip" else "gemd-json")
        filename = src.name
    resp = client.call("POST", "/v1/ingest/bulk", params={"format": fmt},
                       files={"upload": (filename, payload, "application/octet-stream")})
    client.show(resp)


@main.command()
@click.argument("query_text", required=False)
@pass_client
def query(client: Client, query_text: Optional[str]):
    """Run a federated query (argument is the query text, or a file path)."""
    if not query_text:
        raise click.UsageError("provide a query string or a path to a query file")
    candidate = Path(query_text)
    if candidate.exists() and candidate.is_file():
        query_text = candidate.read_text(encoding="utf-8").strip()
    resp = client.call("POST", "/v1/query", json={"query": query_text})
    if client.fmt == "json":
        rows = resp.json()["rows"]
        click.echo(json.dumps(rows, sort_keys=True))
    else:
        client.show(resp)


@main.command("get-object")
@click.argument("path")
@click.option("--version", default=None, type=int)
@click.option("--output", "-o", default="-", help="output file ('-' = stdout)")
@click.option("--meta", is_flag=True, help="print metadata instead of content")
@pass_client
def get_object(client: Client, path: str, version: Optional[int], output: str, meta: bool):
    """Fetch an object's content (or metadata) from the store."""
    params = {"path": path}
    if version is not None:
        params["version"] = str(version)
    if meta:
        params["meta"] = "true"
    resp = client.call("GET", "/v1/objects", params=params)
    if meta:
        client.show(resp)
        return
    if output == "-":
        sys.stdout.buffer.write(resp.content)
    else:
        Path(output).write_bytes(resp.content)
        click.echo(f"wrote {len(resp.content)} bytes to {output}")


@main.command("put-object")
@click.argument("sample_id")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--path", "obj_path", required=True, help="object store path")
@pass_client
def put_object(client: Client, sample_id: str, file: str, obj_path: str):
    """Upload a file as a new object version for a sample."""
    content = Path(file).read_bytes()
    resp = client.call("POST", f"/v1/samples/{sample_id}/objects",
                       params={"path": obj_path}, content=content,
                       headers={"Content-Type": "application/octet-stream"})
    client.show(resp)


@main.command()
@click.argument("item_id")
@pass_client
def navigate(client: Client, item_id: str):
    """List items directly linked to the given id, across all stores."""
    resp = client.call("GET", f"/v1/navigate/{item_id}")
    client.show(resp)


@main.command()
@click.option("--subject", required=True, help="grantee user id")
@click.option("--object", "object_id", required=True, help="sample id")
@click.option("--rights", required=True, help="comma-separated subset of read,write,update")
@pass_client
def grant(client: Client, subject: str, object_id: str, rights: str):
    """Issue a discretionary grant to an outside collaborator."""
    resp = client.call("POST", "/v1/grants",
                       json={"subject": subject, "object": object_id,
                             "rights": [r.strip() for r in rights.split(",") if r.strip()]})
    client.show(resp)


@main.group()
def group():
    """Group management."""


@group.command("create")
@click.argument("group_id")
@click.argument("owner")
@pass_client
def group_create(client: Client, group_id: str, owner: str):
    resp = client.call("POST", "/v1/groups", json={"group_id": group_id, "owner": owner})
    client.show(resp)


@group.command("add-member")
@click.argument("group_id")
@click.argument("user")
@click.argument("role")
@click.option("--representative", is_flag=True)
@pass_client
def group_add_member(client: Client, group_id: str, user: str, role: str,
                     representative: bool):
    resp = client.call("POST", f"/v1/groups/{group_id}/members",
                       json={"user": user, "role": role, "representative": representative})
    client.show(resp)


@main.group()
def onboard():
    """Technical onboarding of a new collaboration."""


@onboard.command("schema")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@pass_client
def onboard_schema(client: Client, file: str):
    """Register extension tables from a JSON schema document."""
    doc = json.loads(Path(file).read_text(encoding="utf-8"))
    resp = client.call("POST", "/v1/onboarding/schema", json=doc)
    client.show(resp)


@onboard.command("dict")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@pass_client
def onboard_dict(client: Client, file: str):
    """Update the characterization dictionary from a JSON document."""
    doc = json.loads(Path(file).read_text(encoding="utf-8"))
    resp = client.call("POST", "/v1/onboarding/dictionary", json=doc)
    client.show(resp)


@main.group()
def samples():
    """Sample catalog access."""


@samples.command("list")
@pass_client
def samples_list(client: Client):
    resp = client.call("GET", "/v1/samples")
    client.show(resp)


@samples.command("get")
@click.argument("sample_id")
@click.option("--version", default=None, type=int)
@click.option("--view", type=click.Choice(["full", "template", "history"]), default="full")
@pass_client
def samples_get(client: Client, sample_id: str, version: Optional[int], view: str):
    params = {"view": view}
    if version is not None:
        params["version"] = str(version)
    resp = client.call("GET", f"/v1/samples/{sample_id}", params=params)
    client.show(resp)


@main.group()
def procedure():
    """Procedure-editor document checks and submission."""


@procedure.command("validate")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@pass_client
def procedure_validate(client: Client, file: str):
    resp = client.call("POST", "/v1/procedures/validate",
                       content=Path(file).read_bytes(),
                       headers={"Content-Type": "application/xml"})
    client.show(resp)
    if not resp.json().get("ok", False):
        sys.exit(EXIT_DOMAIN)


@procedure.command("submit")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@pass_client
def procedure_submit(client: Client, file: str):
    resp = client.call("POST", "/v1/procedures/submit",
                       content=Path(file).read_bytes(),
                       headers={"Content-Type": "application/xml"})
    client.show(resp)


@main.command()
@pass_client
def log(client: Client):
    """Read the access log (admin only)."""
    resp = client.call("GET", "/v1/log")
    client.show(resp)


@main.command("admin-object")
@click.argument("object_id")
@click.option("--action", type=click.Choice(["delete", "restore"]), required=True)
@pass_client
def admin_object(client: Client, object_id: str, action: str):
    """Tombstone or restore a sample (admin only)."""
    resp = client.call("POST", f"/v1/admin/objects/{object_id}", json={"action": action})
    client.show(resp)


if __name__ == "__main__":
    main()
