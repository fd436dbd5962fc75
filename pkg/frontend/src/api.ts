/** Thin fetch client for the hub's /v1 API. The editor is a pure API
 * client: no business logic lives here beyond error unwrapping. */

import type { ProcedureLibrary, ValidationReport } from "./types.js";

export class ApiError extends Error {
  constructor(public code: string, message: string,
              public status: number, public details: unknown = {}) {
    super(`${code}: ${message}`);
  }
}

export class NetworkError extends Error {}

interface ErrorBody {
  code?: string;
  message?: string;
  details?: unknown;
}

export class HubClient {
  constructor(public base: string, public token: string) {
    this.base = base.replace(/\/+$/, "");
  }

  private async request(method: string, path: string, body?: BodyInit,
                        contentType?: string): Promise<Response> {
    const headers: Record<string, string> = { Authorization: `Bearer ${this.token}` };
    if (contentType) headers["Content-Type"] = contentType;
    let resp: Response;
    try {
      resp = await fetch(`${this.base}${path}`, { method, headers, body });
    } catch (cause) {
      throw new NetworkError(`hub unreachable at ${this.base}: ${String(cause)}`);
    }
    if (!resp.ok) {
      let parsed: ErrorBody = {};
      try {
        parsed = (await resp.json()) as ErrorBody;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(parsed.code ?? `HTTP_${resp.status}`,
                         parsed.message ?? resp.statusText, resp.status,
                         parsed.details ?? {});
    }
    return resp;
  }

  private async json<T>(method: string, path: string, body?: BodyInit,
                        contentType?: string): Promise<T> {
    const resp = await this.request(method, path, body, contentType);
    return (await resp.json()) as T;
  }

  verifyAuth(): Promise<{ user_id: string; group_id: string; role: string }> {
    return this.json("POST", "/v1/auth/verify");
  }

  library(): Promise<ProcedureLibrary> {
    return this.json("GET", "/v1/procedures/library");
  }

  validateProcedure(graphml: string): Promise<ValidationReport> {
    return this.json("POST", "/v1/procedures/validate", graphml, "application/xml");
  }

  submitProcedure(graphml: string): Promise<{ sample_id: string; version: number }> {
    return this.json("POST", "/v1/procedures/submit", graphml, "application/xml");
  }

  query(text: string): Promise<{ rows: Array<Record<string, unknown>>; count: number }> {
    return this.json("POST", "/v1/query", JSON.stringify({ query: text }),
                     "application/json");
  }

  sample(id: string, view: "full" | "template" | "history" = "full",
         node?: string): Promise<{
    sample_id: string;
    row: Record<string, unknown> | null;
    graph: { nodes: Array<Record<string, unknown>>; edges: Array<Record<string, unknown>> };
  }> {
    const params = new URLSearchParams({ view });
    if (node) params.set("node", node);
    return this.json("GET", `/v1/samples/${encodeURIComponent(id)}?${params}`);
  }

  navigate(id: string): Promise<{ items: Array<{ id: string; kind: string; relation: string }> }> {
    return this.json("GET", `/v1/navigate/${id}`);
  }
}

/** Dev-mode login against the hub-embedded mock provider. */
export async function loginMock(base: string, userId: string): Promise<string> {
  const resp = await fetch(`${base.replace(/\/+$/, "")}/provider/issue`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ user_id: userId }),
  });
  if (!resp.ok) throw new ApiError("LOGIN_FAILED", "provider rejected the login", resp.status);
  const body = (await resp.json()) as { token: string };
  return body.token;
}
