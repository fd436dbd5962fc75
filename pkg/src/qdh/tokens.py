"""Token authentication: pluggable verifier plus an in-repo mock provider.

The hub never mints identities itself; it validates a bearer token by a
secondary call to the configured provider, exactly once per request
unless the TTL cache still holds the answer (TTL 0 disables caching and
restores the strict one-call-per-request sequence).

The mock provider signs ``user_id|expiry`` payloads with HMAC-SHA256 so
tampered tokens fail verification without any provider state.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import time
from typing import Callable, Optional, Protocol

import httpx

from qdh.errors import QdhError

DEFAULT_TOKEN_TTL = 3600.0
DEFAULT_CACHE_TTL = 300.0


class TokenVerifier(Protocol):
    def verify(self, token: str) -> str:
        """Return the verified user_id, or raise INVALID_TOKEN."""
        ...


class MockTokenProvider:
    def __init__(self, secret: str = "qdh-dev-secret"):
        self._secret = secret.encode("utf-8")

    def _sign(self, payload: str) -> str:
        return hmac.new(self._secret, payload.encode("utf-8"), hashlib.sha256).hexdigest()

    def issue(self, user_id: str, ttl_seconds: float = DEFAULT_TOKEN_TTL) -> str:
        if not user_id or "|" in user_id:
            raise QdhError("INVALID_TOKEN", "user id must be non-empty and '|'-free")
        payload = f"{user_id}|{time.time() + ttl_seconds:.0f}"
        raw = f"{payload}|{self._sign(payload)}"
        return base64.urlsafe_b64encode(raw.encode("utf-8")).decode("ascii")

    def verify(self, token: str) -> str:
        try:
            raw = base64.urlsafe_b64decode(token.encode("ascii")).decode("utf-8")
            user_id, expiry, signature = raw.rsplit("|", 2)
            payload = f"{user_id}|{expiry}"
        except Exception:
            raise QdhError("INVALID_TOKEN", "token is not in the provider's format") from None
        if not hmac.compare_digest(signature, self._sign(payload)):
            raise QdhError("INVALID_TOKEN", "token signature does not verify")
        if time.time() > float(expiry):
            raise QdhError("INVALID_TOKEN", "token expired")
        return user_id


class HttpTokenVerifier:
    """Verifies by a secondary HTTP call to the provider's /verify endpoint."""

    def __init__(self, provider_url: str, timeout: float = 5.0):
        self.provider_url = provider_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout)

    def verify(self, token: str) -> str:
        try:
            resp = self._client.post(f"{self.provider_url}/verify", json={"token": token})
        except httpx.HTTPError as exc:
            raise QdhError("PROVIDER_UNREACHABLE", f"token provider call failed: {exc}")
        if resp.status_code != 200:
            raise QdhError("INVALID_TOKEN", "token rejected by provider")
        return resp.json()["user_id"]


class CachingVerifier:
    """TTL cache in front of any verifier; expired entries re-verify."""

    def __init__(self, inner: TokenVerifier, ttl_seconds: float = DEFAULT_CACHE_TTL,
                 clock: Callable[[], float] = time.monotonic):
        self._inner = inner
        self._ttl = ttl_seconds
        self._clock = clock
        self._cache: dict[str, tuple[str, float]] = {}

    def verify(self, token: str) -> str:
        if self._ttl > 0:
            hit = self._cache.get(token)
            if hit is not None and self._clock() - hit[1] < self._ttl:
                return hit[0]
        user_id = self._inner.verify(token)
        if self._ttl > 0:
            self._cache[token] = (user_id, self._clock())
        return user_id


def provider_app(provider: Optional[MockTokenProvider] = None):
    """FastAPI app exposing the mock provider over a real socket."""
    from fastapi import FastAPI
    from fastapi.responses import JSONResponse

    provider = provider or MockTokenProvider()
    app = FastAPI(title="qdh mock token provider")

    @app.post("/issue")
    def issue(body: dict):
        user_id = body.get("user_id", "")
        try:
            return {"token": provider.issue(user_id, float(body.get("ttl", DEFAULT_TOKEN_TTL)))}
        except QdhError as exc:
            return JSONResponse(status_code=400, content=exc.to_dict())

    @app.post("/verify")
    def verify(body: dict):
        try:
            return {"user_id": provider.verify(body.get("token", ""))}
        except QdhError as exc:
            return JSONResponse(status_code=401, content=exc.to_dict())

    return app
