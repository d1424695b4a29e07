"""HTTP clients for the remote LLM and embedding services.

Both services speak a single-endpoint JSON contract: the LLM takes
``{"prompt": ..., "text": ...}`` and returns ``{"text": ...}``; the
embedding service takes ``{"text": ...}`` and returns ``{"values": [...]}``.
Endpoints and bearer tokens come from environment variables so secrets
never land in config files.
"""

from __future__ import annotations

import os
import time

import requests

from .errors import RemoteServiceError

LLM_URL_ENV = "E2V_LLM_URL"
LLM_TOKEN_ENV = "E2V_LLM_TOKEN"
EMBED_URL_ENV = "E2V_EMBED_URL"
EMBED_TOKEN_ENV = "E2V_EMBED_TOKEN"


class _JsonClient:
    def __init__(
        self,
        url: str | None,
        token: str | None,
        url_env: str,
        token_env: str,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
    ):
        self.url = url if url is not None else os.environ.get(url_env)
        self.token = token if token is not None else os.environ.get(token_env)
        if not self.url:
            raise RemoteServiceError(f"no endpoint configured; set {url_env}")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def post(self, body: dict) -> dict:
        last: RemoteServiceError | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(
                    self.url, json=body, headers=self._headers(), timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = RemoteServiceError(f"request failed: {exc}", retriable=True)
            else:
                if resp.status_code >= 500:
                    last = RemoteServiceError(
                        f"server error {resp.status_code}", status=resp.status_code, retriable=True
                    )
                elif not resp.ok:
                    raise RemoteServiceError(
                        f"request rejected with status {resp.status_code}",
                        status=resp.status_code,
                        retriable=False,
                    )
                else:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise RemoteServiceError(f"non-JSON response: {exc}") from exc
            if attempt < self.retries:
                time.sleep(self.backoff * 2**attempt)
        assert last is not None
        raise last


class LlmClient(_JsonClient):
    """Text-in/text-out completion client."""

    def __init__(self, url: str | None = None, token: str | None = None, **kwargs):
        super().__init__(url, token, LLM_URL_ENV, LLM_TOKEN_ENV, **kwargs)

    def complete(self, prompt: str, text: str) -> str:
        payload = self.post({"prompt": prompt, "text": text})
        if "text" not in payload:
            raise RemoteServiceError("LLM response missing 'text' field")
        return str(payload["text"])


class EmbeddingClient(_JsonClient):
    """Text-to-vector client."""

    def __init__(self, url: str | None = None, token: str | None = None, **kwargs):
        super().__init__(url, token, EMBED_URL_ENV, EMBED_TOKEN_ENV, **kwargs)

    def embed(self, text: str) -> list[float]:
        payload = self.post({"text": text})
        if "values" not in payload:
            raise RemoteServiceError("embedding response missing 'values' field")
        return [float(v) for v in payload["values"]]
