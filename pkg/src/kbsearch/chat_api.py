"""Generic chat-completion clients: a live HTTP backend with bounded
exponential-backoff retries, plus record/replay backends for offline tests."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from typing import Optional, Protocol

import requests

from .agent import AgentTransportError


class ChatBackend(Protocol):
    def complete(self, messages: list[dict[str, str]], n: int,
                 temperature: float) -> list[str]:
        """Return 1..n completion texts for the message sequence."""


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "KBSEARCH_API_KEY"
    timeout_s: float = 120.0
    max_attempts: int = 3


class ClientRequestError(AgentTransportError):
    """A 4xx response; retrying the same payload will not help."""


def request_digest(messages: list[dict[str, str]], n: int, temperature: float) -> str:
    payload = json.dumps({"messages": messages, "n": n, "temperature": temperature},
                         sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatEndpointBackend:
    """POSTs to {base_url}/chat/completions. One call requests n completions;
    endpoints that reject the n parameter fall back to n sequential calls."""

    def __init__(self, config: EndpointConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _post(self, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                time.sleep(0.5 * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(url, json=payload, headers=self._headers(),
                                         timeout=self.config.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 200:
                return resp.json()
            if 400 <= resp.status_code < 500:
                raise ClientRequestError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            last_error = AgentTransportError(
                f"HTTP {resp.status_code}: {resp.text[:200]}")
        raise AgentTransportError(
            f"request failed after {self.config.max_attempts} attempts: {last_error}")

    def complete(self, messages: list[dict[str, str]], n: int,
                 temperature: float) -> list[str]:
        payload = {"model": self.config.model, "messages": messages,
                   "temperature": temperature}
        if n > 1:
            payload["n"] = n
        try:
            body = self._post(payload)
        except ClientRequestError:
            if n <= 1:
                raise
            # Some endpoints reject n>1; fall back to independent samples.
            out: list[str] = []
            for _ in range(n):
                body = self._post({"model": self.config.model, "messages": messages,
                                   "temperature": temperature})
                out.extend(_extract_contents(body))
            return out
        return _extract_contents(body)


def _extract_contents(body: dict) -> list[str]:
    try:
        return [choice["message"]["content"] for choice in body["choices"]]
    except (KeyError, TypeError) as exc:
        raise AgentTransportError(f"malformed completion response: {exc}") from None


class ReplayBackend:
    """Serves completions from a JSON-lines transcript of
    {"digest": ..., "completions": [...]} records."""

    def __init__(self, entries: dict[str, list[str]]):
        self.entries = entries

    @classmethod
    def load(cls, path: str) -> "ReplayBackend":
        entries: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                entries[rec["digest"]] = list(rec["completions"])
        return cls(entries)

    def complete(self, messages: list[dict[str, str]], n: int,
                 temperature: float) -> list[str]:
        digest = request_digest(messages, n, temperature)
        if digest not in self.entries:
            raise AgentTransportError(f"replay transcript has no entry for {digest[:12]}")
        return self.entries[digest]


class RecordingBackend:
    """Wraps a live backend and records (digest, completions) transcripts."""

    def __init__(self, inner: ChatBackend):
        self.inner = inner
        self.records: list[dict] = []

    def complete(self, messages: list[dict[str, str]], n: int,
                 temperature: float) -> list[str]:
        completions = self.inner.complete(messages, n=n, temperature=temperature)
        self.records.append({"digest": request_digest(messages, n, temperature),
                             "completions": completions})
        return completions

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
