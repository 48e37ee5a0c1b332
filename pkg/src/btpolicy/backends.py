"""Completion backends behind one contract.

Three implementations: Scripted replays fixture responses keyed by request
id and role; Oracle synthesizes grammar-valid answers from scenario ground
truth; Remote speaks the chat-completion wire format over HTTPS with
temperature 0 and bounded retries on transport errors only.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import requests
import yaml

from .errors import BackendUnavailable, MissingFixture, RateLimited, SchemaError
from .llm import Role

ENDPOINT_ENV = "BTPOLICY_LLM_ENDPOINT"
API_KEY_ENV = "BTPOLICY_LLM_API_KEY"


@dataclass
class RequestMeta:
    """Routing information that rides along with a completion request."""

    role: Role
    key: str                       # scenario or instruction id
    event: Any = None              # FailureEvent for failure resolution
    param: Any = None              # ParamRequest for parameter resolution


class Backend(Protocol):
    def complete(self, prompt: str, meta: RequestMeta) -> str: ...


class ScriptedBackend:
    """Deterministic fixture playback.

    Fixtures map ``<key>/<role>`` to a list of responses consumed in call
    order; the last response repeats once the list is exhausted."""

    def __init__(self, fixtures: Mapping[str, Sequence[str]]):
        self.fixtures = {k: list(v) if isinstance(v, (list, tuple)) else [v]
                         for k, v in fixtures.items()}
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise SchemaError(f"invalid YAML: {e}", file=str(path),
                              line=mark.line + 1 if mark else None) from e
        if not isinstance(data, dict):
            raise SchemaError("fixture file must map keys to responses", file=str(path))
        return cls(data)

    def complete(self, prompt: str, meta: RequestMeta) -> str:
        key = f"{meta.key}/{meta.role.value}"
        if key not in self.fixtures:
            raise MissingFixture(key)
        with self._lock:
            index = self._counts.get(key, 0)
            self._counts[key] = index + 1
        responses = self.fixtures[key]
        return responses[min(index, len(responses) - 1)]


class OracleBackend:
    """Answers synthesized from scenario ground truth; pure and deterministic."""

    def __init__(self, provider: Callable[[RequestMeta], str]):
        self.provider = provider

    def complete(self, prompt: str, meta: RequestMeta) -> str:
        return self.provider(meta)


@dataclass
class RemoteBackend:
    """Chat-completion client. Endpoint and key come from arguments or the
    environment; without them every call fails before touching the network."""

    model: str = "gpt-4"
    endpoint: str | None = None
    api_key: str | None = None
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4
    _gate: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        self.endpoint = self.endpoint or os.environ.get(ENDPOINT_ENV) or ""
        self.api_key = self.api_key or os.environ.get(API_KEY_ENV) or ""
        self._gate = threading.Semaphore(self.max_in_flight)

    def complete(self, prompt: str, meta: RequestMeta) -> str:
        if not self.endpoint or not self.api_key:
            raise BackendUnavailable(
                f"remote backend needs {ENDPOINT_ENV} and {API_KEY_ENV}")
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        url = self.endpoint.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._gate:
                    response = self._post(url, payload, headers)
            except (requests.ConnectionError, requests.Timeout) as e:
                last_error = e  # transport error: retry with backoff
                continue
            if response.status_code == 429:
                retry_after = _parse_retry_after(response)
                last_error = RateLimited(retry_after)
                continue
            if response.status_code != 200:
                raise BackendUnavailable(
                    f"completion endpoint returned {response.status_code}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as e:
                raise BackendUnavailable(f"malformed completion envelope: {e}") from e
        if isinstance(last_error, RateLimited):
            raise last_error
        raise BackendUnavailable(f"transport failed after retries: {last_error}")

    def _post(self, url: str, payload: dict, headers: dict):
        return requests.post(url, json=payload, headers=headers, timeout=self.timeout)


def _parse_retry_after(response) -> float | None:
    value = response.headers.get("Retry-After")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None
