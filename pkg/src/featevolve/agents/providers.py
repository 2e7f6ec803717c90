"""Completion backends: scripted replay for tests, HTTP chat-completion for real runs."""
from __future__ import annotations

import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..errors import ConfigError, ScriptExhaustedError, TransportError

logger = logging.getLogger(__name__)

ROLE_TEMPERATURES = {
    "feature_proposer": 0.7,
    "idea_synthesizer": 0.7,
    "idea_creator": 0.7,
    "short_term_memory": 0.7,
    "evaluator": 0.7,
    "code_agent": 0.2,
    "idea_critic": 0.2,
    "code_critic": 0.2,
}


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad chat role {self.role!r}")
        if not self.content:
            raise ValueError("chat message content must be nonempty")


@dataclass
class ProviderConfig:
    kind: str = "scripted"
    scripted_dir: Optional[str] = None
    endpoint_url: Optional[str] = None
    model_name: Optional[str] = None
    api_key_env_var: Optional[str] = None
    temperature: Optional[float] = None  # None: per-role defaults
    max_retries: int = 3
    timeout_seconds: int = 60
    backoff_seconds: float = 0.5

    def __post_init__(self):
        if self.kind == "scripted":
            if not self.scripted_dir:
                raise ConfigError("scripted provider needs scripted_dir")
        elif self.kind == "http":
            if not self.endpoint_url or not self.model_name:
                raise ConfigError("http provider needs endpoint_url and model_name")
            if self.temperature is not None and self.temperature < 0:
                raise ConfigError("temperature must be >= 0")
            if self.max_retries < 0 or self.timeout_seconds < 1:
                raise ConfigError("max_retries must be >= 0 and timeout_seconds >= 1")
        else:
            raise ConfigError(f"unknown provider kind {self.kind!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ProviderConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown provider fields {sorted(extra)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class ScriptedProvider:
    """Replays ``<dir>/<role_tag>/<NNN>.txt`` by call ordinal.

    When numbered files run out, ``<dir>/<role_tag>/default.txt`` (if present)
    answers every further call.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ConfigError(f"scripted transcript directory not found: {self.directory}")

    def resolve_role(self, role: str, scope: Optional[str] = None) -> str:
        if scope and (self.directory / role / scope).is_dir():
            return f"{role}/{scope}"
        return role

    def complete(self, messages, role_tag: str, ordinal: int, temperature: float) -> str:
        folder = self.directory / role_tag
        path = folder / f"{ordinal:03d}.txt"
        if not path.is_file():
            default = folder / "default.txt"
            if not default.is_file():
                raise ScriptExhaustedError(f"no transcript {path} for role {role_tag!r}")
            path = default
        return path.read_text(encoding="utf-8")


class HttpProvider:
    """POSTs chat-completion requests and returns ``choices[0].message.content``."""

    def __init__(self, config: ProviderConfig, opener=None):
        self.config = config
        self.api_key = None
        if config.api_key_env_var:
            self.api_key = os.environ.get(config.api_key_env_var)
            if not self.api_key:
                raise ConfigError(f"environment variable {config.api_key_env_var} is not set")
        self._open = opener or urllib.request.urlopen

    def resolve_role(self, role: str, scope: Optional[str] = None) -> str:
        return role

    def _post(self, body: bytes) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.config.endpoint_url, data=body, headers=headers, method="POST")
        with self._open(req, timeout=self.config.timeout_seconds) as resp:
            return resp.read().decode("utf-8")

    def complete(self, messages, role_tag: str, ordinal: int, temperature: float) -> str:
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": temperature,
        }
        body = json.dumps(payload).encode("utf-8")
        last_error = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_seconds * 2 ** (attempt - 1))
            try:
                raw = self._post(body)
            except urllib.error.HTTPError as exc:
                last_error = f"HTTP {exc.code}"
                if exc.code < 500 and exc.code != 429:
                    break
                logger.warning("%s: %s (attempt %d)", role_tag, last_error, attempt + 1)
                continue
            except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
                last_error = str(exc)
                logger.warning("%s: transport failure %s (attempt %d)", role_tag, exc, attempt + 1)
                continue
            try:
                return json.loads(raw)["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise TransportError(f"malformed chat-completion response: {raw[:200]!r}") from None
        raise TransportError(f"request for {role_tag} failed: {last_error}")


def make_provider(config: ProviderConfig):
    if config.kind == "scripted":
        return ScriptedProvider(config.scripted_dir)
    return HttpProvider(config)


def temperature_for(config: ProviderConfig, role: str) -> float:
    if config.temperature is not None:
        return config.temperature
    return ROLE_TEMPERATURES.get(role.split("/")[0], 0.7)
