"""Policy backed by a remote chat-completion endpoint."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable

import httpx

from ..errors import ConfigError, PolicyError

RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass
class ChatConfig:
    endpoint: str
    model: str = "default"
    api_key: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_max: float = 30.0
    temperature: float = 0.0
    max_tokens: int | None = None

    @classmethod
    def from_env(cls, endpoint: str | None = None, **overrides) -> "ChatConfig":
        endpoint = endpoint or os.environ.get("RECOATLAS_CHAT_ENDPOINT")
        if not endpoint:
            raise ConfigError("no chat endpoint given and RECOATLAS_CHAT_ENDPOINT is unset")
        overrides.setdefault("model", os.environ.get("RECOATLAS_CHAT_MODEL", "default"))
        overrides.setdefault("api_key", os.environ.get("RECOATLAS_CHAT_API_KEY"))
        return cls(endpoint.rstrip("/"), **overrides)


@dataclass
class ChatPolicy:
    """Two-message decide calls and a pass-through finalize call, with retries and a request log."""

    config: ChatConfig
    client: httpx.Client | None = None
    sleep: Callable[[float], None] = time.sleep
    log: list = field(default_factory=list)

    def __post_init__(self):
        if self.client is None:
            self.client = httpx.Client(timeout=self.config.timeout)
        self.name = f"chat:{self.config.model}"
        self.meta = {"kind": "chat", "model": self.config.model, "endpoint": self.config.endpoint,
                     "temperature": self.config.temperature,
                     "deterministic": self.config.temperature == 0.0}

    def drain_log(self) -> list:
        out, self.log = self.log, []
        return out

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        if self.config.api_key:
            h["Authorization"] = f"Bearer {self.config.api_key}"
        return h

    def _delay(self, attempt: int, response: httpx.Response | None) -> float:
        if response is not None:
            after = response.headers.get("Retry-After")
            try:
                if after is not None:
                    return min(float(after), self.config.backoff_max)
            except ValueError:
                pass
        return min(self.config.backoff_base * 2 ** attempt, self.config.backoff_max)

    def complete(self, messages: list[dict]) -> str:
        body = {"model": self.config.model, "messages": messages, "temperature": self.config.temperature}
        if self.config.max_tokens is not None:
            body["max_tokens"] = self.config.max_tokens
        url = f"{self.config.endpoint.rstrip('/')}/chat/completions"
        for attempt in range(self.config.max_retries + 1):
            entry = {"attempt": attempt, "request": body}
            response = None
            try:
                response = self.client.post(url, json=body, headers=self._headers())
            except httpx.TransportError as exc:
                entry["error"] = f"{type(exc).__name__}: {exc}"
            else:
                entry["status"] = response.status_code
                entry["response"] = response.text
            self.log.append(entry)
            if response is not None and response.status_code == 200:
                try:
                    return response.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise PolicyError(f"malformed chat-completion response: {exc}") from exc
            if response is not None and response.status_code not in RETRYABLE_STATUS:
                raise PolicyError(f"chat endpoint returned HTTP {response.status_code}")
            if attempt < self.config.max_retries:
                self.sleep(self._delay(attempt, response))
        raise PolicyError(f"chat endpoint failed after {self.config.max_retries + 1} attempts")

    def decide(self, system_prompt: str, state_block: str) -> str:
        return self.complete([{"role": "system", "content": system_prompt},
                              {"role": "user", "content": state_block}])

    def finalize(self, messages: list[dict]) -> str:
        return self.complete(messages)

    def close(self) -> None:
        self.client.close()
