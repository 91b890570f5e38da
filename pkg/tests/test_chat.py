import json

import httpx
import pytest

from recoatlas.agent.chat import ChatConfig, ChatPolicy
from recoatlas.agent.runtime import run_episode
from recoatlas.corruption import FaultyTools
from recoatlas.errors import ConfigError, PolicyError

from helpers import agent_env


def _reply(text, status=200, headers=None):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": text}}]},
                          headers=headers)


def _policy(handler, **cfg):
    sleeps = []
    config = ChatConfig("http://mock.local/v1", model="m", **cfg)
    policy = ChatPolicy(config, client=httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    return policy, sleeps


def test_echo():
    def handler(request):
        body = json.loads(request.content)
        assert request.url.path == "/v1/chat/completions"
        assert body["model"] == "m" and body["temperature"] == 0.0
        return _reply(body["messages"][-1]["content"])

    policy, sleeps = _policy(handler)
    assert policy.decide("system", "hello") == "hello"
    log = policy.drain_log()
    assert len(log) == 1 and log[0]["status"] == 200 and sleeps == []
    assert policy.meta["deterministic"] is True


def test_retry_after_429():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) == 1:
            return httpx.Response(429, headers={"Retry-After": "2"})
        return _reply("ok")

    policy, sleeps = _policy(handler)
    assert policy.finalize([{"role": "user", "content": "x"}]) == "ok"
    assert len(calls) == 2 and sleeps == [2.0]
    assert [e["status"] for e in policy.drain_log()] == [429, 200]


def test_exponential_backoff_then_give_up():
    policy, sleeps = _policy(lambda r: httpx.Response(503), max_retries=3, backoff_base=0.5)
    with pytest.raises(PolicyError, match="4 attempts"):
        policy.decide("s", "u")
    assert sleeps == [0.5, 1.0, 2.0]


def test_auth_error_not_retried():
    policy, sleeps = _policy(lambda r: httpx.Response(401), api_key="secret")
    with pytest.raises(PolicyError, match="401"):
        policy.decide("s", "u")
    assert sleeps == []


def test_api_key_header():
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("Authorization")
        return _reply("{}")

    _policy(handler, api_key="k123")[0].decide("s", "u")
    assert seen["auth"] == "Bearer k123"


def test_malformed_body():
    policy, _ = _policy(lambda r: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(PolicyError, match="malformed"):
        policy.decide("s", "u")


def test_timeout_fails_episode():
    def handler(request):
        raise httpx.ReadTimeout("timed out", request=request)

    policy, sleeps = _policy(handler, max_retries=1)
    trace, report = run_episode("a need", FaultyTools(agent_env(1)), policy)
    assert trace.failed and "PolicyError" in trace.failure
    assert report.results == [] and len(sleeps) == 1
    assert [e["error"].split(":")[0] for e in trace.records[-1].transport] == ["ReadTimeout", "ReadTimeout"]


def test_transport_log_lands_in_trace():
    final = json.dumps({"final": {"report_explanation": "", "results": []}})
    policy, _ = _policy(lambda r: _reply(final))
    trace, _ = run_episode("a need", FaultyTools(agent_env(1)), policy)
    assert trace.records[0].kind == "final" and trace.records[0].transport[0]["response"]
    assert not trace.failed


def test_config_from_env(monkeypatch):
    monkeypatch.delenv("RECOATLAS_CHAT_ENDPOINT", raising=False)
    with pytest.raises(ConfigError):
        ChatConfig.from_env()
    monkeypatch.setenv("RECOATLAS_CHAT_ENDPOINT", "http://x/v1/")
    monkeypatch.setenv("RECOATLAS_CHAT_MODEL", "small")
    cfg = ChatConfig.from_env()
    assert (cfg.endpoint, cfg.model) == ("http://x/v1", "small")
