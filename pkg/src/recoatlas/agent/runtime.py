"""Tool-budgeted episode loop."""

from __future__ import annotations

import hashlib
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Protocol, runtime_checkable

from ..catalog import Catalog
from ..scoring import Report
from ..tools import ToolResult
from .actions import Final, Invalid, ToolCall, loads_object, parse_action
from .prompts import render_finalization_messages, render_state_json, render_system_prompt

TASK_MODES = ("retrieval_clear", "comparative_shopping", "bundle")
UNDECIDED = "undecided"
TRACE_WINDOW = 3


@runtime_checkable
class Policy(Protocol):
    name: str

    def decide(self, system_prompt: str, state_block: str) -> str: ...

    def finalize(self, messages: list[dict]) -> str: ...


class Toolbox(Protocol):
    env: Any

    def call(self, name: str, args: dict) -> ToolResult: ...


@dataclass
class CandidateEntry:
    product_id: str
    title: str
    score: float | None
    source: str
    round: int

    def payload(self) -> dict:
        d = {"product_id": self.product_id, "title": self.title, "source": self.source}
        if self.score is not None:
            d["score"] = round(self.score, 4)
        return d


@dataclass
class EpisodeState:
    user_need: str
    budget: int
    target_count: int
    remaining_tool_calls: int
    task_mode: str = UNDECIDED
    candidates: "OrderedDict[str, CandidateEntry]" = field(default_factory=OrderedDict)
    last_tool_result: dict | None = None
    history: list[dict] = field(default_factory=list)

    @classmethod
    def start(cls, user_need: str, budget: int = 10, target_count: int = 20) -> "EpisodeState":
        if budget < 0 or target_count < 1:
            raise ValueError("budget must be >= 0 and target_count >= 1")
        return cls(user_need, budget, target_count, budget)

    def observe(self, result: ToolResult, rnd: int, catalog: Catalog) -> None:
        """Add every id the tool returned; first provenance wins."""
        scores = {e.product_id: e.score for e in result.entries}
        for pid in result.returned_ids():
            if pid not in self.candidates:
                title = catalog[pid].title if pid in catalog else ""
                self.candidates[pid] = CandidateEntry(pid, title, scores.get(pid), result.tool_name, rnd)

    def to_block(self) -> dict:
        return {
            "user_need": self.user_need,
            "planning": {
                "infer_task_mode": self.task_mode,
                "current_result_count": len(self.candidates),
                "remaining_tool_calls": self.remaining_tool_calls,
            },
            "target_count": self.target_count,
            "current_candidates": [c.payload() for c in self.candidates.values()],
            "last_tool_result": self.last_tool_result if self.last_tool_result is not None else {},
            "recent_trace": self.history[-TRACE_WINDOW:],
        }


def render_state_block(state: EpisodeState) -> str:
    return render_state_json(state.to_block())


@dataclass
class TraceRecord:
    round: int
    kind: str  # tool | invalid | final | forced_final | error
    state_digest: str | None
    raw_output: str | None
    action: dict | None = None
    result: dict | None = None
    hidden: dict | None = None
    transport: list | None = None

    def to_dict(self) -> dict:
        d = {"round": self.round, "kind": self.kind, "state_digest": self.state_digest, "raw_output": self.raw_output}
        for key in ("action", "result", "hidden", "transport"):
            val = getattr(self, key)
            if val:
                d[key] = val
        return d


@dataclass
class EpisodeTrace:
    query: str
    policy: str
    budget: int
    k: int
    records: list[TraceRecord] = field(default_factory=list)
    report: Report = field(default_factory=Report)
    observed_ids: list[str] = field(default_factory=list)
    failed: bool = False
    failure: str | None = None
    wall_time: float = 0.0
    policy_meta: dict = field(default_factory=dict)

    @property
    def tool_rounds(self) -> int:
        return sum(1 for r in self.records if r.kind in ("tool", "invalid"))

    @property
    def tool_calls(self) -> int:
        return sum(1 for r in self.records if r.kind == "tool")

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "query": self.query,
            "policy": self.policy,
            "budget": self.budget,
            "k": self.k,
            "records": [r.to_dict() for r in self.records],
            "report": self.report.to_obj(),
            "observed_ids": list(self.observed_ids),
            "failed": self.failed,
            "failure": self.failure,
            "policy_meta": self.policy_meta,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _drain(policy) -> list | None:
    drain = getattr(policy, "drain_log", None)
    return drain() if callable(drain) else None


def parse_report(raw: Any) -> Report:
    """Parse finalization output; accepts the bare report or a ``{"final": ...}`` wrapper."""
    try:
        obj = loads_object(raw) if isinstance(raw, str) else raw
        if isinstance(obj, dict) and "results" not in obj and "final" in obj:
            obj = obj["final"]
        return Report.from_obj(obj)
    except (ValueError, TypeError):
        return Report()


def finalize(state: EpisodeState, policy: Policy, K: int, catalog: Catalog) -> tuple[Report, str, list[dict]]:
    candidates = [(pid, catalog[pid].product_text if pid in catalog else "") for pid in state.candidates]
    messages = render_finalization_messages(state.user_need, candidates, K)
    raw = policy.finalize(messages)
    return parse_report(raw), raw, messages


def _summary(rnd: int, action, result: ToolResult | None) -> dict:
    if isinstance(action, Invalid):
        return {"round": rnd, "action": "invalid", "outcome": action.reason}
    outcome = f"error: {result.error}" if result.error else f"{len(result.returned_ids())} products"
    return {"round": rnd, "action": action.name, "action_input": action.arguments, "outcome": outcome}


def run_episode(query: str, tools: Toolbox, policy: Policy, budget: int = 10, K: int = 20,
                seed: int = 0) -> tuple[EpisodeTrace, Report]:
    """Run one episode; never raises on policy misbehavior and always returns a report."""
    start = time.perf_counter()
    catalog = tools.env.catalog
    state = EpisodeState.start(query, budget, K)
    system = render_system_prompt(K, budget)
    trace = EpisodeTrace(query, getattr(policy, "name", type(policy).__name__), budget, K,
                         policy_meta=dict(getattr(policy, "meta", {}) or {}))
    report: Report | None = None
    rnd = 0
    try:
        reset = getattr(policy, "reset", None)
        if callable(reset):
            reset(seed)
        while state.remaining_tool_calls > 0:
            rnd = budget - state.remaining_tool_calls + 1
            block = render_state_block(state)
            raw = policy.decide(system, block)
            action = parse_action(raw)
            rec = TraceRecord(rnd, "", _digest(block), raw if isinstance(raw, str) else repr(raw),
                              action.to_obj(), transport=_drain(policy))
            trace.records.append(rec)
            if isinstance(action, Final):
                rec.kind = "final"
                report = action.report
                break
            state.remaining_tool_calls -= 1
            mode = getattr(action, "notes", {}).get("task_mode")
            if mode in TASK_MODES:
                state.task_mode = mode
            if isinstance(action, ToolCall):
                result = tools.call(action.name, action.arguments)
                state.observe(result, rnd, catalog)
                state.last_tool_result = result.payload()
                rec.kind, rec.result, rec.hidden = "tool", result.payload(), result.meta or None
                state.history.append(_summary(rnd, action, result))
            else:
                rec.kind = "invalid"
                state.last_tool_result = {"error": f"invalid action ({action.reason}); this round was consumed"}
                rec.result = state.last_tool_result
                state.history.append(_summary(rnd, action, None))
        if report is None:
            report, raw, messages = finalize(state, policy, K, catalog)
            trace.records.append(TraceRecord(rnd + 1, "forced_final", _digest(messages[1]["content"]), raw,
                                             {"type": "final", "final": report.to_obj()}, transport=_drain(policy)))
    except Exception as exc:  # transport failure or misbehaving policy: scored as an empty report
        trace.failed = True
        trace.failure = f"{type(exc).__name__}: {exc}"
        trace.records.append(TraceRecord(rnd, "error", None, None, result={"error": trace.failure},
                                         transport=_drain(policy)))
        report = Report()
    trace.report = report
    trace.observed_ids = list(state.candidates)
    trace.wall_time = time.perf_counter() - start
    return trace, report
