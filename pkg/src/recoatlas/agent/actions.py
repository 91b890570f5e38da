"""Parsing of raw policy output into tool calls, final reports or invalid records."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Union

from ..scoring import Report
from ..tools import TOOL_NAMES

_FENCE = re.compile(r"\A```[A-Za-z0-9_-]*[ \t]*\n(.*?)\n?```\Z", re.DOTALL)


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict
    notes: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"type": "tool_call", "action": self.name, "action_input": self.arguments, **self.notes}


@dataclass(frozen=True)
class Final:
    report: Report
    notes: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"type": "final", "final": self.report.to_obj(), **self.notes}


@dataclass(frozen=True)
class Invalid:
    reason: str
    raw: str

    def to_obj(self) -> dict:
        return {"type": "invalid", "reason": self.reason}


AgentAction = Union[ToolCall, Final, Invalid]

# free-text fields carried through to the trace and the planning state
_NOTE_KEYS = ("thought", "step_goal", "task_mode")


def strip_fence(text: str) -> str:
    text = text.strip()
    m = _FENCE.match(text)
    return m.group(1).strip() if m else text


def _reject_constant(name: str):
    raise ValueError(f"non-standard JSON constant {name}")


def loads_object(raw: str) -> Any:
    """Strict JSON decode of the whole text (one optional code fence); raises ``ValueError``."""
    return json.loads(strip_fence(raw), parse_constant=_reject_constant)


def parse_action(raw: Any) -> AgentAction:
    if not isinstance(raw, str):
        return Invalid("unparsable", repr(raw))
    try:
        obj = loads_object(raw)
    except ValueError:
        return Invalid("unparsable", raw)
    if not isinstance(obj, dict):
        return Invalid("not_object", raw)
    notes = {k: obj[k] for k in _NOTE_KEYS if isinstance(obj.get(k), str)}
    has_action, has_final = "action" in obj, "final" in obj
    if has_action and has_final:
        return Invalid("ambiguous", raw)
    if has_final:
        try:
            return Final(Report.from_obj(obj["final"]), notes)
        except ValueError:
            return Invalid("malformed_final", raw)
    if not has_action:
        return Invalid("missing_action", raw)
    name = obj["action"]
    if not isinstance(name, str) or name not in TOOL_NAMES:
        return Invalid("unknown_tool", raw)
    args = obj.get("action_input")
    if not isinstance(args, dict):
        return Invalid("missing_action_input", raw)
    return ToolCall(name, args, notes)
