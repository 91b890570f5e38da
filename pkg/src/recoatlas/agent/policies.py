"""Deterministic scripted policies used as baselines and test fixtures.

Each policy reads the serialized state block it is given, remembers the
results of its own earlier calls and emits action JSON, just as a chat
model would. They never look at hidden targets, except ``oracle``, which
exists only as a test upper bound and refuses to run outside test mode.
"""

from __future__ import annotations

import json
import re
from typing import Callable, Iterable

from ..errors import PolicyError
from ..tools import COMPLEMENT, SEARCH, SUBSTITUTE

BUNDLE_CUES = (
    "everything i need", "get started", "getting started", "starter", "kit", "bundle",
    "set up", "setup", "complete set", "all the gear", "goes with", "to go with",
)
_BUNDLE_RE = re.compile(r"\b(" + "|".join(re.escape(c) for c in BUNDLE_CUES) + r")\b")
_CANDIDATE_LINE = re.compile(r"^\[([^\]]+)\] ", re.MULTILINE)


def infer_mode(need: str) -> str:
    return "bundle" if _BUNDLE_RE.search(need.lower()) else "comparative_shopping"


def _tool(name: str, args: dict, mode: str, goal: str) -> str:
    return json.dumps({"thought": goal, "step_goal": goal, "task_mode": mode, "action": name, "action_input": args})


def _final(ids: Iterable[str], explanation: str, mode: str) -> str:
    results = [{"product_id": i, "reasoning": "selected from tool evidence"} for i in ids]
    return json.dumps({"thought": "finalize", "task_mode": mode,
                       "final": {"report_explanation": explanation, "results": results}})


def _unique(ids: Iterable[str]) -> list[str]:
    seen: dict[str, None] = {}
    for i in ids:
        seen.setdefault(i, None)
    return list(seen)


class ScriptedPolicy:
    """Base class: subclasses implement ``plan`` which returns the next raw action text."""

    name = "scripted"

    def __init__(self, k: int = 20):
        self.k = k
        self.meta = {"kind": "scripted", "deterministic": True, "k": k}
        self.reset()

    def reset(self, seed: int | None = None) -> None:
        self.step = 0
        self.pending: str | None = None
        self.results: dict[str, list[dict]] = {}

    def _record(self, state: dict) -> None:
        if self.pending is None:
            return
        last = state.get("last_tool_result") or {}
        self.results.setdefault(self.pending, []).append(last)
        self.pending = None

    def ids(self, tool: str, call: int = -1) -> list[str]:
        calls = self.results.get(tool) or []
        if not calls or not (-len(calls) <= call < len(calls)):
            return []
        res = calls[call]
        if "error" in res:
            return []
        if tool == SUBSTITUTE:
            return list(res.get("kept", []))
        return [r["product_id"] for r in res.get("results", [])]

    def call(self, name: str, args: dict, mode: str, goal: str) -> str:
        self.pending = name
        return _tool(name, args, mode, goal)

    def decide(self, system_prompt: str, state_block: str) -> str:
        state = json.loads(state_block)
        self._record(state)
        out = self.plan(state)
        self.step += 1
        return out

    def plan(self, state: dict) -> str:
        raise NotImplementedError

    def finalize(self, messages: list[dict]) -> str:
        """Forced finalization: keep the first ``k`` candidates in the listed order."""
        ids = _CANDIDATE_LINE.findall(messages[-1]["content"]) if messages else []
        return json.dumps({"report_explanation": "candidate order", "results": [
            {"product_id": i, "reasoning": "candidate set"} for i in ids[: self.k]]})


class NoTools(ScriptedPolicy):
    name = "no_tools"

    def plan(self, state: dict) -> str:
        return _final([], "no tools used", infer_mode(state["user_need"]))


class SearchOnly(ScriptedPolicy):
    name = "search_only"

    def plan(self, state: dict) -> str:
        mode = infer_mode(state["user_need"])
        if self.step == 0:
            return self.call(SEARCH, {"query": state["user_need"], "top_k": self.k}, mode, "retrieve candidates")
        return _final(self.ids(SEARCH)[: self.k], "top search results", mode)


class SearchSubstitute(ScriptedPolicy):
    """Over-retrieve, prune near-duplicates, keep the top ``k`` survivors."""

    name = "search_substitute"

    def __init__(self, k: int = 20, overfetch: int = 2, threshold: float = 0.95):
        self.overfetch, self.threshold = overfetch, threshold
        super().__init__(k)

    def plan(self, state: dict) -> str:
        mode = infer_mode(state["user_need"])
        if self.step == 0:
            return self.call(SEARCH, {"query": state["user_need"], "top_k": self.overfetch * self.k}, mode,
                             "retrieve a wide candidate pool")
        found = self.ids(SEARCH)
        if self.step == 1 and found:
            return self.call(SUBSTITUTE, {"item_ids": found, "similarity_threshold": self.threshold}, mode,
                             "remove near-duplicates")
        kept = self.ids(SUBSTITUTE) or found
        return _final(kept[: self.k], "deduplicated search results", mode)


class SearchComplement(ScriptedPolicy):
    """Search, expand the top hits with complements, then interleave."""

    name = "search_complement"

    def __init__(self, k: int = 20, anchors: int = 2, lead: int = 5):
        self.anchors, self.lead = anchors, lead
        super().__init__(k)

    def plan(self, state: dict) -> str:
        mode = infer_mode(state["user_need"])
        if self.step == 0:
            return self.call(SEARCH, {"query": state["user_need"], "top_k": self.k}, mode, "retrieve anchors")
        found = self.ids(SEARCH)
        if self.step == 1 and found:
            return self.call(COMPLEMENT, {"item_ids": found[: self.anchors], "top_k": self.k}, mode,
                             "expand with complementary products")
        merged = _unique(found[: self.lead] + self.ids(COMPLEMENT) + found[self.lead:])
        return _final(merged[: self.k], "search anchors plus complements", mode)


class FullTools(ScriptedPolicy):
    """Mode-dependent flow: bundles expand complements then prune; comparisons over-retrieve then prune."""

    name = "full_tools"

    def __init__(self, k: int = 20, anchors: int = 2, lead: int = 5, overfetch: int = 2, threshold: float = 0.95):
        self.anchors, self.lead, self.overfetch, self.threshold = anchors, lead, overfetch, threshold
        super().__init__(k)

    def plan(self, state: dict) -> str:
        need = state["user_need"]
        mode = infer_mode(need)
        if mode == "bundle":
            return self._bundle(need, mode)
        return self._comparative(need, mode)

    def _bundle(self, need: str, mode: str) -> str:
        if self.step == 0:
            return self.call(SEARCH, {"query": need, "top_k": self.k}, mode, "retrieve anchors")
        found = self.ids(SEARCH)
        if self.step == 1 and found:
            return self.call(COMPLEMENT, {"item_ids": found[: self.anchors], "top_k": self.k}, mode,
                             "expand with complementary products")
        merged = _unique(found[: self.lead] + self.ids(COMPLEMENT) + found[self.lead:])
        if self.step == 2 and merged:
            return self.call(SUBSTITUTE, {"item_ids": merged, "similarity_threshold": self.threshold}, mode,
                             "prune near-duplicates")
        kept = self.ids(SUBSTITUTE) or merged
        return _final(kept[: self.k], "anchors, complements, duplicates pruned", mode)

    def _comparative(self, need: str, mode: str) -> str:
        if self.step == 0:
            return self.call(SEARCH, {"query": need, "top_k": self.overfetch * self.k}, mode,
                             "retrieve a wide candidate pool")
        found = self.ids(SEARCH)
        if self.step == 1 and found:
            return self.call(SUBSTITUTE, {"item_ids": found, "similarity_threshold": self.threshold}, mode,
                             "remove near-duplicates")
        kept = self.ids(SUBSTITUTE) or found
        return _final(kept[: self.k], "distinct alternatives", mode)


class Oracle(ScriptedPolicy):
    """Test-only upper bound: searches each target's own text, then reports targets first."""

    name = "oracle"

    def __init__(self, targets: Iterable[str], product_texts: dict[str, str], k: int = 20, test_mode: bool = False):
        if not test_mode:
            raise PolicyError("the oracle policy reads hidden targets and is only available in test mode")
        self.targets = list(targets)
        self.texts = product_texts
        super().__init__(k)
        self.meta["oracle"] = True

    def plan(self, state: dict) -> str:
        budget = state["planning"]["remaining_tool_calls"]
        if self.step < len(self.targets) and budget > 1:
            text = self.texts[self.targets[self.step]]
            return self.call(SEARCH, {"query": text, "top_k": self.k}, "bundle", "locate target")
        seen = {c["product_id"] for c in state["current_candidates"]}
        first = [t for t in self.targets if t in seen]
        rest = [c["product_id"] for c in state["current_candidates"]]
        return _final(_unique(first + rest)[: self.k], "oracle", "bundle")

    def _record(self, state: dict) -> None:
        self.pending = None


SCRIPTED: dict[str, Callable[..., ScriptedPolicy]] = {
    "no_tools": NoTools,
    "search_only": SearchOnly,
    "search_substitute": SearchSubstitute,
    "search_complement": SearchComplement,
    "full_tools": FullTools,
}


def scripted_policies(k: int = 20) -> dict[str, ScriptedPolicy]:
    """Fresh instances of every benchmark-safe scripted policy (the oracle is built separately)."""
    return {name: factory(k=k) for name, factory in SCRIPTED.items()}


def make_scripted(name: str, k: int = 20) -> ScriptedPolicy:
    if name == "oracle":
        raise PolicyError("the oracle policy needs hidden targets; construct Oracle(..., test_mode=True) directly")
    try:
        return SCRIPTED[name](k=k)
    except KeyError:
        raise PolicyError(f"unknown scripted policy {name!r}; choose from {sorted(SCRIPTED)}") from None
