"""Deterministic faulty-tool wrappers.

Corruption runs after the clean tool output is computed. Slot choices come
from a seeded permutation, so the slots corrupted at a lower rate are always
a prefix of those corrupted at a higher rate for the same call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .embeddings import row_scores
from .errors import ConfigError
from .tools import COMPLEMENT, SEARCH, SUBSTITUTE, ToolEnv, ToolResult, call_tool
from .utils import canonical_json, round_half_away, stable_seed


@dataclass
class FaultConfig:
    rate: float = 0.0
    pool_fraction: float = 0.25
    pool_min: int = 3
    pool_max: int = 50
    master_seed: int = 0
    per_tool: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, r in [("rate", self.rate), *self.per_tool.items()]:
            if not 0.0 <= float(r) <= 1.0:
                raise ConfigError(f"faulty-tool rate for {name} must lie in [0, 1], got {r}")
        if self.pool_min > self.pool_max:
            raise ConfigError("pool_min must not exceed pool_max")

    def rate_for(self, tool_name: str) -> float:
        return float(self.per_tool.get(tool_name, self.rate))

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "FaultConfig":
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def _call_seed(tool_name: str, call_inputs: Any, master_seed: int) -> int:
    return stable_seed(tool_name, canonical_json(call_inputs), master_seed)


def pool_size(group_size: int, cfg: FaultConfig) -> int:
    return min(max(round_half_away(cfg.pool_fraction * group_size), cfg.pool_min), cfg.pool_max)


def _criterion(tool_name: str, call_inputs: dict, env: ToolEnv) -> np.ndarray:
    args = call_inputs.get("args", call_inputs)
    if tool_name == SEARCH:
        return env.relevance_scores(args["query"])
    pos = env.matrix.position
    idx = [pos[i] for i in args["item_ids"]]
    return np.mean([row_scores(env.complement_vectors, env.anchor_vectors[p]) for p in idx], axis=0)


def corrupt_ranked_result(tool_name: str, call_inputs: dict, clean: ToolResult, cfg: FaultConfig, env: ToolEnv) -> ToolResult:
    """Swap ``round(K * rate)`` slots for bottom-ranked items of the same subcategory, keeping displayed scores."""
    if tool_name not in (SEARCH, COMPLEMENT):
        raise ValueError(f"{tool_name} is not a ranked tool")
    rate = cfg.rate_for(tool_name)
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"rate {rate} outside [0, 1]")
    k = len(clean.entries)
    n = round_half_away(k * rate)
    if not clean.ok or n == 0:
        return clean
    rng = np.random.default_rng(_call_seed(tool_name, call_inputs, cfg.master_seed))
    slots = rng.permutation(k)[:n]
    crit = _criterion(tool_name, call_inputs, env)
    ids = env.matrix.ids
    pos = env.matrix.position
    codes = env.subcat_codes
    in_result = {e.product_id for e in clean.entries}
    used: set[str] = set()
    entries = list(clean.entries)
    replacements, flags = {}, list(clean.flags)
    for slot in slots:
        orig = entries[slot].product_id
        group = np.flatnonzero(codes == codes[pos[orig]])
        id_rank = np.argsort(np.argsort(np.array([ids[g] for g in group])))
        pool = group[np.lexsort((id_rank, crit[group]))][: pool_size(len(group), cfg)]
        # prefer distractors not already shown; otherwise allow repeats, never the original
        choices = [g for g in pool if ids[g] not in in_result and ids[g] not in used]
        if not choices:
            choices = [g for g in pool if ids[g] != orig]
        if not choices:
            continue
        pick = ids[choices[rng.integers(len(choices))]]
        used.add(pick)
        replacements[int(slot)] = pick
        entries[slot] = replace(env.entry(pick, entries[slot].score), score=entries[slot].score)
    meta = dict(clean.meta)
    meta["corrupted_slots"] = sorted(int(s) for s in slots)
    meta["replacements"] = {str(s): p for s, p in sorted(replacements.items())}
    if len(replacements) < n:
        meta["unfilled_slots"] = n - len(replacements)
    return ToolResult(tool_name, entries=entries, flags=flags, meta=meta)


def corrupt_substitutes(clean: ToolResult, cfg: FaultConfig, call_inputs: Any = None) -> ToolResult:
    """Reinstate ``round(|removed| * rate)`` removed duplicates, appended to kept in input order."""
    rate = cfg.rate_for(SUBSTITUTE)
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"rate {rate} outside [0, 1]")
    n = round_half_away(len(clean.removed) * rate)
    if not clean.ok or n == 0:
        return clean
    rng = np.random.default_rng(_call_seed(SUBSTITUTE, call_inputs, cfg.master_seed))
    chosen = set(int(i) for i in rng.permutation(len(clean.removed))[:n])
    back = [r.product_id for i, r in enumerate(clean.removed) if i in chosen]
    still = [r for i, r in enumerate(clean.removed) if i not in chosen]
    meta = dict(clean.meta, reinstated=back)
    return ToolResult(SUBSTITUTE, kept=list(clean.kept) + back, removed=still, flags=list(clean.flags), meta=meta)


class FaultyTools:
    """Tool dispatcher applying the configured faults on top of the clean tools."""

    def __init__(self, env: ToolEnv, faults: FaultConfig | None = None):
        self.env = env
        self.faults = faults or FaultConfig()

    def _with_defaults(self, name: str, args: dict) -> dict:
        full = dict(args)
        if name == SUBSTITUTE:
            full.setdefault("similarity_threshold", 0.95)
        else:
            full.setdefault("top_k", self.env.default_top_k)
        return full

    def call(self, name: str, args: dict) -> ToolResult:
        clean = call_tool(self.env, name, args)
        if not clean.ok or self.faults.rate_for(name) == 0.0:
            return clean
        inputs = {"name": name, "args": self._with_defaults(name, args)}
        if name == SUBSTITUTE:
            return corrupt_substitutes(clean, self.faults, inputs)
        return corrupt_ranked_result(name, inputs, clean, self.faults, self.env)
