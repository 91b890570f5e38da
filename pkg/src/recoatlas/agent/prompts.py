"""Prompt templates for the agent loop and the finalization step.

Templates live as package data so they can be diffed against golden files.
Placeholders are substituted by plain string replacement because the
templates themselves contain JSON braces.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Mapping


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    text = resources.files("recoatlas.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return text.rstrip("\n")


def fill(template: str, values: Mapping[str, Any]) -> str:
    """Substitute ``{name}`` placeholders in one pass; substituted text is never rescanned."""
    if not values:
        return template
    pattern = re.compile("\\{(" + "|".join(re.escape(k) for k in values) + ")\\}")
    return pattern.sub(lambda m: str(values[m.group(1)]), template)


def task_mode_definitions() -> str:
    return load_template("task_modes")


def render_system_prompt(top_k: int = 20, max_tool_rounds: int = 10) -> str:
    return fill(load_template("system_prompt"), {
        "top_k": top_k,
        "max_tool_rounds": max_tool_rounds,
        "task_mode_definitions": task_mode_definitions(),
    })


def render_state_json(state: Mapping[str, Any]) -> str:
    return json.dumps(state, indent=2, ensure_ascii=False)


def candidate_lines(candidates: Iterable[tuple[str, str]]) -> str:
    return "\n".join(f"[{item_id}] {text}" for item_id, text in candidates)


def render_finalization_messages(need: str, candidates: Iterable[tuple[str, str]], top_k: int = 20) -> list[dict]:
    """System and user messages for the finalization call; ``candidates`` are (item_id, product_text) pairs."""
    user = fill(load_template("finalization_user"), {
        "need": need,
        "task_mode_definitions": task_mode_definitions(),
        "candidate_lines": candidate_lines(candidates),
        "top_k": top_k,
    })
    return [
        {"role": "system", "content": load_template("finalization_system")},
        {"role": "user", "content": user},
    ]
