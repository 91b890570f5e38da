"""Agent loop, prompts, action parsing and policies."""

from .actions import AgentAction, Final, Invalid, ToolCall, parse_action
from .chat import ChatConfig, ChatPolicy
from .policies import (
    FullTools, NoTools, Oracle, ScriptedPolicy, SearchComplement, SearchOnly, SearchSubstitute,
    make_scripted, scripted_policies,
)
from .prompts import render_finalization_messages, render_system_prompt
from .runtime import EpisodeState, EpisodeTrace, Policy, TraceRecord, finalize, render_state_block, run_episode

__all__ = [
    "AgentAction", "ChatConfig", "ChatPolicy", "EpisodeState", "EpisodeTrace", "Final", "FullTools", "Invalid",
    "NoTools", "Oracle", "Policy", "ScriptedPolicy", "SearchComplement", "SearchOnly", "SearchSubstitute",
    "ToolCall", "TraceRecord", "finalize", "make_scripted", "parse_action", "render_finalization_messages",
    "render_state_block", "render_system_prompt", "run_episode", "scripted_policies",
]
