"""Query instances, synthetic worlds, sweeps, aggregation and judge prompts."""

from .aggregate import aggregate, render
from .judge import JudgeVerdict, parse_and_aggregate_judge, parse_verdict, render_judge_prompts
from .queries import QueryInstance, load_query_file, save_query_file, validate_bundle
from .sweep import EnvCell, env_matrix, load_results, run_sweep

__all__ = [
    "EnvCell", "JudgeVerdict", "QueryInstance", "aggregate", "env_matrix", "load_query_file", "load_results",
    "parse_and_aggregate_judge", "parse_verdict", "render", "render_judge_prompts", "run_sweep",
    "save_query_file", "validate_bundle",
]
