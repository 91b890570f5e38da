"""Sweep orchestration: instances x policies x tool-environment cells, resumable by row key."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from ..agent.runtime import Policy, run_episode
from ..corruption import FaultConfig
from ..records import append_jsonl
from ..scoring import ScoreBreakdown, score_report
from .queries import QueryInstance

log = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"
TRACES_FILE = "traces.jsonl"


@dataclass(frozen=True)
class EnvCell:
    variant: str = "utility"
    rate: float = 0.0

    def label(self) -> str:
        return f"{self.variant}@{self.rate:g}"


def env_matrix(variants: Iterable[str], rates: Iterable[float]) -> list[EnvCell]:
    return [EnvCell(v, float(r)) for v in variants for r in rates]


def row_key(key: str, model: str, variant: str, rate: float) -> tuple:
    return (key, model, variant, round(float(rate), 6))


def load_results(path: str | Path) -> list[dict]:
    """Results sorted by row key; later duplicates of a key and torn lines from a crash are ignored."""
    p = Path(path)
    if p.is_dir():
        p = p / RESULTS_FILE
    if not p.exists():
        return []
    rows: dict[tuple, dict] = {}
    lines = p.read_text(encoding="utf-8").splitlines()
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
        except json.JSONDecodeError:
            log.warning("%s:%d: ignoring torn record", p, n)
            continue
        rows.setdefault(row_key(r["key"], r["model"], r["variant"], r["rate"]), r)
    return [rows[k] for k in sorted(rows)]


def _terminate_last_line(path: Path) -> None:
    if path.exists() and path.stat().st_size:
        with open(path, "rb+") as fh:
            fh.seek(-1, 2)
            if fh.read(1) != b"\n":
                fh.write(b"\n")


def _episode(env, inst: QueryInstance, model: str, factory: Callable[[], Policy], cell: EnvCell,
             faults: FaultConfig, K: int, budget: int, seed: int) -> tuple[dict, dict]:
    row = {"key": inst.key, "model": model, "variant": cell.variant, "rate": cell.rate,
           "task_type": inst.task_type}
    try:
        tools = env.toolbox(cell.variant, faults)
        trace, report = run_episode(inst.query, tools, factory(), budget=budget, K=K, seed=seed)
        breakdown = score_report(report, inst.truth, inst.query, env.index, trace.observed_ids, K)
        row.update(scores=breakdown.to_dict(), failed=trace.failed, failure=trace.failure,
                   tool_calls=trace.tool_calls, tool_rounds=trace.tool_rounds)
        trace_rec = {"key": inst.key, "model": model, "variant": cell.variant, "rate": cell.rate, **trace.to_dict()}
    except Exception as exc:  # a broken episode is recorded, the sweep carries on
        log.exception("episode %s/%s/%s failed", inst.key, model, cell.label())
        failure = f"{type(exc).__name__}: {exc}"
        row.update(scores=ScoreBreakdown.empty(K).to_dict(), failed=True, failure=failure, tool_calls=0, tool_rounds=0)
        trace_rec = {"key": inst.key, "model": model, "variant": cell.variant, "rate": cell.rate, "failure": failure}
    return row, trace_rec


def run_sweep(instances: Sequence[QueryInstance], env, policies: Mapping[str, Callable[[], Policy]],
              cells: Sequence[EnvCell], out_dir: str | Path | None = None, workers: int = 1, K: int = 20,
              budget: int = 10, faults: FaultConfig | None = None, seed: int = 0) -> list[dict]:
    """Run every (instance, policy, cell) once and return the full table sorted by row key.

    ``policies`` maps a model id to a zero-argument factory so each episode gets
    a fresh policy. With ``out_dir`` rows are appended to ``results.jsonl`` as
    they finish and rows already present are skipped on the next call.
    """
    faults = faults or FaultConfig()
    results_path = traces_path = None
    done: set[tuple] = set()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        results_path = Path(out_dir) / RESULTS_FILE
        traces_path = Path(out_dir) / TRACES_FILE
        done = {row_key(r["key"], r["model"], r["variant"], r["rate"]) for r in load_results(results_path)}
        for path in (results_path, traces_path):
            _terminate_last_line(path)

    jobs = []
    for inst in instances:
        for model in sorted(policies):
            for cell in cells:
                if row_key(inst.key, model, cell.variant, cell.rate) not in done:
                    cell_faults = FaultConfig(**{**faults.__dict__, "rate": cell.rate})
                    jobs.append((inst, model, policies[model], cell, cell_faults))
    log.info("sweep: %d episodes to run, %d already done", len(jobs), len(done))

    lock = threading.Lock()
    fresh: list[dict] = []

    def work(job):
        inst, model, factory, cell, cell_faults = job
        row, trace_rec = _episode(env, inst, model, factory, cell, cell_faults, K, budget, seed)
        with lock:
            fresh.append(row)
            if results_path is not None:
                append_jsonl(traces_path, trace_rec)
                append_jsonl(results_path, row)
        return row

    if workers <= 1:
        for job in jobs:
            work(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, jobs))

    if results_path is not None:
        return load_results(results_path)
    return sorted(fresh, key=lambda r: row_key(r["key"], r["model"], r["variant"], r["rate"]))
