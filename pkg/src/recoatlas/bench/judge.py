"""Semantic judge prompts and parsing of their binary verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..agent.actions import loads_object
from ..agent.prompts import fill, load_template
from ..catalog import Catalog
from ..scoring import Report, validate_report

TEXT_CHARS = 300
QUALITY_FLAGS = ("relevance", "complementarity", "diversity")
EXPLANATION_FLAGS = ("specificity", "faithfulness", "justification")
REPORT_FLAGS = ("strategy_coherence", "overall_report_quality")


def products_block(items: Sequence[tuple[str, str]], catalog: Catalog, text_chars: int = TEXT_CHARS) -> str:
    """``items`` are (product_id, reasoning) pairs of a validated report."""
    blocks = []
    for pid, reasoning in items:
        it = catalog[pid]
        blocks.append(f"[{pid}] {it.title}\nDescription: {it.description[:text_chars]}\nReasoning: {reasoning}")
    return "\n\n".join(blocks)


def _messages(kind: str, values: dict) -> list[dict]:
    return [
        {"role": "system", "content": load_template(f"judge_{kind}_system")},
        {"role": "user", "content": fill(load_template(f"judge_{kind}_user"), values)},
    ]


def judged_items(report: Report, catalog: Catalog, observed_ids: Iterable[str] | None = None,
                 K: int = 20) -> list[tuple[str, str]]:
    """Valid ids of ``report`` with the reasoning of their first occurrence."""
    valid = validate_report(report, catalog, observed_ids, K).valid_ids
    reasons: dict[str, str] = {}
    for r in report.results:
        if isinstance(r.product_id, str):
            reasons.setdefault(r.product_id, r.reasoning)
    return [(pid, reasons.get(pid, "")) for pid in valid]


def render_judge_prompts(query: str, report: Report, catalog: Catalog, observed_ids: Iterable[str] | None = None,
                         K: int = 20) -> tuple[list[dict], list[dict]]:
    """Quality-judge and explanation-judge messages for the validated report."""
    block = products_block(judged_items(report, catalog, observed_ids, K), catalog)
    quality = _messages("quality", {"query": query, "products_block": block})
    explanation = _messages("explanation", {"query": query, "report_explanation": report.report_explanation,
                                            "products_block": block})
    return quality, explanation


@dataclass
class JudgeVerdict:
    """Parsed judge output for one report; ``valid`` is False when the response could not be parsed."""

    items: dict[str, dict[str, int]] = field(default_factory=dict)
    report_flags: dict[str, int] = field(default_factory=dict)
    valid: bool = True
    error: str | None = None

    def means(self) -> dict[str, float]:
        out = {}
        if self.items:
            flags = next(iter(self.items.values())).keys()
            for f in flags:
                out[f] = sum(v[f] for v in self.items.values()) / len(self.items)
        out.update({k: float(v) for k, v in self.report_flags.items()})
        return out


def _flag(value) -> int:
    if isinstance(value, bool) or value not in (0, 1):
        raise ValueError(f"flag must be 0 or 1, got {value!r}")
    return int(value)


def parse_verdict(raw: str, item_ids: Sequence[str], kind: str = "quality") -> JudgeVerdict:
    """Strictly parse one judge response; items missing from it score 0 on every flag."""
    flags = QUALITY_FLAGS if kind == "quality" else EXPLANATION_FLAGS
    try:
        obj = loads_object(raw)
        if not isinstance(obj, dict) or not isinstance(obj.get("items"), dict):
            raise ValueError("response needs an 'items' object")
        items = {}
        for pid in item_ids:
            entry = obj["items"].get(pid)
            if entry is None:
                items[pid] = {f: 0 for f in flags}
                continue
            if not isinstance(entry, dict):
                raise ValueError(f"item {pid!r} must be an object")
            items[pid] = {f: _flag(entry.get(f, 0)) for f in flags}
        report_flags = {}
        if kind == "explanation":
            for f in REPORT_FLAGS:
                if f not in obj:
                    raise ValueError(f"missing report-level flag {f!r}")
                report_flags[f] = _flag(obj[f])
    except (ValueError, TypeError) as exc:
        return JudgeVerdict(valid=False, error=str(exc))
    return JudgeVerdict(items, report_flags)


@dataclass
class JudgeSummary:
    means: dict[str, float]
    n_valid: int
    n_invalid: int


def aggregate_verdicts(verdicts: Iterable[JudgeVerdict]) -> JudgeSummary:
    """Mean over valid reports of each report's flag means; invalid verdicts are only counted."""
    verdicts = list(verdicts)
    valid = [v for v in verdicts if v.valid]
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for v in valid:
        for k, m in v.means().items():
            sums[k] = sums.get(k, 0.0) + m
            counts[k] = counts.get(k, 0) + 1
    return JudgeSummary({k: sums[k] / counts[k] for k in sorted(sums)}, len(valid), len(verdicts) - len(valid))


def parse_and_aggregate_judge(responses: Iterable[tuple[str, Sequence[str]]], kind: str = "quality") -> JudgeSummary:
    """``responses`` are (raw judge text, judged item ids) pairs, one per report."""
    return aggregate_verdicts(parse_verdict(raw, ids, kind) for raw, ids in responses)


def run_judges(client, query: str, report: Report, catalog: Catalog,
               observed_ids: Iterable[str] | None = None, K: int = 20) -> tuple[JudgeVerdict, JudgeVerdict]:
    """Optional: send both prompts through a chat client exposing ``complete(messages)``."""
    ids = [pid for pid, _ in judged_items(report, catalog, observed_ids, K)]
    quality, explanation = render_judge_prompts(query, report, catalog, observed_ids, K)
    return (parse_verdict(client.complete(quality), ids, "quality"),
            parse_verdict(client.complete(explanation), ids, "explanation"))
