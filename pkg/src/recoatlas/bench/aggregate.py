"""Leaderboard means, fault-rate retention and output formats."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from typing import Iterable

METRICS = ("set_hit", "relevance", "complementarity", "diversity")
GROUP = ("model", "task_type", "variant", "rate")


def _metric(row: dict, name: str) -> float:
    scores = row["scores"]
    return float(scores["set_hit_fraction"] if name == "set_hit" else scores[name])


def aggregate(rows: Iterable[dict]) -> list[dict]:
    """Per (model, task_type, variant, rate): episode count, failures and metric means.

    ``retention`` is the SetHit mean divided by the same group's mean at rate 0;
    it is ``None`` when there is no clean row or the clean mean is 0.
    """
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for r in rows:
        groups[(r["model"], r["task_type"], r["variant"], float(r["rate"]))].append(r)
    if not groups:
        raise ValueError("results table is empty")
    out = []
    for key in sorted(groups):
        members = groups[key]
        entry = dict(zip(GROUP, key))
        entry["n"] = len(members)
        entry["failed"] = sum(1 for m in members if m.get("failed"))
        for name in METRICS:
            entry[name] = sum(_metric(m, name) for m in members) / len(members)
        out.append(entry)
    clean = {(e["model"], e["task_type"], e["variant"]): e["set_hit"] for e in out if e["rate"] == 0.0}
    for e in out:
        base = clean.get((e["model"], e["task_type"], e["variant"]))
        e["retention"] = e["set_hit"] / base if base else None
    return out


def format_table(agg: list[dict]) -> str:
    header = ["model", "task_type", "variant", "rate", "n", "failed", "set_hit", "relevance",
              "complementarity", "diversity", "retention"]
    body = []
    for e in agg:
        cells = []
        for h in header:
            v = e[h]
            if v is None:
                cells.append("-")
            elif isinstance(v, float) and h != "rate":
                cells.append(f"{v:.3f}")
            else:
                cells.append(f"{v:g}" if isinstance(v, float) else str(v))
        body.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


def format_csv(agg: list[dict]) -> str:
    buf = io.StringIO()
    fields = list(GROUP) + ["n", "failed", *METRICS, "retention"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for e in agg:
        w.writerow({k: ("" if e[k] is None else e[k]) for k in fields})
    return buf.getvalue()


def plot_data(agg: list[dict]) -> dict:
    """Series keyed by ``model/task_type/variant`` with x = fault rate, ready for plotting."""
    series: dict[str, dict] = {}
    for e in agg:
        s = series.setdefault(f"{e['model']}/{e['task_type']}/{e['variant']}",
                              {"rate": [], **{m: [] for m in METRICS}, "retention": []})
        s["rate"].append(e["rate"])
        for m in METRICS:
            s[m].append(e[m])
        s["retention"].append(e["retention"])
    return {"series": series}


def render(agg: list[dict], fmt: str = "table") -> str:
    if fmt == "table":
        return format_table(agg)
    if fmt == "csv":
        return format_csv(agg)
    if fmt == "plotdata":
        return json.dumps(plot_data(agg), indent=2, sort_keys=True)
    raise ValueError(f"unknown format {fmt!r}; choose table, csv or plotdata")
