"""Windowed co-purchase counts and the PPMI item graph."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..catalog import Interaction, InteractionTable

DAY_SECONDS = 86400


@dataclass
class CoPurchaseCounts:
    """Symmetric pair counts stored once per unordered pair ``(a, b)`` with ``a < b``."""

    pairs: dict[tuple[str, str], int] = field(default_factory=dict)

    def count(self, a: str, b: str) -> int:
        if a == b:
            return 0
        return self.pairs.get((a, b) if a < b else (b, a), 0)

    def marginals(self) -> dict[str, int]:
        m: dict[str, int] = defaultdict(int)
        for (a, b), c in self.pairs.items():
            m[a] += c
            m[b] += c
        return dict(m)

    @property
    def total(self) -> int:
        # N sums C over ordered pairs, i.e. twice the unordered total
        return 2 * sum(self.pairs.values())

    def merge(self, other: "CoPurchaseCounts") -> "CoPurchaseCounts":
        out = dict(self.pairs)
        for k, v in other.pairs.items():
            out[k] = out.get(k, 0) + v
        return CoPurchaseCounts(out)


def _window_ok(dt: int, window_days: int) -> bool:
    # window 0 means "less than one full day"; window w admits |dt| < (w + 1) days
    return abs(dt) < (window_days + 1) * DAY_SECONDS


def extract_copurchase_pairs(positives: InteractionTable | Iterable[Interaction], window_days: int = 0) -> CoPurchaseCounts:
    """Count each unordered item pair once per user whose positive events fall within the window."""
    rows = positives.rows if isinstance(positives, InteractionTable) else list(positives)
    by_user: dict[str, list[tuple[int, str]]] = defaultdict(list)
    for r in rows:
        if r.positive:
            by_user[r.user_id].append((r.timestamp, r.item_id))
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for user in sorted(by_user):
        events = sorted(by_user[user])
        hit: set[tuple[str, str]] = set()
        lo = 0
        for hi in range(len(events)):
            t_hi, b = events[hi]
            while not _window_ok(t_hi - events[lo][0], window_days):
                lo += 1
            for t_lo, a in events[lo:hi]:
                if a != b:
                    hit.add((a, b) if a < b else (b, a))
        for pair in hit:
            counts[pair] += 1
    return CoPurchaseCounts({k: counts[k] for k in sorted(counts)})


@dataclass
class PpmiGraph:
    edges: dict[tuple[str, str], float]
    threshold: float = 0.0

    def weight(self, a: str, b: str) -> float | None:
        return self.edges.get((a, b) if a < b else (b, a))

    def __len__(self):
        return len(self.edges)

    def neighbors(self) -> dict[str, set[str]]:
        nb: dict[str, set[str]] = defaultdict(set)
        for a, b in self.edges:
            nb[a].add(b)
            nb[b].add(a)
        return dict(nb)

    def directed_edges(self) -> list[tuple[str, str]]:
        out = []
        for a, b in self.edges:
            out.append((a, b))
            out.append((b, a))
        return sorted(out)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# threshold={self.threshold!r}\n")
            for (a, b), w in self.edges.items():
                fh.write(f"{a}\t{b}\t{w!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "PpmiGraph":
        edges = {}
        threshold = 0.0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("# threshold="):
                    threshold = float(line.split("=", 1)[1])
                elif line:
                    a, b, w = line.split("\t")
                    edges[(a, b) if a < b else (b, a)] = float(w)
        return cls(edges, threshold)


def pmi_weight(c: float, n: float, m_a: float, m_b: float) -> float:
    return math.log2(c * n / (m_a * m_b))


def build_ppmi_graph(counts: CoPurchaseCounts, threshold: float = 0.0) -> PpmiGraph:
    """Weight each pair by ``log2(C(a,b) * N / (M(a) * M(b)))``; keep weights ``>= threshold``."""
    n = counts.total
    if n <= 0:
        raise ValueError("co-purchase counts are empty (N = 0)")
    m = counts.marginals()
    edges = {}
    for (a, b), c in counts.pairs.items():
        if c <= 0:
            continue
        w = pmi_weight(c, n, m[a], m[b])
        if w >= threshold:
            edges[(a, b)] = w
    return PpmiGraph(edges, threshold)
