"""Report validation, SetHit@K and the three behavior-grounded reward components."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .behavior.heads import ProjectionPair, QueryHead
from .catalog import Catalog
from .embeddings import EmbeddingProvider, ItemMatrix, embed_query, row_scores

EPS = 1e-8
REASONS = ("invalid_id", "duplicate", "out_of_catalog", "not_observed", "overflow", "parse")


@dataclass
class ReportItem:
    product_id: Any
    reasoning: str = ""


@dataclass
class Report:
    report_explanation: str = ""
    results: list[ReportItem] = field(default_factory=list)

    @classmethod
    def from_obj(cls, obj: Mapping) -> "Report":
        """Build from the ``final`` object of the action schema; raises ``ValueError`` on bad shape."""
        if not isinstance(obj, Mapping):
            raise ValueError("report must be an object")
        results = obj.get("results")
        if not isinstance(results, list):
            raise ValueError("report.results must be a list")
        items = []
        for r in results:
            if not isinstance(r, Mapping) or "product_id" not in r:
                raise ValueError("each result needs a product_id")
            reasoning = r.get("reasoning", "")
            items.append(ReportItem(r["product_id"], reasoning if isinstance(reasoning, str) else str(reasoning)))
        expl = obj.get("report_explanation", "")
        return cls(expl if isinstance(expl, str) else str(expl), items)

    def to_obj(self) -> dict:
        return {
            "report_explanation": self.report_explanation,
            "results": [{"product_id": r.product_id, "reasoning": r.reasoning} for r in self.results],
        }


@dataclass(frozen=True)
class Violation:
    position: int
    reason: str
    product_id: Any = None


@dataclass
class ValidatedSet:
    valid_ids: list[str]
    violations: list[Violation] = field(default_factory=list)
    k: int = 20

    def reasons(self) -> list[str]:
        return [v.reason for v in self.violations]


def _coerce_report(report) -> Report:
    if isinstance(report, Report):
        return report
    if isinstance(report, (str, bytes)):
        report = json.loads(report)
    if isinstance(report, Mapping) and "final" in report and "results" not in report:
        report = report["final"]
    return Report.from_obj(report)


def validate_report(report, catalog: Catalog, observed_ids: Iterable[str] | None = None, K: int = 20) -> ValidatedSet:
    """Order-preserving filter of a report down to at most ``K`` unique, in-catalog, observed ids.

    ``observed_ids=None`` disables the candidate-source check.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    try:
        rep = _coerce_report(report)
    except (ValueError, TypeError):
        return ValidatedSet([], [Violation(-1, "parse")], K)
    observed = None if observed_ids is None else set(observed_ids)
    valid: list[str] = []
    seen: set[str] = set()
    violations = []
    for pos, item in enumerate(rep.results):
        pid = item.product_id
        if not isinstance(pid, str) or not pid.strip():
            violations.append(Violation(pos, "invalid_id", pid))
        elif pid not in catalog:
            violations.append(Violation(pos, "out_of_catalog", pid))
        elif observed is not None and pid not in observed:
            violations.append(Violation(pos, "not_observed", pid))
        elif pid in seen:
            violations.append(Violation(pos, "duplicate", pid))
        elif len(valid) >= K:
            violations.append(Violation(pos, "overflow", pid))
        else:
            seen.add(pid)
            valid.append(pid)
    return ValidatedSet(valid, violations, K)


def set_hit_at_k(valid: ValidatedSet | Sequence[str], truth: Iterable[str]) -> tuple[float, int]:
    g = set(truth)
    if not g:
        raise ValueError("ground-truth set must be non-empty")
    ids = valid.valid_ids if isinstance(valid, ValidatedSet) else valid
    count = len(set(ids) & g)
    return count / len(g), count


@dataclass
class ComponentScores:
    per_item: dict[str, float]
    aggregate: float


class CentroidIndex:
    """Catalog-wide statistics the scorers normalize against.

    Holds subcategory centroids, each item's centroid scope, the same-scope
    similarity baselines for diversity, the per-anchor complementarity
    baselines, and a cache of per-query relevance baselines.
    """

    def __init__(self, catalog: Catalog, matrix: ItemMatrix, pair: ProjectionPair, head: QueryHead,
                 provider: EmbeddingProvider | None = None, scope_threshold: float = 0.90, chunk: int = 2048):
        if list(matrix.ids) != catalog.ids:
            raise ValueError("item matrix rows must follow catalog id order")
        self.catalog = catalog
        self.matrix = matrix
        self.pair = pair
        self.head = head
        self.provider = provider
        self.scope_threshold = scope_threshold
        self.pos = matrix.position
        E = matrix.vectors
        n = len(matrix)

        labels = [catalog.subcategory[i] for i in catalog.ids]
        self.subcategories = sorted(set(labels))
        code = {c: k for k, c in enumerate(self.subcategories)}
        self.codes = np.array([code[c] for c in labels], dtype=np.int64)
        sums = np.zeros((len(self.subcategories), E.shape[1]))
        np.add.at(sums, self.codes, E)
        self.centroids = sums / np.linalg.norm(sums, axis=1, keepdims=True)

        in_scope = (E @ self.centroids.T) > scope_threshold
        empty = ~in_scope.any(axis=1)
        in_scope[empty, self.codes[empty]] = True
        self.in_scope = in_scope

        # same-scope similarity baselines, excluding the item itself
        div_sum = np.zeros(n)
        div_cnt = np.zeros(n, dtype=np.int64)
        div_max = np.full(n, -np.inf)
        for c in range(len(self.subcategories)):
            members = np.flatnonzero(self.codes == c)
            scoped = np.flatnonzero(in_scope[:, c])
            if scoped.size == 0:
                continue
            sims = E[scoped] @ E[members].T
            self_mask = scoped[:, None] == members[None, :]
            div_sum[scoped] += np.where(self_mask, 0.0, sims).sum(axis=1)
            div_cnt[scoped] += members.size - self_mask.sum(axis=1)
            div_max[scoped] = np.maximum(div_max[scoped], np.where(self_mask, -np.inf, sims).max(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            self.div_mean = np.where(div_cnt > 0, div_sum / np.maximum(div_cnt, 1), np.nan)
        self.div_max = np.where(div_cnt > 0, div_max, np.nan)

        self.anchor_vectors = pair.project_anchor(E)
        self.complement_vectors = pair.project_complement(E)
        self.comp_mean = self.anchor_vectors @ self.complement_vectors.mean(axis=0)
        comp_max = np.empty(n)
        for start in range(0, n, chunk):
            comp_max[start:start + chunk] = (self.anchor_vectors[start:start + chunk] @ self.complement_vectors.T).max(axis=1)
        self.comp_max = comp_max
        self._query_cache: dict[str, tuple[np.ndarray, float, float]] = {}

    def scope(self, item_id: str) -> list[str]:
        return [self.subcategories[c] for c in np.flatnonzero(self.in_scope[self.pos[item_id]])]

    def query_scores(self, query) -> tuple[np.ndarray, float, float]:
        """Raw relevance over the catalog plus its mean and max; ``query`` is text or a unit query vector."""
        if isinstance(query, str):
            hit = self._query_cache.get(query)
            if hit is not None:
                return hit
            if self.provider is None:
                raise ValueError("index has no embedding provider for text queries")
            z = self.head.transform(embed_query(self.provider, query))
        else:
            z = np.asarray(query, dtype=float)
        a = row_scores(self.matrix.vectors, z)
        top = float(a.max())
        # mean taken as an offset from the max so a flat score list gives exactly mean == max
        out = (a, top + float(np.mean(a - top)), top)
        if isinstance(query, str):
            self._query_cache[query] = out
        return out


def build_centroid_index(catalog: Catalog, matrix: ItemMatrix, pair: ProjectionPair, head: QueryHead,
                         scope_threshold: float = 0.90, provider: EmbeddingProvider | None = None) -> CentroidIndex:
    return CentroidIndex(catalog, matrix, pair, head, provider=provider, scope_threshold=scope_threshold)


def _ids(valid) -> list[str]:
    return list(valid.valid_ids if isinstance(valid, ValidatedSet) else valid)


def relevance_reward(query, valid, index: CentroidIndex, K: int = 20) -> ComponentScores:
    ids = _ids(valid)
    a, mu, top = index.query_scores(query)
    per = {}
    for i in ids:
        p = index.pos.get(i)
        per[i] = 0.0 if p is None else max(0.0, (float(a[p]) - mu) / (top - mu + EPS))
    return ComponentScores(per, sum(per.values()) / K)


def complementarity_reward(valid, index: CentroidIndex, K: int = 20) -> ComponentScores:
    ids = [i for i in _ids(valid) if i in index.pos]
    per = {i: 0.0 for i in _ids(valid)}
    if len(ids) >= 2:
        idx = np.array([index.pos[i] for i in ids])
        b = index.anchor_vectors[idx] @ index.complement_vectors[idx].T
        codes = index.codes[idx]
        for r, i in enumerate(ids):
            others = [s for s in range(len(ids)) if s != r and codes[s] != codes[r]]
            if not others:
                continue
            mu, top = index.comp_mean[idx[r]], index.comp_max[idx[r]]
            vals = np.maximum(0.0, (b[r, others] - mu) / (top - mu + EPS))
            per[i] = float(vals.mean())
    return ComponentScores(per, sum(per.values()) / K)


def diversity_reward(valid, index: CentroidIndex, K: int = 20) -> ComponentScores:
    ids = [i for i in _ids(valid) if i in index.pos]
    per = {i: 0.0 for i in _ids(valid)}
    if ids:
        idx = np.array([index.pos[i] for i in ids])
        sims = index.matrix.vectors[idx] @ index.matrix.vectors[idx].T
        for r, i in enumerate(ids):
            p = idx[r]
            mu, top = index.div_mean[p], index.div_max[p]
            if np.isnan(mu):
                continue
            others = [s for s in range(len(ids)) if s != r and index.in_scope[p, index.codes[idx[s]]]]
            if not others:
                continue
            dbar = float(sims[r, others].mean())
            u = min(1.0, max(0.0, (dbar - mu) / (top - mu + EPS)))
            per[i] = 1.0 - u
    return ComponentScores(per, sum(per.values()) / K)


@dataclass
class ScoreBreakdown:
    set_hit_fraction: float
    set_hit_count: int
    relevance: float
    complementarity: float
    diversity: float
    n_valid: int
    k: int
    per_item: dict[str, dict[str, float]] = field(default_factory=dict)
    violations: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoreBreakdown":
        return cls(**dict(d))

    @classmethod
    def empty(cls, k: int = 20) -> "ScoreBreakdown":
        return cls(0.0, 0, 0.0, 0.0, 0.0, 0, k)


def score_report(report, truth: Iterable[str], query, index: CentroidIndex,
                 observed_ids: Iterable[str] | None = None, K: int = 20) -> ScoreBreakdown:
    vs = validate_report(report, index.catalog, observed_ids, K)
    frac, count = set_hit_at_k(vs, truth)
    rel = relevance_reward(query, vs, index, K)
    comp = complementarity_reward(vs, index, K)
    div = diversity_reward(vs, index, K)
    per = {i: {"relevance": rel.per_item[i], "complementarity": comp.per_item[i], "diversity": div.per_item[i]}
           for i in vs.valid_ids}
    return ScoreBreakdown(frac, count, rel.aggregate, comp.aggregate, div.aggregate, len(vs.valid_ids), K, per,
                          [asdict(v) for v in vs.violations])
