"""The three agent tools in semantic and utility-aligned variants."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .behavior.heads import ProjectionPair, QueryHead
from .catalog import Catalog
from .embeddings import EmbeddingProvider, ItemMatrix, cosine_topk, embed_query, normalize_display_scores, row_scores, top_positions
from .errors import ConfigError, RecoAtlasError

SEARCH = "search_products"
COMPLEMENT = "get_complementary_products"
SUBSTITUTE = "get_substitute_products"
TOOL_NAMES = (SEARCH, COMPLEMENT, SUBSTITUTE)
VARIANTS = ("semantic", "utility")
TEXT_CHARS = 300
DEFAULT_THRESHOLD = 0.95


class ToolError(RecoAtlasError):
    pass


@dataclass
class ToolEnv:
    """Immutable tool backing: catalog, item matrix, provider and (for utility tools) trained heads."""

    catalog: Catalog
    matrix: ItemMatrix
    provider: EmbeddingProvider
    variant: str = "utility"
    query_head: QueryHead | None = None
    pair: ProjectionPair | None = None
    default_top_k: int = 20
    max_top_k: int = 100
    _query_cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown tool variant {self.variant!r}")
        if list(self.matrix.ids) != self.catalog.ids:
            raise ConfigError("item matrix rows must follow catalog id order")
        if self.variant == "utility" and (self.query_head is None or self.pair is None):
            raise ConfigError("utility tools need a trained query head and projection pair")
        if self.variant == "semantic":
            self._head = QueryHead.identity()
            self._pair = ProjectionPair.identity()
        else:
            self._head, self._pair = self.query_head, self.pair
        self.anchor_vectors = self._pair.project_anchor(self.matrix.vectors)
        self.complement_vectors = self._pair.project_complement(self.matrix.vectors)
        self.subcat_codes = _codes([self.catalog.subcategory[i] for i in self.catalog.ids])

    def with_variant(self, variant: str) -> "ToolEnv":
        return ToolEnv(self.catalog, self.matrix, self.provider, variant, self.query_head, self.pair,
                       self.default_top_k, self.max_top_k)

    def query_vector(self, text: str) -> np.ndarray:
        vec = self._query_cache.get(text)
        if vec is None:
            vec = self._head.transform(embed_query(self.provider, text))
            self._query_cache[text] = vec
            if len(self._query_cache) > 4096:
                self._query_cache.popitem(last=False)
        return vec

    def relevance_scores(self, text: str) -> np.ndarray:
        return row_scores(self.matrix.vectors, self.query_vector(text))

    def entry(self, item_id: str, score: float) -> "ToolEntry":
        it = self.catalog[item_id]
        return ToolEntry(item_id, float(score), it.title, it.description[:TEXT_CHARS])


def _codes(labels: list[str]) -> np.ndarray:
    lookup: dict[str, int] = {}
    return np.array([lookup.setdefault(c, len(lookup)) for c in labels], dtype=np.int64)


@dataclass(frozen=True)
class ToolEntry:
    product_id: str
    score: float
    title: str
    text: str

    def payload(self) -> dict:
        return {"product_id": self.product_id, "score": round(self.score, 4), "title": self.title, "text": self.text}


@dataclass(frozen=True)
class RemovedEntry:
    product_id: str
    duplicate_of: str | None
    similarity: float | None = None

    def payload(self) -> dict:
        d = {"product_id": self.product_id}
        if self.duplicate_of is not None:
            d["duplicate_of"] = self.duplicate_of
        return d


@dataclass
class ToolResult:
    tool_name: str
    entries: list[ToolEntry] = field(default_factory=list)
    kept: list[str] = field(default_factory=list)
    removed: list[RemovedEntry] = field(default_factory=list)
    error: str | None = None
    flags: list[str] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    def returned_ids(self) -> list[str]:
        if self.tool_name == SUBSTITUTE:
            return list(self.kept) + [r.product_id for r in self.removed]
        return [e.product_id for e in self.entries]

    def payload(self) -> dict:
        """Agent-visible serialization; ``meta`` (raw scores, fault bookkeeping) stays hidden."""
        if self.error is not None:
            return {"tool": self.tool_name, "error": self.error}
        d: dict[str, Any] = {"tool": self.tool_name}
        if self.tool_name == SUBSTITUTE:
            d["kept"] = list(self.kept)
            d["removed"] = [r.payload() for r in self.removed]
        else:
            d["results"] = [e.payload() for e in self.entries]
        if self.flags:
            d["flags"] = list(self.flags)
        return d


def _error(tool: str, msg: str) -> ToolResult:
    return ToolResult(tool, error=msg)


def _clamp_k(top_k, env: ToolEnv, n_avail: int, flags: list[str]) -> int:
    if isinstance(top_k, bool) or not isinstance(top_k, int) or top_k < 1:
        raise ToolError(f"top_k must be a positive integer, got {top_k!r}")
    if top_k > env.max_top_k:
        flags.append(f"top_k capped at {env.max_top_k}")
        top_k = env.max_top_k
    if top_k > n_avail:
        flags.append(f"only {n_avail} results available")
    return min(top_k, n_avail)


def _check_ids(item_ids, env: ToolEnv) -> list[str]:
    if not isinstance(item_ids, list) or not item_ids:
        raise ToolError("item_ids must be a non-empty list of product ids")
    unknown = [i for i in item_ids if i not in env.catalog]
    if unknown:
        raise ToolError(f"unknown product ids: {unknown[:5]}")
    return list(item_ids)


def search_products(query: str, top_k: int, env: ToolEnv) -> ToolResult:
    flags: list[str] = []
    try:
        if not isinstance(query, str) or not query.strip():
            raise ToolError("query must be a non-empty string")
        k = _clamp_k(top_k, env, len(env.matrix), flags)
        z = env.query_vector(query)
    except (ToolError, RecoAtlasError) as exc:
        return _error(SEARCH, str(exc))
    sl = cosine_topk(z, env.matrix, k)
    return ToolResult(
        SEARCH,
        entries=[env.entry(e.item_id, e.norm_score) for e in sl.entries],
        flags=flags,
        meta={"raw_scores": [e.raw_score for e in sl.entries]},
    )


def complement_scores(item_ids: list[str], env: ToolEnv) -> np.ndarray:
    """Best anchor score per catalog item; anchors and same-subcategory candidates are ``-inf``."""
    pos = env.matrix.position
    idx = [pos[i] for i in item_ids]
    scores = np.stack([row_scores(env.complement_vectors, env.anchor_vectors[p]) for p in idx])
    same = env.subcat_codes[idx][:, None] == env.subcat_codes[None, :]
    scores[same] = -np.inf
    best = scores.max(axis=0)
    best[idx] = -np.inf
    return best


def get_complementary_products(item_ids: list[str], top_k: int, env: ToolEnv) -> ToolResult:
    flags: list[str] = []
    try:
        anchors = _check_ids(item_ids, env)
        best = complement_scores(anchors, env)
        cand = np.flatnonzero(np.isfinite(best))
        k = _clamp_k(top_k, env, len(cand), flags)
    except ToolError as exc:
        return _error(COMPLEMENT, str(exc))
    if k == 0:
        return ToolResult(COMPLEMENT, flags=flags, meta={"raw_scores": []})
    ids = env.matrix.ids
    order = cand[top_positions(best[cand], [ids[i] for i in cand], k)]
    raw = best[order]
    norm = normalize_display_scores(raw)
    return ToolResult(
        COMPLEMENT,
        entries=[env.entry(ids[p], s) for p, s in zip(order, norm)],
        flags=flags,
        meta={"raw_scores": raw.tolist()},
    )


def get_substitute_products(item_ids: list[str], threshold: float = DEFAULT_THRESHOLD, env: ToolEnv | None = None) -> ToolResult:
    try:
        items = _check_ids(item_ids, env)
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not 0 < threshold <= 1:
            raise ToolError(f"similarity_threshold must lie in (0, 1], got {threshold!r}")
    except ToolError as exc:
        return _error(SUBSTITUTE, str(exc))
    sub = env.catalog.subcategory
    kept: list[str] = []
    removed: list[RemovedEntry] = []
    for i in items:
        same = [j for j in kept if sub[j] == sub[i]]
        if same:
            sims = env.matrix.vectors[[env.matrix.position[j] for j in same]] @ env.matrix.row(i)
            top = int(np.argmax(sims))
            if sims[top] > threshold:
                removed.append(RemovedEntry(i, same[top], float(sims[top])))
                continue
        kept.append(i)
    return ToolResult(SUBSTITUTE, kept=kept, removed=removed, meta={"threshold": float(threshold)})


_ARGS = {
    SEARCH: {"query", "top_k"},
    COMPLEMENT: {"item_ids", "top_k"},
    SUBSTITUTE: {"item_ids", "similarity_threshold"},
}


def call_tool(env: ToolEnv, name: str, args: dict) -> ToolResult:
    """Validate arguments and run a clean tool. Bad arguments yield an error result, never an exception."""
    if name not in _ARGS:
        return _error(str(name), f"unknown tool {name!r}")
    if not isinstance(args, dict):
        return _error(name, "action_input must be an object")
    extra = sorted(set(args) - _ARGS[name])
    if extra:
        return _error(name, f"unexpected arguments {extra}")
    if name == SEARCH:
        if "query" not in args:
            return _error(name, "missing argument 'query'")
        return search_products(args["query"], args.get("top_k", env.default_top_k), env)
    if "item_ids" not in args:
        return _error(name, "missing argument 'item_ids'")
    if name == COMPLEMENT:
        return get_complementary_products(args["item_ids"], args.get("top_k", env.default_top_k), env)
    return get_substitute_products(args["item_ids"], args.get("similarity_threshold", DEFAULT_THRESHOLD), env)
