"""Embedding providers, the unit-norm item matrix and exact dense scoring."""

from __future__ import annotations

import hashlib
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np

from .catalog import Catalog
from .errors import EmbeddingError, ZeroVectorError

log = logging.getLogger(__name__)

CACHE_VERSION = "recoatlas-embeddings/1"
DISPLAY_EPS = 1e-8
QUERY_INSTRUCTION = "Instruct: Given a shopping query, retrieve relevant products.\nQuery:"


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: Sequence[str], max_len: int = 512) -> np.ndarray: ...


_TOKEN = re.compile(r"[a-z0-9]+")


class HashingEmbedder:
    """Deterministic bag-of-tokens embedder.

    Each lowercase alphanumeric token maps to a Gaussian vector seeded by a
    stable hash of ``(seed, token)``; a text is the sum of its token vectors.
    Texts sharing most tokens therefore land close together.
    """

    def __init__(self, seed: int = 0, dim: int = 64):
        self.seed = int(seed)
        self.dim = int(dim)
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            h = hashlib.blake2b(f"{self.seed}\x00{token}".encode(), digest_size=8).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(h, "little")))
            vec = rng.standard_normal(self.dim)
            self._cache[token] = vec
        return vec

    def embed(self, texts: Sequence[str], max_len: int = 512) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            for tok in _TOKEN.findall(str(text).lower())[:max_len]:
                out[row] += self.token_vector(tok)
        return out


def deterministic_test_embedder(seed: int = 0, dim: int = 64) -> HashingEmbedder:
    return HashingEmbedder(seed=seed, dim=dim)


class RemoteEmbeddingProvider:
    """Client for an OpenAI-style ``/embeddings`` endpoint.

    Endpoint, model and key default to ``RECOATLAS_EMBED_ENDPOINT``,
    ``RECOATLAS_EMBED_MODEL`` and ``RECOATLAS_EMBED_API_KEY``.
    """

    def __init__(
        self,
        dim: int,
        endpoint: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        batch_size: int = 64,
        client: httpx.Client | None = None,
    ):
        self.dim = dim
        self.endpoint = (endpoint or os.environ.get("RECOATLAS_EMBED_ENDPOINT", "")).rstrip("/")
        self.model = model or os.environ.get("RECOATLAS_EMBED_MODEL", "")
        key = api_key or os.environ.get("RECOATLAS_EMBED_API_KEY")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self.batch_size = batch_size
        self._client = client or httpx.Client(timeout=timeout, headers=headers)
        if client is not None and headers:
            self._client.headers.update(headers)

    def embed(self, texts: Sequence[str], max_len: int = 512) -> np.ndarray:
        chunks = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start:start + self.batch_size])
            try:
                resp = self._client.post(f"{self.endpoint}/embeddings", json={"model": self.model, "input": batch})
                resp.raise_for_status()
                data = sorted(resp.json()["data"], key=lambda d: d["index"])
                arr = np.asarray([d["embedding"] for d in data], dtype=float)
            except (httpx.HTTPError, KeyError, ValueError, TypeError) as exc:
                raise EmbeddingError(f"embedding request failed: {exc}", retryable=True) from exc
            if arr.shape != (len(batch), self.dim):
                raise EmbeddingError(f"provider returned shape {arr.shape}, expected {(len(batch), self.dim)}", retryable=False)
            chunks.append(arr)
        return np.vstack(chunks) if chunks else np.zeros((0, self.dim))


def l2_normalize(vectors: np.ndarray, ids: Sequence[str] | None = None) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    bad = np.flatnonzero(~(norms.reshape(-1) > 0) | ~np.isfinite(norms.reshape(-1)))
    if bad.size:
        who = [ids[i] for i in bad[:5]] if ids is not None else bad[:5].tolist()
        raise ZeroVectorError(f"zero-norm embedding for {who}")
    return vectors / norms


@dataclass(frozen=True)
class ItemMatrix:
    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValueError("ids and vector rows misaligned")
        norms = np.linalg.norm(self.vectors, axis=1)
        if norms.size and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("item matrix rows must be unit norm; use ItemMatrix.from_vectors")
        self.vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.ids)

    def row(self, item_id: str) -> np.ndarray:
        return self.vectors[self.position[item_id]]

    @property
    def position(self) -> dict[str, int]:
        pos = self.__dict__.get("_position")
        if pos is None:
            pos = {k: i for i, k in enumerate(self.ids)}
            object.__setattr__(self, "_position", pos)
        return pos

    @classmethod
    def from_vectors(cls, ids: Sequence[str], vectors: np.ndarray) -> "ItemMatrix":
        return cls(tuple(ids), l2_normalize(vectors, ids))

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, version=np.array(CACHE_VERSION), ids=np.array(self.ids, dtype=str), vectors=self.vectors)

    @classmethod
    def load(cls, path: str | Path) -> "ItemMatrix":
        with np.load(path, allow_pickle=False) as z:
            version = str(z["version"])
            if version != CACHE_VERSION:
                raise ValueError(f"unsupported embedding cache version {version!r}")
            # rows were normalized before saving; renormalizing would perturb the last bits
            return cls(tuple(str(x) for x in z["ids"]), np.array(z["vectors"], dtype=float))


def embed_items(catalog: Catalog, provider: EmbeddingProvider, batch_size: int = 256, max_len: int = 512) -> ItemMatrix:
    if len(catalog) == 0:
        raise ValueError("catalog is empty")
    ids = catalog.ids
    rows = []
    for start in range(0, len(ids), batch_size):
        batch = ids[start:start + batch_size]
        try:
            vecs = np.asarray(provider.embed([catalog[i].product_text for i in batch], max_len=max_len), dtype=float)
        except EmbeddingError as exc:
            raise EmbeddingError(f"{exc} (items {batch[0]}..{batch[-1]})", item_ids=batch, retryable=exc.retryable) from exc
        except Exception as exc:
            raise EmbeddingError(f"provider failed on items {batch[0]}..{batch[-1]}: {exc}", item_ids=batch) from exc
        rows.append(vecs)
    return ItemMatrix.from_vectors(ids, np.vstack(rows))


def embed_query(provider: EmbeddingProvider, text: str, max_len: int = 512) -> np.ndarray:
    vec = np.asarray(provider.embed([text], max_len=max_len), dtype=float)[0]
    return l2_normalize(vec[None, :], [text[:40]])[0]


@dataclass(frozen=True)
class ScoredItem:
    item_id: str
    raw_score: float
    norm_score: float


@dataclass
class ScoreList:
    entries: list[ScoredItem]
    clamped: bool = False

    @property
    def ids(self) -> list[str]:
        return [e.item_id for e in self.entries]

    def __len__(self):
        return len(self.entries)


def row_scores(vectors: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inner product of every row with ``q``.

    Uses numpy's own loops instead of BLAS so identical rows always get
    bit-identical scores, which keeps id tie-breaks for duplicates exact.
    """
    return np.einsum("ij,j->i", vectors, q)


def normalize_display_scores(raw: Sequence[float]) -> list[float]:
    """``max(0, (s - mean) / (max - mean + 1e-8))`` using the list's own statistics."""
    s = np.asarray(raw, dtype=float)
    if s.size == 0:
        raise ValueError("cannot normalize an empty score list")
    mean, top = s.mean(), s.max()
    return np.maximum(0.0, (s - mean) / (top - mean + DISPLAY_EPS)).tolist()


def rank_desc(scores: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    """Positions sorted by descending score, ties by ascending id."""
    id_rank = np.empty(len(ids), dtype=np.int64)
    id_rank[np.argsort(np.asarray(ids, dtype=str), kind="stable")] = np.arange(len(ids))
    return np.lexsort((id_rank, -np.asarray(scores, dtype=float)))


def top_positions(scores: np.ndarray, ids: Sequence[str], k: int) -> np.ndarray:
    n = len(scores)
    if k >= n:
        return rank_desc(scores, ids)
    # partition first, then settle the boundary ties exactly
    kth = np.partition(-scores, k - 1)[k - 1]
    cand = np.flatnonzero(-scores <= kth)
    order = rank_desc(scores[cand], [ids[i] for i in cand])
    return cand[order[:k]]


def cosine_topk(query_vec: np.ndarray, matrix: ItemMatrix, k: int) -> ScoreList:
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_vec, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise ValueError("query vector must be unit norm")
    scores = row_scores(matrix.vectors, q)
    clamped = k > len(matrix)
    pos = top_positions(scores, matrix.ids, min(k, len(matrix)))
    raw = scores[pos]
    norm = normalize_display_scores(raw)
    return ScoreList([ScoredItem(matrix.ids[p], float(r), float(s)) for p, r, s in zip(pos, raw, norm)], clamped=clamped)
