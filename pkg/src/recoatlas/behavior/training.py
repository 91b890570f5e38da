"""Training loops for the complementarity pair and the query head."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from ..catalog import Catalog, InteractionTable
from ..embeddings import EmbeddingProvider, ItemMatrix, l2_normalize, top_positions
from ..errors import TrainingError
from ..utils import round_half_away, stable_seed
from .heads import ProjectionPair, QueryHead
from .losses import batch_bpr, batch_infonce
from .nn import AdamW, cosine_lr, linear_warmup_lr
from .ppmi import PpmiGraph

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    tau: float = 0.05
    negatives: int = 3
    comp_batch_size: int = 512
    comp_epochs: int = 3
    comp_lr: float = 1e-3
    comp_hidden: int = 256
    comp_out: int = 128
    query_batch_size: int = 24
    query_grad_accum: int = 2
    query_epochs: int = 5
    query_lr: float = 5e-5
    query_hidden: int = 256
    warmup_frac: float = 0.1
    weight_decay: float = 0.01
    anchor_val_frac: float = 0.1
    seed: int = 42
    eval_k: int = 5

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.negatives < 1:
            raise ValueError("need at least one negative per positive")


@dataclass(frozen=True)
class QueryPair:
    query: str
    item_id: str
    user_id: str = ""


# ---------------------------------------------------------------- metrics

def complement_recall_at_k(pair: ProjectionPair, graph: PpmiGraph, val_anchors: Sequence[str],
                           matrix: ItemMatrix, k: int = 5) -> float:
    """Mean over anchors of ``|top-k ∩ complements| / min(k, |complements|)``; the anchor itself is never predicted."""
    nbrs = graph.neighbors()
    anchors = [a for a in val_anchors if nbrs.get(a)]
    if not anchors:
        raise TrainingError("no validation anchor has a PPMI complement")
    pos = matrix.position
    comp = pair.project_complement(matrix.vectors)
    anch = pair.project_anchor(matrix.vectors[[pos[a] for a in anchors]])
    total = 0.0
    for a, va in zip(anchors, anch):
        scores = comp @ va
        scores[pos[a]] = -np.inf
        top = top_positions(scores, matrix.ids, k)
        truth = nbrs[a]
        hits = sum(1 for p in top if matrix.ids[p] in truth)
        total += hits / min(k, len(truth))
    return total / len(anchors)


def _topk_ids(z: np.ndarray, matrix: ItemMatrix, k: int) -> list[list[str]]:
    scores = z @ matrix.vectors.T
    return [[matrix.ids[p] for p in top_positions(row, matrix.ids, k)] for row in scores]


def subcategory_match_at_k(head: QueryHead, base_queries: np.ndarray, targets: Sequence[str],
                           matrix: ItemMatrix, subcategory: Mapping[str, str], k: int = 5) -> float:
    tops = _topk_ids(head.transform(base_queries), matrix, k)
    hits = [any(subcategory[i] == subcategory[t] for i in top) for top, t in zip(tops, targets)]
    return float(np.mean(hits)) if hits else 0.0


def hit_at_k(head: QueryHead, base_queries: np.ndarray, targets: Sequence[str], matrix: ItemMatrix, k: int = 5) -> float:
    tops = _topk_ids(head.transform(base_queries), matrix, k)
    hits = [t in top for top, t in zip(tops, targets)]
    return float(np.mean(hits)) if hits else 0.0


# ---------------------------------------------------------------- negatives

class _NegativeSampler:
    """Hard / cross-subcategory / random negatives for query-item positives."""

    def __init__(self, catalog: Catalog, user_items: Mapping[str, set[str]]):
        self.ids = catalog.ids
        self.sub = catalog.subcategory
        self.groups = {c: members for c, members in catalog.subcategories().items()}
        self.user_items = user_items

    def sample(self, user: str, item: str, rng: random.Random) -> tuple[list[str], list[str]]:
        flags = []
        seen = self.user_items.get(user, set())
        c = self.sub[item]
        hard_pool = [j for j in self.groups[c] if j != item and j not in seen]
        if hard_pool:
            hard = hard_pool[rng.randrange(len(hard_pool))]
        else:
            hard = self._random(item, rng)
            flags.append("hard_fallback")
        if len(self.groups) > 1:
            cross = None
            for _ in range(32):
                j = self.ids[rng.randrange(len(self.ids))]
                if self.sub[j] != c:
                    cross = j
                    break
            if cross is None:
                pool = [j for j in self.ids if self.sub[j] != c]
                cross = pool[rng.randrange(len(pool))]
        else:
            cross = self._random(item, rng)
            flags.append("cross_fallback")
        return [hard, cross, self._random(item, rng)], flags

    def _random(self, item: str, rng: random.Random) -> str:
        if len(self.ids) < 2:
            raise TrainingError("catalog needs at least two items to sample negatives")
        while True:
            j = self.ids[rng.randrange(len(self.ids))]
            if j != item:
                return j


def sample_negatives_relevance(pos: tuple[str, str], catalog: Catalog, positives: InteractionTable | Mapping[str, set[str]],
                               rng: random.Random) -> tuple[list[str], list[str]]:
    """Return ``([hard, cross, random], fallback_flags)`` for a ``(user, item)`` positive."""
    if isinstance(positives, InteractionTable):
        user_items: dict[str, set[str]] = {}
        for r in positives.rows:
            user_items.setdefault(r.user_id, set()).add(r.item_id)
    else:
        user_items = dict(positives)
    return _NegativeSampler(catalog, user_items).sample(pos[0], pos[1], rng)


def _complement_negatives(anchors: np.ndarray, n_items: int, forbidden: list[set[int]], m: int,
                          rng: np.random.Generator) -> np.ndarray:
    out = rng.integers(0, n_items, size=(len(anchors), m))
    for row, a in enumerate(anchors):
        bad = forbidden[a]
        if len(bad) >= n_items:
            raise TrainingError("an anchor has no admissible negatives")
        for col in range(m):
            while int(out[row, col]) in bad:
                out[row, col] = rng.integers(0, n_items)
    return out


# ---------------------------------------------------------------- training

def split_anchors(anchors: Sequence[str], frac: float, seed: int) -> tuple[list[str], list[str]]:
    order = sorted(anchors)
    random.Random(seed).shuffle(order)
    n_val = round_half_away(frac * len(order))
    return sorted(order[n_val:]), sorted(order[:n_val])


def train_complementarity(graph: PpmiGraph, matrix: ItemMatrix, cfg: TrainConfig | None = None,
                          init: ProjectionPair | None = None) -> ProjectionPair:
    cfg = cfg or TrainConfig()
    pos = matrix.position
    edges = [(a, b) for a, b in graph.directed_edges() if a in pos and b in pos]
    if not edges:
        raise TrainingError("PPMI graph has no edges over the item matrix")
    nbrs = graph.neighbors()
    anchors = sorted({a for a, _ in edges})
    train_anchors, val_anchors = split_anchors(anchors, cfg.anchor_val_frac, cfg.seed)
    if not val_anchors:
        raise TrainingError(f"no validation anchors: {len(anchors)} anchors at val fraction {cfg.anchor_val_frac}")
    train_set = set(train_anchors)
    train_edges = np.array([(pos[a], pos[b]) for a, b in edges if a in train_set], dtype=np.int64)
    if len(train_edges) == 0:
        raise TrainingError("no training edges after the anchor split")

    n = len(matrix)
    forbidden = [set() for _ in range(n)]
    for a, nb in nbrs.items():
        if a in pos:
            forbidden[pos[a]] = {pos[b] for b in nb if b in pos} | {pos[a]}
    for i in range(n):
        forbidden[i].add(i)

    pair = init.copy() if init is not None else ProjectionPair.init(matrix.dim, cfg.seed, cfg.comp_hidden, cfg.comp_out)
    params = {f"A.{k}": v for k, v in pair.anchor.params.items()}
    params.update({f"C.{k}": v for k, v in pair.complement.params.items()})
    opt = AdamW(params, lr=cfg.comp_lr, weight_decay=cfg.weight_decay)
    steps_per_epoch = math.ceil(len(train_edges) / cfg.comp_batch_size)
    total = steps_per_epoch * cfg.comp_epochs
    E = matrix.vectors
    m = cfg.negatives

    best, best_metric, history = pair.copy(), None, []
    step = 0
    for epoch in range(cfg.comp_epochs):
        rng = np.random.default_rng(stable_seed("comp-epoch", cfg.seed, epoch))
        order = rng.permutation(len(train_edges))
        for start in range(0, len(order), cfg.comp_batch_size):
            batch = train_edges[order[start:start + cfg.comp_batch_size]]
            a_idx, p_idx = batch[:, 0], batch[:, 1]
            n_idx = _complement_negatives(a_idx, n, forbidden, m, rng)
            A, cache_a = pair.anchor.forward(E[a_idx], cache=True)
            C, cache_c = pair.complement.forward(np.concatenate([E[p_idx], E[n_idx.reshape(-1)]]), cache=True)
            b = len(batch)
            loss, g_a, g_p, g_n = batch_infonce(A, C[:b], C[b:].reshape(b, m, -1), cfg.tau)
            grads = {f"A.{k}": v for k, v in pair.anchor.backward(g_a, cache_a).items()}
            g_c = np.concatenate([g_p, g_n.reshape(b * m, -1)])
            grads.update({f"C.{k}": v for k, v in pair.complement.backward(g_c, cache_c).items()})
            opt.step(grads, lr=cosine_lr(cfg.comp_lr, step, total))
            step += 1
        metric = complement_recall_at_k(pair, graph, val_anchors, matrix, cfg.eval_k)
        history.append({"epoch": epoch + 1, "loss": loss, f"val_recall@{cfg.eval_k}": metric})
        log.info("complementarity epoch %d loss %.4f val recall@%d %.4f", epoch + 1, loss, cfg.eval_k, metric)
        if best_metric is None or metric >= best_metric:
            best, best_metric = pair.copy(), metric
    if best_metric is None:
        best_metric = complement_recall_at_k(best, graph, val_anchors, matrix, cfg.eval_k)
    best.meta = {
        "seed": cfg.seed,
        "epochs": cfg.comp_epochs,
        f"val_recall@{cfg.eval_k}": best_metric,
        "history": history,
        "val_anchors": val_anchors,
        "config": asdict(cfg),
    }
    return best


def train_query_head(train_pairs: Sequence[QueryPair], val_pairs: Sequence[QueryPair], matrix: ItemMatrix,
                     provider: EmbeddingProvider, catalog: Catalog, interactions: InteractionTable | None = None,
                     cfg: TrainConfig | None = None, init: QueryHead | None = None) -> QueryHead:
    cfg = cfg or TrainConfig()
    if not val_pairs:
        raise TrainingError("validation side is empty; cannot select a checkpoint")
    if not train_pairs:
        raise TrainingError("no training pairs")
    pos = matrix.position
    user_items: dict[str, set[str]] = {}
    for r in interactions.rows if interactions is not None else []:
        user_items.setdefault(r.user_id, set()).add(r.item_id)
    for p in train_pairs:
        user_items.setdefault(p.user_id, set()).add(p.item_id)
    sampler = _NegativeSampler(catalog, user_items)

    q_train = l2_normalize(provider.embed([p.query for p in train_pairs]))
    q_val = l2_normalize(provider.embed([p.query for p in val_pairs]))
    val_targets = [p.item_id for p in val_pairs]
    head = init.copy() if init is not None else QueryHead.init(matrix.dim, cfg.seed, cfg.query_hidden)
    opt = AdamW(head.net.params, lr=cfg.query_lr, weight_decay=cfg.weight_decay)
    n_batches = math.ceil(len(train_pairs) / cfg.query_batch_size)
    total = math.ceil(n_batches / cfg.query_grad_accum) * cfg.query_epochs
    E = matrix.vectors
    target_idx = np.array([pos[p.item_id] for p in train_pairs])

    best, best_metric, history, fallbacks = head.copy(), None, [], 0
    step = 0
    for epoch in range(cfg.query_epochs):
        rng = random.Random(stable_seed("query-epoch", cfg.seed, epoch))
        order = list(range(len(train_pairs)))
        rng.shuffle(order)
        negs = np.empty((len(train_pairs), 3), dtype=np.int64)
        for i, p in enumerate(train_pairs):
            ids, flags = sampler.sample(p.user_id, p.item_id, rng)
            negs[i] = [pos[j] for j in ids]
            fallbacks += bool(flags)
        acc, n_acc = None, 0
        for bi, start in enumerate(range(0, len(order), cfg.query_batch_size)):
            idx = np.array(order[start:start + cfg.query_batch_size])
            Z, cache = head.net.forward(q_train[idx], cache=True)
            loss, g_z, _, _ = batch_bpr(Z, E[target_idx[idx]], E[negs[idx]])
            grads = head.net.backward(g_z, cache)
            acc = grads if acc is None else {k: acc[k] + grads[k] for k in acc}
            n_acc += 1
            if n_acc == cfg.query_grad_accum or bi == n_batches - 1:
                opt.step({k: v / n_acc for k, v in acc.items()},
                         lr=linear_warmup_lr(cfg.query_lr, step, total, cfg.warmup_frac))
                step += 1
                acc, n_acc = None, 0
        metric = subcategory_match_at_k(head, q_val, val_targets, matrix, catalog.subcategory, cfg.eval_k)
        history.append({"epoch": epoch + 1, "loss": loss, f"val_subcat_match@{cfg.eval_k}": metric})
        log.info("query head epoch %d loss %.4f val subcategory match@%d %.4f", epoch + 1, loss, cfg.eval_k, metric)
        if best_metric is None or metric >= best_metric:
            best, best_metric = head.copy(), metric
    if best_metric is None:
        best_metric = subcategory_match_at_k(best, q_val, val_targets, matrix, catalog.subcategory, cfg.eval_k)
    best.meta = {
        "seed": cfg.seed,
        "epochs": cfg.query_epochs,
        f"val_subcat_match@{cfg.eval_k}": best_metric,
        "history": history,
        "negative_fallbacks": fallbacks,
        "config": asdict(cfg),
    }
    return best
