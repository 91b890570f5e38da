"""End-to-end construction and persistence of a benchmark environment."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .behavior.heads import ProjectionPair, QueryHead
from .behavior.ppmi import PpmiGraph, build_ppmi_graph, extract_copurchase_pairs
from .behavior.training import QueryPair, TrainConfig, train_complementarity, train_query_head
from .catalog import Catalog, FilterConfig, InteractionTable, filter_catalog, filter_interactions, split_users
from .corruption import FaultConfig, FaultyTools
from .embeddings import EmbeddingProvider, HashingEmbedder, ItemMatrix, embed_items
from .errors import ConfigError
from .records import read_jsonl, write_jsonl
from .scoring import CentroidIndex, build_centroid_index
from .tools import ToolEnv

log = logging.getLogger(__name__)

ENV_VERSION = "recoatlas-env/1"


def provider_from_spec(spec: dict) -> EmbeddingProvider:
    kind = spec.get("kind", "hashing")
    if kind == "hashing":
        return HashingEmbedder(seed=int(spec.get("seed", 0)), dim=int(spec.get("dim", 64)))
    if kind == "remote":
        from .embeddings import RemoteEmbeddingProvider
        return RemoteEmbeddingProvider(dim=int(spec["dim"]), endpoint=spec.get("endpoint"), model=spec.get("model"))
    raise ConfigError(f"unknown embedding provider kind {kind!r}")


@dataclass
class BenchEnv:
    """Everything a sweep needs: catalog, interactions, item matrix, trained heads and tool backings."""

    catalog: Catalog
    train: InteractionTable
    heldout: InteractionTable
    provider: EmbeddingProvider
    provider_spec: dict
    matrix: ItemMatrix
    graph: PpmiGraph
    pair: ProjectionPair
    head: QueryHead
    _tool_envs: dict = field(default_factory=dict, repr=False)
    _index: CentroidIndex | None = field(default=None, repr=False)

    def tool_env(self, variant: str = "utility") -> ToolEnv:
        if variant not in self._tool_envs:
            self._tool_envs[variant] = ToolEnv(self.catalog, self.matrix, self.provider, variant, self.head, self.pair)
        return self._tool_envs[variant]

    def toolbox(self, variant: str = "utility", faults: FaultConfig | float | None = None) -> FaultyTools:
        if isinstance(faults, (int, float)):
            faults = FaultConfig(rate=float(faults))
        return FaultyTools(self.tool_env(variant), faults)

    @property
    def index(self) -> CentroidIndex:
        if self._index is None:
            self._index = build_centroid_index(self.catalog, self.matrix, self.pair, self.head, provider=self.provider)
        return self._index

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_jsonl(d / "catalog.jsonl", self.catalog.to_records())
        write_jsonl(d / "train.jsonl", self.train.to_records())
        write_jsonl(d / "heldout.jsonl", self.heldout.to_records())
        self.matrix.save(d / "embeddings.npz")
        self.graph.save(d / "ppmi.tsv")
        self.pair.save(d / "complement.npz")
        self.head.save(d / "query_head.npz")
        (d / "env.json").write_text(json.dumps({"version": ENV_VERSION, "provider": self.provider_spec}, indent=2))

    @classmethod
    def load(cls, directory: str | Path) -> "BenchEnv":
        d = Path(directory)
        meta = json.loads((d / "env.json").read_text())
        if meta.get("version") != ENV_VERSION:
            raise ConfigError(f"{d}: unsupported environment version {meta.get('version')!r}")
        catalog = Catalog.from_records(read_jsonl(d / "catalog.jsonl"))
        return cls(
            catalog,
            InteractionTable.from_records(read_jsonl(d / "train.jsonl")),
            InteractionTable.from_records(read_jsonl(d / "heldout.jsonl")),
            provider_from_spec(meta["provider"]),
            meta["provider"],
            ItemMatrix.load(d / "embeddings.npz"),
            PpmiGraph.load(d / "ppmi.tsv"),
            ProjectionPair.load(d / "complement.npz"),
            QueryHead.load(d / "query_head.npz"),
        )


def split_query_pairs(pairs: list[QueryPair], val_frac: float, seed: int) -> tuple[list[QueryPair], list[QueryPair]]:
    """Split by user so validation queries come from users unseen in training."""
    users = sorted({p.user_id for p in pairs})
    random.Random(seed).shuffle(users)
    n_val = max(1, round(val_frac * len(users)))
    val_users = set(users[:n_val])
    return [p for p in pairs if p.user_id not in val_users], [p for p in pairs if p.user_id in val_users]


def build_env(catalog: Catalog, interactions: InteractionTable, provider_spec: dict,
              query_pairs_fn, train_cfg: TrainConfig | None = None, filter_cfg: FilterConfig | None = None,
              window_days: int = 0, ppmi_threshold: float = 0.0) -> BenchEnv:
    """Split users, embed, build PPMI and train both heads.

    ``query_pairs_fn(train_interactions)`` supplies the query-item training pairs.
    """
    train_cfg = train_cfg or TrainConfig()
    train, heldout = split_users(interactions, filter_cfg)
    provider = provider_from_spec(provider_spec)
    matrix = embed_items(catalog, provider)
    graph = build_ppmi_graph(extract_copurchase_pairs(train.positives, window_days), ppmi_threshold)
    pair = train_complementarity(graph, matrix, train_cfg)
    q_train, q_val = split_query_pairs(query_pairs_fn(train), train_cfg.anchor_val_frac, train_cfg.seed)
    head = train_query_head(q_train, q_val, matrix, provider, catalog, train, train_cfg)
    return BenchEnv(catalog, train, heldout, provider, provider_spec, matrix, graph, pair, head)


SYNTHETIC_TRAIN = dict(comp_epochs=100, comp_batch_size=64, comp_lr=3e-3, query_epochs=8, query_lr=3e-3, query_batch_size=32)
SYNTHETIC_FILTER = dict(heldout_user_frac=0.2)


def build_synthetic_env(world_cfg=None, train_cfg: TrainConfig | None = None, dim: int = 256,
                        embed_seed: int = 0, filter_cfg: FilterConfig | None = None):
    """Generate a synthetic world and build its environment; returns ``(env, world)``."""
    from .bench.synthetic import WorldConfig, generate_world, query_pairs

    world = generate_world(world_cfg or WorldConfig())
    filter_cfg = filter_cfg or FilterConfig(**SYNTHETIC_FILTER)
    train_cfg = train_cfg or TrainConfig(**SYNTHETIC_TRAIN)
    catalog = filter_catalog(world.raw_items, world.raw_reviews, filter_cfg)
    interactions = filter_interactions(world.raw_reviews, catalog, filter_cfg)
    env = build_env(catalog, interactions, {"kind": "hashing", "seed": embed_seed, "dim": dim},
                    lambda tbl: query_pairs(world, tbl, seed=train_cfg.seed), train_cfg, filter_cfg)
    log.info("synthetic env: %d items, %d train rows, %d held-out rows, config %s",
             len(catalog), len(env.train), len(env.heldout), asdict(train_cfg))
    return env, world
