"""Trained heads: the anchor/complement projection pair and the query head."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..embeddings import EmbeddingProvider, embed_query, l2_normalize
from .nn import MLP

CHECKPOINT_VERSION = "recoatlas-ckpt/1"


def _save(path, kind: str, nets: dict[str, MLP], meta: dict) -> None:
    arrays = {}
    for name, net in nets.items():
        for k, v in net.params.items():
            arrays[f"{name}.{k}"] = v
    header = {"version": CHECKPOINT_VERSION, "kind": kind, "meta": meta,
              "nets": {n: {"residual": net.residual, "normalize": net.normalize} for n, net in nets.items()}}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def _load(path, kind: str):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("version") != CHECKPOINT_VERSION or header.get("kind") != kind:
            raise ValueError(f"{path}: not a {kind} checkpoint ({header.get('version')}, {header.get('kind')})")
        nets = {}
        for name, opts in header["nets"].items():
            params = {k.split(".", 1)[1]: z[k].copy() for k in z.files if k.startswith(name + ".")}
            nets[name] = MLP(params, residual=opts["residual"], normalize=opts["normalize"])
    return nets, header["meta"]


@dataclass
class ProjectionPair:
    """Anchor head ``h_A`` and complement head ``h_C`` over frozen item embeddings.

    ``b_i(j) = <h_A(e_i), h_C(e_j)>``. With ``anchor=None`` and ``complement=None``
    both heads are the identity, which is what the semantic tools use.
    """

    anchor: MLP | None = None
    complement: MLP | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, d: int, seed: int = 0, hidden: int = 256, out: int = 128) -> "ProjectionPair":
        rng = np.random.default_rng(seed)
        return cls(MLP.init(rng, d, hidden, out), MLP.init(rng, d, hidden, out), {"seed": seed})

    @classmethod
    def identity(cls) -> "ProjectionPair":
        return cls(None, None, {"identity": True})

    @property
    def is_identity(self) -> bool:
        return self.anchor is None

    def project_anchor(self, e: np.ndarray) -> np.ndarray:
        return np.asarray(e, dtype=float) if self.anchor is None else self.anchor(np.asarray(e, dtype=float))

    def project_complement(self, e: np.ndarray) -> np.ndarray:
        return np.asarray(e, dtype=float) if self.complement is None else self.complement(np.asarray(e, dtype=float))

    def copy(self) -> "ProjectionPair":
        if self.is_identity:
            return ProjectionPair.identity()
        return ProjectionPair(self.anchor.copy(), self.complement.copy(), dict(self.meta))

    def save(self, path: str | Path) -> None:
        if self.is_identity:
            raise ValueError("identity pair has no parameters to save")
        _save(path, "projection_pair", {"anchor": self.anchor, "complement": self.complement}, self.meta)

    @classmethod
    def load(cls, path: str | Path) -> "ProjectionPair":
        nets, meta = _load(path, "projection_pair")
        return cls(nets["anchor"], nets["complement"], meta)


@dataclass
class QueryHead:
    """Maps a base query embedding to a unit vector scored against frozen item vectors.

    Residual MLP whose output layer starts at zero, so an untrained head is the
    identity on unit inputs.
    """

    net: MLP | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, d: int, seed: int = 0, hidden: int = 256) -> "QueryHead":
        rng = np.random.default_rng(seed)
        return cls(MLP.init(rng, d, hidden, d, residual=True, zero_out=True), {"seed": seed})

    @classmethod
    def identity(cls) -> "QueryHead":
        return cls(None, {"identity": True})

    def transform(self, base: np.ndarray) -> np.ndarray:
        base = np.asarray(base, dtype=float)
        if self.net is None:
            return l2_normalize(base)
        return self.net(base)

    def encode(self, provider: EmbeddingProvider, text: str) -> np.ndarray:
        return self.transform(embed_query(provider, text))

    def copy(self) -> "QueryHead":
        return QueryHead(None if self.net is None else self.net.copy(), dict(self.meta))

    def save(self, path: str | Path) -> None:
        if self.net is None:
            raise ValueError("identity head has no parameters to save")
        _save(path, "query_head", {"net": self.net}, self.meta)

    @classmethod
    def load(cls, path: str | Path) -> "QueryHead":
        nets, meta = _load(path, "query_head")
        return cls(nets["net"], meta)
