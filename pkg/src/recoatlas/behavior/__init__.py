"""Co-purchase graph and the behavior-aligned heads (complementarity pair, query head)."""

from .heads import ProjectionPair, QueryHead
from .losses import bpr_loss, infonce_loss
from .ppmi import CoPurchaseCounts, PpmiGraph, build_ppmi_graph, extract_copurchase_pairs
from .training import (
    TrainConfig,
    complement_recall_at_k,
    sample_negatives_relevance,
    train_complementarity,
    train_query_head,
)

__all__ = [
    "CoPurchaseCounts",
    "PpmiGraph",
    "ProjectionPair",
    "QueryHead",
    "TrainConfig",
    "bpr_loss",
    "build_ppmi_graph",
    "complement_recall_at_k",
    "extract_copurchase_pairs",
    "infonce_loss",
    "sample_negatives_relevance",
    "train_complementarity",
    "train_query_head",
]
