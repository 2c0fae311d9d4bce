"""Sequential recommender built on dual-graph inter-sequence encoders and a
GRU + personalized-attention intra-sequence encoder, trained end to end with
its own reverse-mode kernels."""

from issr.data import (
    InteractionLog,
    SplitDataset,
    TrainingInstance,
    build_eval_instances,
    build_training_instances,
    chronological_split,
    parse_interactions,
    sample_negatives,
)
from issr.estimator import ISSRRecommender
from issr.graphs import (
    BipartiteGraph,
    CoocGraph,
    build_bipartite,
    build_cooccurrence,
    sample_neighbors_importance,
    sample_neighbors_uniform,
)
from issr.metrics import MetricsReport, evaluate, rank_and_score
from issr.model import VARIANTS, ModelParams, select_variant
from issr.trainer import Checkpoint, TrainConfig, train

__all__ = [
    "InteractionLog",
    "SplitDataset",
    "TrainingInstance",
    "parse_interactions",
    "chronological_split",
    "build_training_instances",
    "build_eval_instances",
    "sample_negatives",
    "BipartiteGraph",
    "CoocGraph",
    "build_bipartite",
    "build_cooccurrence",
    "sample_neighbors_uniform",
    "sample_neighbors_importance",
    "MetricsReport",
    "rank_and_score",
    "evaluate",
    "VARIANTS",
    "ModelParams",
    "select_variant",
    "TrainConfig",
    "Checkpoint",
    "train",
    "ISSRRecommender",
]

__version__ = "0.1.0"
