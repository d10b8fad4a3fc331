"""Knowledge-graph embedding with block-rotation + translation relation matrices."""

from .data import (
    RelationClass,
    TripleStore,
    Vocab,
    classify_relations,
    entity_frequency,
    load_dataset,
    load_triples,
)
from .evaluation import EvalReport, evaluate, filtered_rank
from .model import (
    EmbeddingTable,
    RelationParams,
    ScoreGradient,
    apply_translation_matrix,
    init_embeddings,
    materialize_star_matrix,
    score,
    score_batch,
    score_gradients,
)
from .regularization import RegConfig, dura_penalty, fro_penalty
from .training import TrainConfig, adagrad_update, batch_loss, tail_weight, train

__version__ = "0.1.0"

__all__ = [
    "EmbeddingTable",
    "EvalReport",
    "RegConfig",
    "RelationClass",
    "RelationParams",
    "ScoreGradient",
    "TrainConfig",
    "TripleStore",
    "Vocab",
    "adagrad_update",
    "apply_translation_matrix",
    "batch_loss",
    "classify_relations",
    "dura_penalty",
    "entity_frequency",
    "evaluate",
    "filtered_rank",
    "fro_penalty",
    "init_embeddings",
    "load_dataset",
    "load_triples",
    "materialize_star_matrix",
    "score",
    "score_batch",
    "score_gradients",
    "tail_weight",
    "train",
]
