"""Knowledge-grounded multiple-choice QA with KG retrieval and deep
text/graph fusion."""

from .context import (
    ContextConfig,
    EmbeddingTable,
    PseudoEncoder,
    RetrievedContext,
    ScoredTriplet,
    TableEncoder,
    build_context,
    cosine,
    linearize_triplet,
    score_triplet,
    select_top_k,
)
from .data import Example, load_dataset, make_synthetic_task
from .estimator import QAFusionClassifier
from .kg import (
    KGError,
    KnowledgeGraph,
    RelationStats,
    TemplateTable,
    Triplet,
    load_bundle,
    load_templates,
    load_triples,
    relation_stats,
)
from .model import FusionModel, ModelConfig
from .retrieval import SeedSet, Subgraph, cap_subgraph, ground_entities, retrieve_subgraph
from .training import Metrics, TrainConfig, evaluate, prepare_examples, run_ablation, train

__all__ = [
    "ContextConfig", "EmbeddingTable", "PseudoEncoder", "RetrievedContext",
    "ScoredTriplet", "TableEncoder", "build_context", "cosine",
    "linearize_triplet", "score_triplet", "select_top_k",
    "Example", "load_dataset", "make_synthetic_task",
    "QAFusionClassifier",
    "KGError", "KnowledgeGraph", "RelationStats", "TemplateTable", "Triplet",
    "load_bundle", "load_templates", "load_triples", "relation_stats",
    "FusionModel", "ModelConfig",
    "SeedSet", "Subgraph", "cap_subgraph", "ground_entities", "retrieve_subgraph",
    "Metrics", "TrainConfig", "evaluate", "prepare_examples", "run_ablation", "train",
]
