from .artifacts import build_reference_handles, load_artifacts, train_reference
from .loop import (
    EpochLog,
    TrainConfig,
    TrainedArtifacts,
    TrainingDiverged,
    generated_embedding,
    token_budgets,
    train,
)
from .losses import MixingWeight, hybrid_loss, semantic_loss
from .reference import BagOfEmbeddingsEncoder, ModelConfig, ReferenceGenerator
from .vocab import Vocabulary

__all__ = [
    "BagOfEmbeddingsEncoder",
    "EpochLog",
    "MixingWeight",
    "ModelConfig",
    "ReferenceGenerator",
    "TrainConfig",
    "TrainedArtifacts",
    "TrainingDiverged",
    "Vocabulary",
    "build_reference_handles",
    "generated_embedding",
    "hybrid_loss",
    "load_artifacts",
    "semantic_loss",
    "token_budgets",
    "train",
    "train_reference",
]
