"""Hierarchy-aware differential privacy for graph learning on the Poincare ball."""

__version__ = "0.1.0"

from .backend import active_backend
from .data import GraphDataset, SplitSpec, SyntheticSpec, gen_synthetic, load_dataset
from .embedding import EmbedConfig, EmbeddingTable, train_poincare_embedding
from .gnn import ModelParams, TrainConfig, train_poindp
from .privacy import (
    PrivacyBudget,
    SensitivityPair,
    calibrate_sigma,
    generate_hierarchy_noise,
    privacy_audit_1d,
    wrapped_gaussian_density,
    wrapped_gaussian_sample,
)

__all__ = [
    "__version__",
    "active_backend",
    "GraphDataset",
    "SplitSpec",
    "SyntheticSpec",
    "gen_synthetic",
    "load_dataset",
    "EmbedConfig",
    "EmbeddingTable",
    "train_poincare_embedding",
    "ModelParams",
    "TrainConfig",
    "train_poindp",
    "PrivacyBudget",
    "SensitivityPair",
    "calibrate_sigma",
    "generate_hierarchy_noise",
    "privacy_audit_1d",
    "wrapped_gaussian_density",
    "wrapped_gaussian_sample",
]
