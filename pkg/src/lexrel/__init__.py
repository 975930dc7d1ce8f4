"""Semantic-relation classification toolkit.

Trains and evaluates classifiers for lexical-semantic relations
(hypernymy, co-hyponymy, synonymy, meronymy vs. random) over concatenated
word-embedding pair features: a hard-parameter-sharing multi-task
network, a stratified self-learning loop, majority and logistic-regression
baselines, lexical train/test splitting, and taxonomy-based dataset
generation.
"""

from .data import EmbeddingTable, SplitBundle, WordPair, load_embeddings, load_pairs
from .metrics import accuracy, macro_f1
from .multitask import (
    MultiTaskModel,
    TaskData,
    TrainConfig,
    build_model,
    load_checkpoint,
    predict,
    save_checkpoint,
    train_multitask,
)
from .selflearn import SelfLearnConfig, self_learn, stratified_select

__version__ = "0.1.0"

__all__ = [
    "EmbeddingTable",
    "MultiTaskModel",
    "SelfLearnConfig",
    "SplitBundle",
    "TaskData",
    "TrainConfig",
    "WordPair",
    "accuracy",
    "build_model",
    "load_checkpoint",
    "load_embeddings",
    "load_pairs",
    "macro_f1",
    "predict",
    "save_checkpoint",
    "self_learn",
    "stratified_select",
    "train_multitask",
    "__version__",
]
