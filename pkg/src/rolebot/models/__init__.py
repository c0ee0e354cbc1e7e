"""Desk-scale trainable models and scoring math.

The architectures are deliberately tiny (bag-of-embeddings towers, a single
hidden layer scorer with dropout, a windowed feed-forward language model) so
every training run finishes in seconds on a CPU while preserving the full
interface: encode -> train -> score, MC-Dropout uncertainty, and the
MLE + unlikelihood generator objective.
"""

from .vocab import Vocabulary, tokenize
from .encoding import EncodedContext, encode_history, encode_text
from .generator import (
    GeneratorConfig,
    GeneratorModel,
    LossConfig,
    build_vocabulary,
    generator_backend,
    generator_respond,
    generator_train,
    measure_ppl,
    mixed_loss,
    mle_loss,
    ul_loss,
)
from .retrieval import (
    PredictiveSampleSet,
    RerankerConfig,
    RerankerModel,
    RetrieverConfig,
    RetrieverModel,
    ScoredCandidate,
    mc_dropout_score,
    rerank,
    reranker_train,
    retrieve,
    retriever_train,
    unanswerable,
)
from .classifier import ClassifierConfig, ClassifierModel, classifier_score, classifier_train
from .io import load_model, save_model

__all__ = [
    "Vocabulary",
    "tokenize",
    "EncodedContext",
    "encode_history",
    "encode_text",
    "GeneratorConfig",
    "GeneratorModel",
    "LossConfig",
    "build_vocabulary",
    "generator_backend",
    "generator_respond",
    "generator_train",
    "measure_ppl",
    "mixed_loss",
    "mle_loss",
    "ul_loss",
    "PredictiveSampleSet",
    "RerankerConfig",
    "RerankerModel",
    "RetrieverConfig",
    "RetrieverModel",
    "ScoredCandidate",
    "mc_dropout_score",
    "rerank",
    "reranker_train",
    "retrieve",
    "retriever_train",
    "unanswerable",
    "ClassifierConfig",
    "ClassifierModel",
    "classifier_score",
    "classifier_train",
    "load_model",
    "save_model",
]
