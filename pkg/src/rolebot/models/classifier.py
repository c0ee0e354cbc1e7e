"""Out-of-bounds detection: binary classifier over (history, response) pairs.

Input encoding concatenates the encoded history and the encoded response,
with a learned segment vector marking the response side. Trained with binary
cross-entropy on positive (in-bounds) vs negative (out-of-bounds) examples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..corpus import TrainingExample, Turn
from ..errors import DivergedTraining, EmptyClass
from .pair_scorer import PairScorer, PairScorerConfig
from .vocab import Vocabulary


@dataclass
class ClassifierConfig(PairScorerConfig):
    epochs: int = 20


class ClassifierModel(PairScorer):
    kind = "classifier"

    def __init__(self, vocab: Vocabulary, cfg: ClassifierConfig):
        super().__init__(vocab, cfg, use_segment=True)
        self.cfg: ClassifierConfig = cfg


def classifier_score(
    model: ClassifierModel, history: list[Turn], response: Turn | str
) -> float:
    """P(in-bounds) of a candidate response, dropout off."""
    text = response.text if isinstance(response, Turn) else response
    f = model.features(model.history_ids(history), model.response_ids(text))
    s, _ = model.forward(f)
    return float(1.0 / (1.0 + np.exp(-s)))


def classifier_train(
    positives: Sequence[TrainingExample],
    negatives: Sequence[TrainingExample],
    cfg: ClassifierConfig,
    vocab: Optional[Vocabulary] = None,
) -> ClassifierModel:
    """Binary cross-entropy SGD; deterministic given the config seed."""
    if not positives or not negatives:
        raise EmptyClass("classifier training needs both classes non-empty")
    if vocab is None:
        texts = []
        for ex in list(positives) + list(negatives):
            texts.extend(t.text for t in ex.history)
            texts.append(ex.response.text)
        vocab = Vocabulary.build(texts)
    model = ClassifierModel(vocab, cfg)
    items = [(ex, 1.0) for ex in positives] + [(ex, 0.0) for ex in negatives]
    hist_cache = [model.history_ids(ex.history) for ex, _ in items]
    resp_cache = [model.response_ids(ex.response.text) for ex, _ in items]
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(items))
        for i in order:
            _, y = items[i]
            f = model.features(hist_cache[i], resp_cache[i])
            mask = model.dropout_mask(rng) if cfg.dropout > 0 else None
            s, cache = model.forward(f, mask)
            p = 1.0 / (1.0 + np.exp(-s))
            loss = -(y * np.log(max(p, 1e-300)) + (1 - y) * np.log(max(1 - p, 1e-300)))
            if not np.isfinite(loss):
                raise DivergedTraining("classifier loss is not finite")
            grads = model.zero_grads()
            model.backward(p - y, cache, grads)
            df = grads.pop("_df")[0]
            model.scatter_feature_grad(df, hist_cache[i], resp_cache[i], grads)
            model.apply_grads(grads, cfg.learning_rate)
        model.check_finite()
    return model
