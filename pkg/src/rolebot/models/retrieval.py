"""Two-step response selection: fast two-tower retrieval, then reranking.

The retriever is a pair of bag-of-embeddings towers trained with in-batch
negatives; the reranker jointly scores (history, candidate) pairs and is
trained with one gold response against randomly sampled negatives. Test-time
dropout on the reranker yields a predictive sample set whose
mean-minus-variance is the uncertainty score used to detect contexts the
candidate pool cannot answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..corpus import TrainingExample, Turn
from ..errors import DivergedTraining, KTooLarge, NoDropoutConfigured
from .encoding import encode_history, encode_text
from .pair_scorer import PairScorer, PairScorerConfig
from .vocab import Vocabulary


@dataclass
class ScoredCandidate:
    """A candidate response with every score attached along the pipeline."""

    index: int
    text: str
    retriever_score: float
    reranker_score: Optional[float] = None
    uncertainty_score: Optional[float] = None
    ppl: Optional[float] = None


@dataclass
class PredictiveSampleSet:
    """Stochastic forward-pass scores from test-time dropout."""

    samples: list[float]

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ValueError("need m >= 2 samples for a meaningful variance")

    @property
    def m(self) -> int:
        return len(self.samples)

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def variance(self) -> float:
        # population variance: constant samples score exactly their value
        return float(np.var(self.samples))

    def score(self) -> float:
        return self.mean() - self.variance()


def s_d_from_samples(samples: Sequence[float]) -> float:
    """Mean minus population variance of a stochastic score sample set."""
    return PredictiveSampleSet(samples=list(samples)).score()


# --- retriever -------------------------------------------------------------


@dataclass
class RetrieverConfig:
    embed_dim: int = 32
    learning_rate: float = 0.2
    epochs: int = 20
    batch_size: int = 32
    max_turns: int = 10
    max_tokens: int = 256
    seed: int = 0


class RetrieverModel:
    """Two-tower mean-pooled embedding scorer (dot-product similarity)."""

    kind = "retriever"

    def __init__(self, vocab: Vocabulary, cfg: RetrieverConfig):
        self.vocab = vocab
        self.cfg = cfg
        self.training_seed = cfg.seed
        rng = np.random.default_rng(cfg.seed)
        V, d = len(vocab), cfg.embed_dim
        self.Ec = rng.normal(0.0, 0.1, (V, d))
        self.Er = rng.normal(0.0, 0.1, (V, d))

    def _arrays(self):
        return [self.Ec, self.Er]

    def encode_context(self, history: list[Turn]) -> np.ndarray:
        ids = encode_history(
            history, self.vocab, self.cfg.max_turns, self.cfg.max_tokens
        ).ids
        return self.Ec[ids].mean(axis=0)

    def encode_candidate(self, text: str) -> np.ndarray:
        ids = encode_text(text, self.vocab)
        if not ids:
            return np.zeros(self.cfg.embed_dim)
        return self.Er[ids].mean(axis=0)

    def score(self, history: list[Turn], candidate: str) -> float:
        return float(self.encode_context(history) @ self.encode_candidate(candidate))


def retriever_train(
    positives: Sequence[TrainingExample],
    cfg: RetrieverConfig,
    vocab: Optional[Vocabulary] = None,
) -> RetrieverModel:
    """Cross-entropy over in-batch similarity logits, SGD, deterministic."""
    if len(positives) < 2:
        raise ValueError("retriever_train needs at least 2 positives for in-batch negatives")
    if vocab is None:
        texts = []
        for ex in positives:
            texts.extend(t.text for t in ex.history)
            texts.append(ex.response.text)
        vocab = Vocabulary.build(texts)
    model = RetrieverModel(vocab, cfg)
    hist_ids = [
        encode_history(ex.history, vocab, cfg.max_turns, cfg.max_tokens).ids
        for ex in positives
    ]
    resp_ids = [encode_text(ex.response.text, vocab) or [vocab.unk_id] for ex in positives]
    rng = np.random.default_rng(cfg.seed)
    n = len(positives)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            if len(batch) < 2:
                continue
            C = np.stack([model.Ec[hist_ids[i]].mean(axis=0) for i in batch])
            R = np.stack([model.Er[resp_ids[i]].mean(axis=0) for i in batch])
            logits = C @ R.T
            logits -= logits.max(axis=1, keepdims=True)
            P = np.exp(logits)
            P /= P.sum(axis=1, keepdims=True)
            if not np.all(np.isfinite(P)):
                raise DivergedTraining("retriever softmax diverged")
            B = len(batch)
            dlogits = (P - np.eye(B)) / B
            dC = dlogits @ R
            dR = dlogits.T @ C
            gEc = np.zeros_like(model.Ec)
            gEr = np.zeros_like(model.Er)
            for row, i in enumerate(batch):
                np.add.at(gEc, hist_ids[i], dC[row] / len(hist_ids[i]))
                np.add.at(gEr, resp_ids[i], dR[row] / len(resp_ids[i]))
            model.Ec -= cfg.learning_rate * gEc
            model.Er -= cfg.learning_rate * gEr
    for a in model._arrays():
        if not np.all(np.isfinite(a)):
            raise DivergedTraining("non-finite retriever parameters")
    return model


def retrieve(
    model: RetrieverModel,
    history: list[Turn],
    candidates: Sequence[str],
    k: int,
) -> list[ScoredCandidate]:
    """Top-k candidates by similarity, ties broken by candidate id ascending."""
    if k > len(candidates):
        raise KTooLarge(f"k={k} exceeds {len(candidates)} candidates")
    ctx = model.encode_context(history)
    scored = [
        ScoredCandidate(index=i, text=c, retriever_score=float(ctx @ model.encode_candidate(c)))
        for i, c in enumerate(candidates)
    ]
    scored.sort(key=lambda s: (-s.retriever_score, s.index))
    return scored[:k]


# --- reranker --------------------------------------------------------------


@dataclass
class RerankerConfig(PairScorerConfig):
    n_negatives: int = 7


class RerankerModel(PairScorer):
    """Joint cross-encoding scorer f(history, candidate)."""

    kind = "reranker"

    def __init__(self, vocab: Vocabulary, cfg: RerankerConfig):
        super().__init__(vocab, cfg, use_segment=False)
        self.cfg: RerankerConfig = cfg

    def score(self, history: list[Turn], candidate: str) -> float:
        f = self.features(self.history_ids(history), self.response_ids(candidate))
        s, _ = self.forward(f)
        return s


def reranker_train(
    positives: Sequence[TrainingExample],
    cfg: RerankerConfig,
    vocab: Optional[Vocabulary] = None,
) -> RerankerModel:
    """Cross-entropy over (1 gold + n sampled negatives) score logits."""
    if len(positives) < 2:
        raise ValueError("reranker_train needs at least 2 positives to sample negatives")
    if vocab is None:
        texts = []
        for ex in positives:
            texts.extend(t.text for t in ex.history)
            texts.append(ex.response.text)
        vocab = Vocabulary.build(texts)
    model = RerankerModel(vocab, cfg)
    rng = np.random.default_rng(cfg.seed)
    n = len(positives)
    responses = [ex.response.text for ex in positives]
    hist_cache = [model.history_ids(ex.history) for ex in positives]
    resp_cache = [model.response_ids(r) for r in responses]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for i in order:
            neg_pool = [j for j in range(n) if j != i]
            k = min(cfg.n_negatives, len(neg_pool))
            negs = rng.choice(neg_pool, size=k, replace=False)
            cand_ids = [resp_cache[i]] + [resp_cache[j] for j in negs]
            scores = []
            caches = []
            for cid in cand_ids:
                f = model.features(hist_cache[i], cid)
                mask = model.dropout_mask(rng) if cfg.dropout > 0 else None
                s, cache = model.forward(f, mask)
                scores.append(s)
                caches.append(cache)
            scores = np.array(scores)
            scores -= scores.max()
            p = np.exp(scores)
            p /= p.sum()
            if not np.all(np.isfinite(p)):
                raise DivergedTraining("reranker softmax diverged")
            grads = model.zero_grads()
            for c_idx, cache in enumerate(caches):
                ds = p[c_idx] - (1.0 if c_idx == 0 else 0.0)
                model.backward(ds, cache, grads)
            for c_idx, df in enumerate(grads.pop("_df")):
                model.scatter_feature_grad(df, hist_cache[i], cand_ids[c_idx], grads)
            model.apply_grads(grads, cfg.learning_rate)
        model.check_finite()
    return model


def rerank(
    model: RerankerModel,
    history: list[Turn],
    candidates: Sequence[ScoredCandidate] | Sequence[str],
) -> list[ScoredCandidate]:
    """Attach reranker scores and sort by them (ties by candidate id)."""
    scored: list[ScoredCandidate] = []
    for i, c in enumerate(candidates):
        if isinstance(c, ScoredCandidate):
            sc = c
        else:
            sc = ScoredCandidate(index=i, text=c, retriever_score=float("nan"))
        sc.reranker_score = model.score(history, sc.text)
        scored.append(sc)
    scored.sort(key=lambda s: (-s.reranker_score, s.index))
    return scored


def mc_dropout_score(
    model: RerankerModel,
    history: list[Turn],
    candidate: str,
    m: int = 10,
    seed: int = 0,
) -> tuple[float, PredictiveSampleSet]:
    """Mean minus population variance of m stochastic forward passes."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if model.cfg.dropout <= 0:
        raise NoDropoutConfigured("reranker was built with dropout rate 0")
    rng = np.random.default_rng(seed)
    f = model.features(model.history_ids(history), model.response_ids(candidate))
    samples = []
    for _ in range(m):
        mask = model.dropout_mask(rng)
        s, _ = model.forward(f, mask)
        samples.append(s)
    sample_set = PredictiveSampleSet(samples=samples)
    return sample_set.score(), sample_set


def unanswerable(scores: Sequence[float], threshold: float) -> bool:
    """True iff every candidate score falls below the threshold.

    Scores are oriented higher-is-better; the perplexity method passes
    negated PPL so the same rule serves both detectors.
    """
    if not len(scores):
        raise ValueError("unanswerable needs at least one score")
    return max(scores) < threshold
