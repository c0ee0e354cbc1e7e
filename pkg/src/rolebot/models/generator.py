"""Windowed feed-forward language model with MLE + unlikelihood training.

The generator scores the next token from the concatenated embeddings of the
previous `context_window` tokens through one tanh hidden layer. Gradients
are hand-derived and exposed alongside every loss so they can be checked
against finite differences.

Losses, per response position t with model distribution p over the
vocabulary:
  positive (MLE):        -log p(y_t)
  negative (unlikelihood): -log(1 - p(y_t))
The mixed objective is mean-per-example MLE over positives plus
alpha * mean-per-example unlikelihood over negatives, so alpha is
independent of batch composition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..corpus import Label, TrainingExample, Turn
from ..synthesis import LMBackend, SamplingParams
from .encoding import encode_history
from .vocab import Vocabulary

# keep 1 - p away from zero in the unlikelihood loss
_P_CLAMP = 1e-7


@dataclass
class LossConfig:
    """Mixing weight for the unlikelihood term."""

    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass
class GeneratorConfig:
    embed_dim: int = 16
    hidden_dim: int = 32
    context_window: int = 8
    max_turns: int = 10
    max_tokens: int = 256
    learning_rate: float = 0.1
    epochs: int = 30
    seed: int = 0


class GeneratorModel:
    """Trainable toy causal LM over a word vocabulary."""

    kind = "generator"

    def __init__(self, vocab: Vocabulary, cfg: GeneratorConfig):
        self.vocab = vocab
        self.cfg = cfg
        self.training_seed = cfg.seed
        rng = np.random.default_rng(cfg.seed)
        V, d, h, w = len(vocab), cfg.embed_dim, cfg.hidden_dim, cfg.context_window
        scale = 0.1
        self.E = rng.normal(0.0, scale, (V, d))
        self.W1 = rng.normal(0.0, scale, (h, w * d))
        self.b1 = np.zeros(h)
        self.W2 = rng.normal(0.0, scale, (V, h))
        self.b2 = np.zeros(V)

    # --- flat parameter vector (finite-difference friendly) ----------------

    def _arrays(self):
        return [self.E, self.W1, self.b1, self.W2, self.b2]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self._arrays())

    def get_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays()])

    def set_params(self, flat: np.ndarray) -> None:
        offset = 0
        for a in self._arrays():
            a[...] = flat[offset : offset + a.size].reshape(a.shape)
            offset += a.size

    def check_finite(self) -> None:
        from ..errors import DivergedTraining

        for a in self._arrays():
            if not np.all(np.isfinite(a)):
                raise DivergedTraining("non-finite parameter after training step")

    # --- forward -----------------------------------------------------------

    def _prefix_ids(self, history: list[Turn]) -> list[int]:
        ids = encode_history(
            history, self.vocab, self.cfg.max_turns, self.cfg.max_tokens
        ).ids
        if history:
            ids = ids + [self.vocab.sep_id]
        return ids + [self.vocab.sys_id]

    def _response_ids(self, text: str) -> list[int]:
        from ..errors import EmptyResponse

        ids = self.vocab.encode_words(text)
        if not ids:
            raise EmptyResponse("response encodes to zero tokens")
        return ids + [self.vocab.eos_id]

    def _contexts(self, seq: list[int], start: int) -> np.ndarray:
        """Window of the last `context_window` ids before each position >= start."""
        w = self.cfg.context_window
        padded = [self.vocab.pad_id] * w + seq
        return np.array(
            [padded[t : t + w] for t in range(start, len(seq))], dtype=np.int64
        )

    def _forward(self, ctx: np.ndarray):
        """Batched forward over T positions: returns probs (T, V) and cache."""
        T, w = ctx.shape
        X = self.E[ctx.ravel()].reshape(T, w * self.cfg.embed_dim)
        Z = np.tanh(X @ self.W1.T + self.b1)
        logits = Z @ self.W2.T + self.b2
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        P = expl / expl.sum(axis=1, keepdims=True)
        return P, (ctx, X, Z)

    def _backward(self, dlogits: np.ndarray, cache) -> np.ndarray:
        ctx, X, Z = cache
        gW2 = dlogits.T @ Z
        gb2 = dlogits.sum(axis=0)
        dZ = (dlogits @ self.W2) * (1.0 - Z * Z)
        gW1 = dZ.T @ X
        gb1 = dZ.sum(axis=0)
        dX = dZ @ self.W1  # (T, w*d)
        gE = np.zeros_like(self.E)
        d = self.cfg.embed_dim
        T, w = ctx.shape
        np.add.at(gE, ctx.ravel(), dX.reshape(T * w, d))
        return np.concatenate(
            [gE.ravel(), gW1.ravel(), gb1.ravel(), gW2.ravel(), gb2.ravel()]
        )

    def next_token_probs(self, seq: list[int]) -> np.ndarray:
        w = self.cfg.context_window
        padded = [self.vocab.pad_id] * w + seq
        ctx = np.array([padded[len(seq) : len(seq) + w]], dtype=np.int64)
        P, _ = self._forward(ctx)
        return P[0]

    def sequence_nll(self, history: list[Turn], response_text: str) -> tuple[float, int]:
        """Sum of -log p over response tokens (incl. EOS) and the token count."""
        prefix = self._prefix_ids(history)
        targets = self._response_ids(response_text)
        seq = prefix + targets
        ctx = self._contexts(seq, len(prefix))
        P, _ = self._forward(ctx)
        probs = P[np.arange(len(targets)), targets]
        nll = float(-np.log(np.maximum(probs, 1e-300)).sum())
        return nll, len(targets)


def _loss_and_grad(
    model: GeneratorModel, history: list[Turn], response_text: str, negative: bool
) -> tuple[float, np.ndarray]:
    prefix = model._prefix_ids(history)
    targets = np.array(model._response_ids(response_text), dtype=np.int64)
    seq = prefix + targets.tolist()
    ctx = model._contexts(seq, len(prefix))
    P, cache = model._forward(ctx)
    T = len(targets)
    rows = np.arange(T)
    pk = P[rows, targets]
    if negative:
        pk_cl = np.minimum(pk, 1.0 - _P_CLAMP)
        loss = float(-np.log1p(-pk_cl).sum())
        # d(-log(1-p_k))/dlogit_j = p_k (delta_jk - p_j) / (1 - p_k)
        coef = pk_cl / (1.0 - pk_cl)
        dlogits = -coef[:, None] * P
        dlogits[rows, targets] += coef * 1.0
        # note: e_k term gives coef * (1) at j=k combined with -coef*p_k above
    else:
        loss = float(-np.log(np.maximum(pk, 1e-300)).sum())
        dlogits = P.copy()
        dlogits[rows, targets] -= 1.0
    grad = model._backward(dlogits, cache)
    return loss, grad


def mle_loss(
    model: GeneratorModel, history: list[Turn], response: Turn | str
) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of the gold response, with gradient."""
    text = response.text if isinstance(response, Turn) else response
    return _loss_and_grad(model, history, text, negative=False)


def ul_loss(
    model: GeneratorModel, history: list[Turn], negative_response: Turn | str
) -> tuple[float, np.ndarray]:
    """Unlikelihood loss of a negative response, with gradient."""
    text = (
        negative_response.text
        if isinstance(negative_response, Turn)
        else negative_response
    )
    return _loss_and_grad(model, history, text, negative=True)


def mixed_loss(
    model: GeneratorModel,
    positives: Sequence[TrainingExample],
    negatives: Sequence[TrainingExample],
    cfg: LossConfig,
) -> tuple[float, np.ndarray]:
    """Mean-per-example MLE over positives + alpha * mean UL over negatives."""
    if not positives:
        raise ValueError("mixed_loss requires at least one positive example")
    total = 0.0
    grad = np.zeros(model.n_params)
    for ex in positives:
        l, g = mle_loss(model, ex.history, ex.response)
        total += l / len(positives)
        grad += g / len(positives)
    if negatives and cfg.alpha > 0:
        for ex in negatives:
            l, g = ul_loss(model, ex.history, ex.response)
            total += cfg.alpha * l / len(negatives)
            grad += cfg.alpha * g / len(negatives)
    return total, grad


def build_vocabulary(examples: Sequence[TrainingExample], min_freq: int = 1) -> Vocabulary:
    texts = []
    for ex in examples:
        texts.extend(t.text for t in ex.history)
        texts.append(ex.response.text)
    return Vocabulary.build(texts, min_freq=min_freq)


def generator_train(
    positives: Sequence[TrainingExample],
    negatives: Sequence[TrainingExample],
    cfg: GeneratorConfig,
    loss_cfg: Optional[LossConfig] = None,
    vocab: Optional[Vocabulary] = None,
) -> GeneratorModel:
    """SGD on the mixed objective; bit-reproducible given the config seed."""
    from ..errors import DivergedTraining

    if not positives:
        raise ValueError("generator_train requires positive examples")
    loss_cfg = loss_cfg or LossConfig()
    if vocab is None:
        vocab = build_vocabulary(list(positives) + list(negatives))
    model = GeneratorModel(vocab, cfg)
    rng = np.random.default_rng(cfg.seed)
    items: list[tuple[TrainingExample, bool]] = [(ex, False) for ex in positives]
    if loss_cfg.alpha > 0:
        items += [(ex, True) for ex in negatives]
    for _ in range(cfg.epochs):
        order = rng.permutation(len(items))
        for idx in order:
            ex, is_neg = items[idx]
            loss, grad = _loss_and_grad(model, ex.history, ex.response.text, is_neg)
            if not np.isfinite(loss):
                raise DivergedTraining("loss is not finite")
            step = cfg.learning_rate * (loss_cfg.alpha if is_neg else 1.0)
            model.set_params(model.get_params() - step * grad)
        model.check_finite()
    return model


def _nucleus_sample(p: np.ndarray, nucleus_p: float, rng: np.random.Generator) -> int:
    order = np.argsort(-p, kind="stable")
    sorted_p = p[order]
    cum = np.cumsum(sorted_p)
    cut = int(np.searchsorted(cum, nucleus_p) + 1)
    keep = order[:cut]
    kp = p[keep]
    kp = kp / kp.sum()
    return int(rng.choice(keep, p=kp))


def generator_respond(
    model: GeneratorModel, history: list[Turn], params: SamplingParams
) -> str:
    """Decode a system response with temperature + nucleus sampling."""
    vocab = model.vocab
    rng = np.random.default_rng(params.seed if params.seed is not None else 0)
    seq = model._prefix_ids(history)
    banned = {vocab.pad_id, vocab.unk_id, vocab.bos_id, vocab.sep_id,
              vocab.sys_id, vocab.usr_id}
    out: list[str] = []
    for _ in range(params.max_tokens):
        p = model.next_token_probs(seq)
        for b in banned:
            p[b] = 0.0
        if params.temperature != 1.0:
            logp = np.log(np.maximum(p, 1e-300)) / params.temperature
            logp -= logp.max()
            p = np.exp(logp)
            p[list(banned)] = 0.0
        p = p / p.sum()
        tok = _nucleus_sample(p, params.nucleus_p, rng)
        if tok == vocab.eos_id:
            break
        out.append(vocab.token(tok))
        seq.append(tok)
    return " ".join(out)


def measure_ppl(
    model: GeneratorModel, examples: Sequence[TrainingExample]
) -> float:
    """Corpus-level perplexity: exp(total NLL / total response tokens)."""
    if not examples:
        raise ValueError("measure_ppl requires at least one example")
    total_nll = 0.0
    total_tokens = 0
    for ex in examples:
        nll, n = model.sequence_nll(ex.history, ex.response.text)
        total_nll += nll
        total_tokens += n
    return float(np.exp(total_nll / total_tokens))


class _GeneratorBackend(LMBackend):
    """LMBackend adapter over a trained toy generator.

    Treats prompt/context text as a flat token stream; continuation logprobs
    come from the model's own next-token distribution.
    """

    def __init__(self, model: GeneratorModel):
        self.model = model

    def _flat_ids(self, text: str) -> list[int]:
        return [self.model.vocab.bos_id] + self.model.vocab.encode_words(text)

    def complete(self, prompt: str, params: SamplingParams) -> str:
        vocab = self.model.vocab
        rng = np.random.default_rng(params.seed if params.seed is not None else 0)
        seq = self._flat_ids(prompt)
        banned = {vocab.pad_id, vocab.unk_id, vocab.bos_id}
        out: list[str] = []
        for _ in range(params.max_tokens):
            p = self.model.next_token_probs(seq)
            for b in banned:
                p[b] = 0.0
            p = p / p.sum()
            tok = _nucleus_sample(p, params.nucleus_p, rng)
            if tok == vocab.eos_id:
                break
            out.append(vocab.token(tok))
            seq.append(tok)
        return " ".join(out)

    def token_logprobs(self, context: str, continuation: str):
        vocab = self.model.vocab
        seq = self._flat_ids(context)
        entries = []
        for tok in continuation.split():
            tid = vocab.id(tok.lower())
            p = self.model.next_token_probs(seq)
            entries.append((tok, float(np.log(max(p[tid], 1e-300)))))
            seq.append(tid)
        return entries


def generator_backend(model: GeneratorModel) -> LMBackend:
    return _GeneratorBackend(model)
