"""Shared single-hidden-layer scorer over (history, response) pairs.

Both the reranker and the out-of-bounds classifier embed the history and the
candidate response as mean bags of embeddings, concatenate them together with
their elementwise product (an explicit matching signal), and score through
one tanh hidden layer with (inverted) dropout. The classifier adds a learned
segment vector to the response half so the net can tell which side of the
pair a token came from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import Turn
from .encoding import encode_history, encode_text
from .vocab import Vocabulary


@dataclass
class PairScorerConfig:
    embed_dim: int = 16
    hidden_dim: int = 32
    dropout: float = 0.2
    learning_rate: float = 0.05
    epochs: int = 10
    max_turns: int = 10
    max_tokens: int = 256
    seed: int = 0


class PairScorer:
    """Parameters and forward/backward passes; training loops live in callers."""

    def __init__(self, vocab: Vocabulary, cfg: PairScorerConfig, use_segment: bool):
        self.vocab = vocab
        self.cfg = cfg
        self.use_segment = use_segment
        self.training_seed = cfg.seed
        rng = np.random.default_rng(cfg.seed)
        V, d, h = len(vocab), cfg.embed_dim, cfg.hidden_dim
        scale = 0.1
        self.E = rng.normal(0.0, scale, (V, d))
        self.seg = np.zeros(d) if use_segment else None
        self.W1 = rng.normal(0.0, scale, (h, 3 * d))
        self.b1 = np.zeros(h)
        self.w2 = rng.normal(0.0, scale, h)
        self.b2 = 0.0
        # weight of the direct ctx . resp matching term; starting at 1 makes
        # word-overlap matching expressible before any training
        self.u = 1.0

    def _arrays(self):
        arrays = [self.E, self.W1, self.b1, self.w2]
        if self.use_segment:
            arrays.insert(1, self.seg)
        return arrays

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self._arrays()) + 1  # + scalar bias

    def check_finite(self) -> None:
        from ..errors import DivergedTraining

        for a in self._arrays():
            if not np.all(np.isfinite(a)):
                raise DivergedTraining("non-finite parameter after training step")
        if not np.isfinite(self.b2) or not np.isfinite(self.u):
            raise DivergedTraining("non-finite parameter after training step")

    # --- encoding ----------------------------------------------------------

    def history_ids(self, history: list[Turn]) -> list[int]:
        return encode_history(
            history, self.vocab, self.cfg.max_turns, self.cfg.max_tokens
        ).ids

    def response_ids(self, text: str) -> list[int]:
        return encode_text(text, self.vocab)

    def _pooled(self, hist_ids: list[int], resp_ids: list[int]):
        d = self.cfg.embed_dim
        ctx = self.E[hist_ids].mean(axis=0) if hist_ids else np.zeros(d)
        resp = self.E[resp_ids].mean(axis=0) if resp_ids else np.zeros(d)
        if self.use_segment:
            resp = resp + self.seg
        return ctx, resp

    def features(self, hist_ids: list[int], resp_ids: list[int]) -> np.ndarray:
        ctx, resp = self._pooled(hist_ids, resp_ids)
        return np.concatenate([ctx, resp, ctx * resp])

    # --- forward / backward ------------------------------------------------

    def forward(self, f: np.ndarray, mask: np.ndarray | None = None):
        """Score a feature vector; `mask` enables inverted dropout."""
        d = self.cfg.embed_dim
        a = self.W1 @ f + self.b1
        h = np.tanh(a)
        if mask is not None:
            h_eff = h * mask / (1.0 - self.cfg.dropout)
        else:
            h_eff = h
        dot = float(f[:d] @ f[d : 2 * d])
        s = float(self.w2 @ h_eff + self.b2 + self.u * dot)
        return s, (f, h, mask)

    def dropout_mask(self, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(self.cfg.hidden_dim) >= self.cfg.dropout).astype(float)

    def backward(self, ds: float, cache, grads: dict) -> None:
        """Accumulate parameter gradients for one forward pass into `grads`."""
        f, h, mask = cache
        if mask is not None:
            scale = mask / (1.0 - self.cfg.dropout)
        else:
            scale = 1.0
        h_eff = h * scale
        grads["w2"] += ds * h_eff
        grads["b2"] += ds
        da = ds * self.w2 * scale * (1.0 - h * h)
        grads["W1"] += np.outer(da, f)
        grads["b1"] += da
        df = self.W1.T @ da
        d = self.cfg.embed_dim
        ctx, resp = f[:d], f[d : 2 * d]
        grads["u"] += ds * float(ctx @ resp)
        df[:d] += ds * self.u * resp
        df[d : 2 * d] += ds * self.u * ctx
        grads["_df"].append(df)

    def zero_grads(self) -> dict:
        g = {
            "E": np.zeros_like(self.E),
            "W1": np.zeros_like(self.W1),
            "b1": np.zeros_like(self.b1),
            "w2": np.zeros_like(self.w2),
            "b2": 0.0,
            "u": 0.0,
            "_df": [],
        }
        if self.use_segment:
            g["seg"] = np.zeros_like(self.seg)
        return g

    def scatter_feature_grad(
        self, df: np.ndarray, hist_ids: list[int], resp_ids: list[int], grads: dict
    ) -> None:
        d = self.cfg.embed_dim
        ctx, resp = self._pooled(hist_ids, resp_ids)
        d_prod = df[2 * d :]
        d_ctx = df[:d] + d_prod * resp
        d_resp = df[d : 2 * d] + d_prod * ctx
        if hist_ids:
            np.add.at(grads["E"], hist_ids, d_ctx / len(hist_ids))
        if resp_ids:
            np.add.at(grads["E"], resp_ids, d_resp / len(resp_ids))
        if self.use_segment:
            grads["seg"] += d_resp

    def apply_grads(self, grads: dict, lr: float) -> None:
        self.E -= lr * grads["E"]
        self.W1 -= lr * grads["W1"]
        self.b1 -= lr * grads["b1"]
        self.w2 -= lr * grads["w2"]
        self.b2 -= lr * grads["b2"]
        self.u -= lr * grads["u"]
        if self.use_segment:
            self.seg -= lr * grads["seg"]
