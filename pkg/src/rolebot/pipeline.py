"""Serving policies composing the trained models.

Retrieve-fail-generate: retrieve top-k candidates, rerank, score each with
an uncertainty detector (MC-Dropout mean-minus-variance, or negated LM
perplexity so one higher-is-better thresholding rule serves both). If the
best score clears the threshold the candidate is served verbatim; otherwise
the generator answers.

Detect-and-discard: generate, censor with the out-of-bounds classifier, and
on rejection serve the pre-defined fallback question with the lowest
perplexity in context.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .corpus import Speaker, Turn
from .errors import ModelMissing
from .models.classifier import ClassifierModel, classifier_score
from .models.generator import GeneratorModel, generator_backend, generator_respond
from .models.retrieval import (
    RerankerModel,
    RetrieverModel,
    ScoredCandidate,
    mc_dropout_score,
    rerank,
    retrieve,
)
from .synthesis import LMBackend, SamplingParams, ppl


class UnanswerableMethod(str, Enum):
    MC_DROPOUT = "mc_dropout"
    PPL = "ppl"


class Route(str, Enum):
    RETRIEVAL = "retrieval"
    GENERATION = "generation"
    FALLBACK_QUESTION = "fallback_question"


@dataclass
class PipelineConfig:
    top_k: int = 20
    unanswerable_method: UnanswerableMethod = UnanswerableMethod.MC_DROPOUT
    threshold: float = 0.0
    fallback_questions: list[str] = field(default_factory=lambda: ["How have you been lately?"])
    response_candidates: list[str] = field(default_factory=list)
    classifier_threshold: float = 0.5
    mc_dropout_passes: int = 10
    sampling: SamplingParams = field(default_factory=lambda: SamplingParams(max_tokens=32))

    def __post_init__(self):
        if not self.fallback_questions:
            raise ValueError("fallback_questions must be non-empty")
        if not 0 < self.classifier_threshold < 1:
            raise ValueError("classifier_threshold must be in (0, 1)")


@dataclass
class PipelineDecision:
    response: str
    route: Route
    diagnostics: dict


@dataclass
class ModelsBundle:
    retriever: Optional[RetrieverModel] = None
    reranker: Optional[RerankerModel] = None
    generator: Optional[GeneratorModel] = None
    classifier: Optional[ClassifierModel] = None
    lm_backend: Optional[LMBackend] = None

    def backend(self) -> LMBackend:
        if self.lm_backend is not None:
            return self.lm_backend
        if self.generator is not None:
            return generator_backend(self.generator)
        raise ModelMissing("no LM backend and no generator to adapt")


def _history_text(history: Sequence[Turn]) -> str:
    parts = []
    for t in history:
        marker = "AI:" if t.speaker is Speaker.SYSTEM else "User:"
        parts.append(f"{marker} {t.text}")
    return "\n".join(parts)


def _generate(bundle: ModelsBundle, history: list[Turn], cfg: PipelineConfig,
              request_seed: int) -> str:
    params = SamplingParams(
        temperature=cfg.sampling.temperature,
        nucleus_p=cfg.sampling.nucleus_p,
        max_tokens=cfg.sampling.max_tokens,
        stop_sequences=list(cfg.sampling.stop_sequences),
        seed=request_seed,
    )
    return generator_respond(bundle.generator, history, params)


def respond_rfg(
    history: list[Turn],
    bundle: ModelsBundle,
    cfg: PipelineConfig,
    request_seed: int = 0,
    excluded_candidates: Sequence[str] = (),
    force_generation: bool = False,
) -> PipelineDecision:
    """Retrieve-fail-generate decision for one dialogue history.

    `excluded_candidates` removes rejected responses from this turn's pool;
    `force_generation` routes past retrieval entirely (used by the feedback
    Fix loop, which must not re-serve a rejected retrieval).
    """
    if bundle.retriever is None or bundle.reranker is None or bundle.generator is None:
        raise ModelMissing("respond_rfg needs retriever, reranker, and generator")
    candidates = [c for c in cfg.response_candidates if c not in set(excluded_candidates)]
    diagnostics: dict = {
        "method": cfg.unanswerable_method.value,
        "threshold": cfg.threshold,
        "candidates": [],
        "excluded": list(excluded_candidates),
    }
    best: Optional[ScoredCandidate] = None
    if candidates and not force_generation:
        k = min(cfg.top_k, len(candidates))
        retrieved = retrieve(bundle.retriever, history, candidates, k)
        reranked = rerank(bundle.reranker, history, retrieved)
        for i, cand in enumerate(reranked):
            if cfg.unanswerable_method is UnanswerableMethod.MC_DROPOUT:
                score, samples = mc_dropout_score(
                    bundle.reranker,
                    history,
                    cand.text,
                    m=cfg.mc_dropout_passes,
                    seed=request_seed * 10_007 + i,
                )
                cand.uncertainty_score = score
                diagnostics.setdefault("mc_samples", []).append(samples.samples)
            else:
                context = _history_text(history)
                cand.ppl = ppl(bundle.backend(), context, cand.text)
                cand.uncertainty_score = -cand.ppl
        for cand in reranked:
            diagnostics["candidates"].append(
                {
                    "index": cand.index,
                    "text": cand.text,
                    "retriever_score": cand.retriever_score,
                    "reranker_score": cand.reranker_score,
                    "uncertainty_score": cand.uncertainty_score,
                    "ppl": cand.ppl,
                }
            )
        best = max(
            reranked, key=lambda c: (c.uncertainty_score, -c.index), default=None
        )
    if best is not None and best.uncertainty_score >= cfg.threshold:
        diagnostics["best_score"] = best.uncertainty_score
        return PipelineDecision(
            response=best.text, route=Route.RETRIEVAL, diagnostics=diagnostics
        )
    if best is not None:
        diagnostics["best_score"] = best.uncertainty_score
    response = _generate(bundle, history, cfg, request_seed)
    return PipelineDecision(
        response=response, route=Route.GENERATION, diagnostics=diagnostics
    )


def respond_detect_discard(
    history: list[Turn],
    generator: GeneratorModel,
    classifier: ClassifierModel,
    cfg: PipelineConfig,
    backend: LMBackend,
    request_seed: int = 0,
) -> PipelineDecision:
    """Generate, censor with the classifier, fall back to the lowest-PPL
    pre-defined question on rejection (ties break by list order)."""
    if generator is None or classifier is None:
        raise ModelMissing("respond_detect_discard needs a generator and a classifier")
    params = SamplingParams(
        temperature=cfg.sampling.temperature,
        nucleus_p=cfg.sampling.nucleus_p,
        max_tokens=cfg.sampling.max_tokens,
        seed=request_seed,
    )
    candidate = generator_respond(generator, history, params)
    prob = classifier_score(classifier, history, candidate)
    diagnostics: dict = {
        "generated": candidate,
        "classifier_probability": prob,
        "classifier_threshold": cfg.classifier_threshold,
    }
    if prob >= cfg.classifier_threshold:
        return PipelineDecision(
            response=candidate, route=Route.GENERATION, diagnostics=diagnostics
        )
    context = _history_text(history)
    ppls = [ppl(backend, context, q) for q in cfg.fallback_questions]
    diagnostics["fallback_ppls"] = ppls
    best_idx = min(range(len(ppls)), key=lambda i: (ppls[i], i))
    return PipelineDecision(
        response=cfg.fallback_questions[best_idx],
        route=Route.FALLBACK_QUESTION,
        diagnostics=diagnostics,
    )


def routing_report(decisions: Sequence[PipelineDecision]) -> dict[str, float]:
    """Per-route response proportions; they sum to 1."""
    if not decisions:
        raise ValueError("routing_report needs at least one decision")
    counts = {route.value: 0 for route in Route}
    for d in decisions:
        counts[d.route.value] += 1
    total = len(decisions)
    return {route: n / total for route, n in counts.items()}
