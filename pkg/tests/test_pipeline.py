"""Serving policies: retrieve-fail-generate, detect-and-discard, routing."""

import numpy as np
import pytest

import rolebot.pipeline as pipeline
from rolebot.errors import ModelMissing
from rolebot.models.retrieval import PredictiveSampleSet
from rolebot.pipeline import (
    ModelsBundle,
    PipelineConfig,
    PipelineDecision,
    Route,
    UnanswerableMethod,
    respond_detect_discard,
    respond_rfg,
    routing_report,
)
from rolebot.synthesis import SamplingParams, ScriptedBackend

from .conftest import make_turns


@pytest.fixture()
def bundle(trained_retriever, trained_reranker, trained_generator, trained_classifier):
    return ModelsBundle(
        retriever=trained_retriever,
        reranker=trained_reranker,
        generator=trained_generator,
        classifier=trained_classifier,
    )


def _config(**kw):
    defaults = dict(
        top_k=3,
        threshold=0.0,
        response_candidates=["hello how are you today", "did you sleep well last night",
                             "what did you eat for lunch", "how is your garden doing"],
        fallback_questions=["did you take a walk today"],
        sampling=SamplingParams(max_tokens=6),
    )
    defaults.update(kw)
    return PipelineConfig(**defaults)


def stub_scores(monkeypatch, mapping, default=0.0):
    """Replace MC-Dropout scoring with a fixed per-candidate score table."""

    def fake(model, history, candidate, m=10, seed=0):
        value = mapping.get(candidate, default)
        return value, PredictiveSampleSet(samples=[value, value])

    monkeypatch.setattr(pipeline, "mc_dropout_score", fake)


class TestConfig:
    def test_empty_fallbacks_rejected(self):
        with pytest.raises(ValueError):
            PipelineConfig(fallback_questions=[])

    def test_classifier_threshold_bounds(self):
        with pytest.raises(ValueError):
            PipelineConfig(classifier_threshold=0.0)
        with pytest.raises(ValueError):
            PipelineConfig(classifier_threshold=1.0)


class TestRespondRfg:
    def test_missing_models_rejected(self):
        with pytest.raises(ModelMissing):
            respond_rfg([], ModelsBundle(), _config())

    def test_above_threshold_serves_retrieval(self, bundle, monkeypatch):
        cfg = _config(threshold=0.5)
        stub_scores(monkeypatch, {"what did you eat for lunch": 0.9}, default=0.1)
        decision = respond_rfg(make_turns("hello", "hi"), bundle, cfg)
        assert decision.route is Route.RETRIEVAL
        assert decision.response == "what did you eat for lunch"

    def test_below_threshold_falls_to_generation(self, bundle, monkeypatch):
        cfg = _config(threshold=0.5)
        stub_scores(monkeypatch, {}, default=0.1)
        decision = respond_rfg(make_turns("hello", "hi"), bundle, cfg)
        assert decision.route is Route.GENERATION
        assert decision.diagnostics["best_score"] == pytest.approx(0.1)

    def test_exact_threshold_serves_retrieval(self, bundle, monkeypatch):
        cfg = _config(threshold=0.5)
        stub_scores(monkeypatch, {}, default=0.5)
        decision = respond_rfg(make_turns("hello", "hi"), bundle, cfg)
        assert decision.route is Route.RETRIEVAL

    def test_force_generation_skips_retrieval(self, bundle, monkeypatch):
        cfg = _config(threshold=-100.0)
        stub_scores(monkeypatch, {}, default=1.0)
        decision = respond_rfg(
            make_turns("hello", "hi"), bundle, cfg, force_generation=True
        )
        assert decision.route is Route.GENERATION
        assert decision.diagnostics["candidates"] == []

    def test_excluded_candidates_removed_from_pool(self, bundle, monkeypatch):
        cfg = _config(threshold=0.0)
        stub_scores(monkeypatch, {"what did you eat for lunch": 5.0}, default=1.0)
        decision = respond_rfg(
            make_turns("hello", "hi"),
            bundle,
            cfg,
            excluded_candidates=("what did you eat for lunch",),
        )
        assert decision.response != "what did you eat for lunch"
        texts = [c["text"] for c in decision.diagnostics["candidates"]]
        assert "what did you eat for lunch" not in texts

    def test_empty_candidate_pool_generates(self, bundle):
        cfg = _config(response_candidates=[])
        decision = respond_rfg(make_turns("hello", "hi"), bundle, cfg)
        assert decision.route is Route.GENERATION

    def test_ppl_method_uses_negated_perplexity(self, bundle):
        backend = ScriptedBackend([], logprob_table={"hello": -0.1}, default_logprob=-3.0)
        bundle.lm_backend = backend
        cfg = _config(
            unanswerable_method=UnanswerableMethod.PPL,
            threshold=-1000.0,
            response_candidates=["hello hello", "x y z"],
        )
        decision = respond_rfg(make_turns("hello", "hi"), bundle, cfg)
        assert decision.route is Route.RETRIEVAL
        # lowest perplexity candidate wins regardless of reranker order
        assert decision.response == "hello hello"
        for c in decision.diagnostics["candidates"]:
            assert c["uncertainty_score"] == pytest.approx(-c["ppl"])

    def test_deterministic_given_request_seed(self, bundle):
        cfg = _config(threshold=1e9)  # force generation route
        h = make_turns("hello", "hi")
        d1 = respond_rfg(h, bundle, cfg, request_seed=5)
        d2 = respond_rfg(h, bundle, cfg, request_seed=5)
        assert d1.response == d2.response

    def test_brute_force_threshold_rule(self, bundle, monkeypatch):
        """Randomized scores: route matches max(scores) >= threshold exactly."""
        rng = np.random.default_rng(0)
        h = make_turns("hello", "hi")
        for _ in range(200):
            scores = {c: float(rng.normal()) for c in _config().response_candidates}
            threshold = float(rng.normal())
            stub_scores(monkeypatch, scores)
            cfg = _config(threshold=threshold, top_k=len(scores))
            decision = respond_rfg(h, bundle, cfg)
            expected = Route.RETRIEVAL if max(scores.values()) >= threshold else Route.GENERATION
            assert decision.route is expected
            if decision.route is Route.RETRIEVAL:
                best = max(scores, key=lambda c: scores[c])
                assert decision.response == best

    def test_threshold_monotonicity(self, bundle, monkeypatch):
        """Raising the threshold never increases the retrieval share."""
        rng = np.random.default_rng(1)
        h = make_turns("hello", "hi")
        score_sets = [
            {c: float(rng.normal()) for c in _config().response_candidates}
            for _ in range(30)
        ]
        shares = []
        for threshold in np.linspace(-2.5, 2.5, 20):
            n_retrieval = 0
            for scores in score_sets:
                stub_scores(monkeypatch, scores)
                decision = respond_rfg(h, bundle, _config(threshold=float(threshold)))
                n_retrieval += decision.route is Route.RETRIEVAL
            shares.append(n_retrieval / len(score_sets))
        assert all(a >= b for a, b in zip(shares, shares[1:]))


class TestDetectDiscard:
    def test_accepted_generation_served(self, bundle, monkeypatch):
        monkeypatch.setattr(
            pipeline, "classifier_score", lambda model, h, c: 0.9
        )
        cfg = _config()
        decision = respond_detect_discard(
            make_turns("hello", "hi"), bundle.generator, bundle.classifier, cfg,
            ScriptedBackend([], default_logprob=-1.0),
        )
        assert decision.route is Route.GENERATION

    def test_rejected_generation_serves_lowest_ppl_fallback(self, bundle, monkeypatch):
        monkeypatch.setattr(
            pipeline, "classifier_score", lambda model, h, c: 0.1
        )
        backend = ScriptedBackend([], logprob_table={"walk": -0.1}, default_logprob=-2.0)
        cfg = _config(
            fallback_questions=["how is your garden doing", "did you take a walk today"]
        )
        decision = respond_detect_discard(
            make_turns("hello", "hi"), bundle.generator, bundle.classifier, cfg, backend
        )
        assert decision.route is Route.FALLBACK_QUESTION
        assert decision.response == "did you take a walk today"

    def test_fallback_tie_breaks_by_list_order(self, bundle, monkeypatch):
        monkeypatch.setattr(
            pipeline, "classifier_score", lambda model, h, c: 0.0001
        )
        backend = ScriptedBackend([], default_logprob=-1.0)
        cfg = _config(fallback_questions=["b b", "a a"])
        decision = respond_detect_discard(
            make_turns("hello", "hi"), bundle.generator, bundle.classifier, cfg, backend
        )
        assert decision.response == "b b"


class TestRoutingReport:
    def test_proportions_sum_to_one(self):
        decisions = [
            PipelineDecision("x", Route.RETRIEVAL, {}),
            PipelineDecision("y", Route.GENERATION, {}),
            PipelineDecision("z", Route.RETRIEVAL, {}),
            PipelineDecision("w", Route.FALLBACK_QUESTION, {}),
        ]
        report = routing_report(decisions)
        assert report["retrieval"] == pytest.approx(0.5)
        assert report["generation"] == pytest.approx(0.25)
        assert sum(report.values()) == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            routing_report([])
