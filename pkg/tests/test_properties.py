"""Randomized property checks of the library's core invariants."""

import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rolebot.corpus import (
    Dialogue,
    ErrorType,
    FilterAnnotation,
    Source,
    Speaker,
    Turn,
    distinct_n,
    extract_examples,
    load_corpus,
    save_corpus,
)
from rolebot.evaluation import (
    SSAVoteRecord,
    ValLabel,
    agreement,
    calibrate_threshold,
    krippendorff_alpha,
    roc_auc,
    ssa_aggregate,
)
from rolebot.models.encoding import encode_history
from rolebot.models.retrieval import PredictiveSampleSet, unanswerable
from rolebot.models import build_vocabulary
from rolebot.synthesis import ScriptedBackend, ppl

from .conftest import make_example

WORDS = ["hello", "tea", "garden", "walk", "rain", "lunch", "friend", "song"]

words = st.lists(st.sampled_from(WORDS), min_size=2, max_size=6).map(" ".join)

# a coarse grid keeps affine transforms of scores exactly order-preserving
grid_scores = st.integers(-50, 50).map(lambda i: i / 10.0)


@st.composite
def dialogues(draw, min_turns=1, max_turns=8):
    n = draw(st.integers(min_turns, max_turns))
    texts = [draw(words) for _ in range(n)]
    turns = [
        Turn(Speaker.SYSTEM if i % 2 == 0 else Speaker.USER, t, i)
        for i, t in enumerate(texts)
    ]
    ident = draw(st.uuids()).hex[:12]
    return Dialogue(id=ident, source=Source.GENERATED, turns=turns)


class TestCorpusProperties:
    @given(st.lists(dialogues(), min_size=1, max_size=6), st.randoms())
    def test_distinct_n_reorder_invariant_and_bounded(self, ds, rnd):
        for n in (1, 2):
            value = distinct_n(ds, n)
            assert 0.0 < value <= 1.0
            shuffled = list(ds)
            rnd.shuffle(shuffled)
            assert distinct_n(shuffled, n) == value

    @given(dialogues(min_turns=3, max_turns=9), st.data())
    def test_extract_examples_never_crosses_violation(self, dialogue, data):
        system_indices = [t.index for t in dialogue.turns if t.speaker is Speaker.SYSTEM]
        v = data.draw(st.sampled_from(system_indices))
        annotation = FilterAnnotation(
            dialogue_id=dialogue.id, first_violation_index=v, error_type=ErrorType.ETC
        )
        positives, negatives = extract_examples(dialogue, annotation)
        for ex in positives + negatives:
            assert ex.response.index <= v
            assert all(t.index < ex.response.index for t in ex.history)
        assert len(negatives) == 1 and negatives[0].response.index == v

    @given(dialogues())
    def test_unannotated_positives_equal_system_turns(self, dialogue):
        annotation = FilterAnnotation(dialogue_id=dialogue.id)
        positives, negatives = extract_examples(dialogue, annotation)
        assert len(positives) == sum(
            1 for t in dialogue.turns if t.speaker is Speaker.SYSTEM
        )
        assert negatives == []

    @given(st.lists(dialogues(), min_size=1, max_size=4))
    def test_persistence_roundtrip_identity(self, ds):
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "corpus.jsonl"
            save_corpus(ds, path)
            assert load_corpus(path) == ds

    def test_roundtrip_preserves_unicode(self, tmp_path):
        d = Dialogue(
            id="u-1",
            source=Source.GENERATED,
            turns=[Turn(Speaker.SYSTEM, "café ❄ 安녕", 0)],
        )
        path = tmp_path / "u.jsonl"
        save_corpus([d], path)
        assert load_corpus(path) == [d]


class TestScoreProperties:
    @given(
        st.lists(
            st.tuples(
                grid_scores,
                st.sampled_from([ValLabel.ANSWERABLE, ValLabel.UNANSWERABLE]),
            ),
            min_size=2,
            max_size=30,
        ).filter(lambda rows: len({l for _, l in rows}) == 2)
    )
    def test_auc_bounded_and_monotone_invariant(self, rows):
        scores = [s for s, _ in rows]
        labels = [l for _, l in rows]
        value = roc_auc(scores, labels)
        assert 0.0 <= value <= 1.0
        transformed = [3.0 * s + 1.0 for s in scores]
        assert roc_auc(transformed, labels) == pytest.approx(value, abs=1e-12)

    @given(
        st.lists(
            st.tuples(
                st.floats(-5, 5, allow_nan=False),
                st.sampled_from([ValLabel.ANSWERABLE, ValLabel.UNANSWERABLE]),
            ),
            min_size=2,
            max_size=15,
        ).filter(lambda rows: len({l for _, l in rows}) == 2)
    )
    def test_calibrated_threshold_is_f1_maximal(self, rows):
        scores = [s for s, _ in rows]
        labels = [l for _, l in rows]
        threshold, best = calibrate_threshold(scores, labels)

        def f1_at(t):
            tp = sum(
                1 for s, l in rows if s < t and l is ValLabel.UNANSWERABLE
            )
            fp = sum(1 for s, l in rows if s < t and l is ValLabel.ANSWERABLE)
            fn = sum(
                1 for s, l in rows if s >= t and l is ValLabel.UNANSWERABLE
            )
            return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)

        assert f1_at(threshold) == pytest.approx(best)
        probes = sorted(set(scores))
        candidates = [(a + b) / 2 for a, b in zip(probes, probes[1:])]
        candidates += [probes[0] - 1.0, probes[-1] + 1.0]
        assert best >= max(f1_at(t) for t in candidates) - 1e-12

    @given(
        st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=40),
        st.floats(-11, 11, allow_nan=False),
        st.floats(0.001, 5),
    )
    def test_unanswerable_monotone_in_threshold(self, scores, t, dt):
        if unanswerable(scores, t):
            assert unanswerable(scores, t + dt)
        else:
            assert not unanswerable(scores, t - dt)

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=50))
    def test_uncertainty_score_never_exceeds_mean(self, samples):
        s = PredictiveSampleSet(samples=samples)
        mean = sum(samples) / len(samples)
        assert s.score() <= mean + 1e-9
        if len(set(samples)) == 1:
            assert s.score() == pytest.approx(mean)


class TestVoteProperties:
    vote_lists = st.lists(st.booleans(), min_size=1, max_size=7).filter(
        lambda v: len(v) % 2 == 1
    )

    @given(st.lists(st.tuples(vote_lists, vote_lists), min_size=1, max_size=10))
    def test_ssa_is_mean_of_components(self, pairs):
        votes = [
            SSAVoteRecord(
                turn_ref=f"t{i}", sensibleness_votes=s, specificity_votes=p
            )
            for i, (s, p) in enumerate(pairs)
        ]
        report = ssa_aggregate(votes)
        assert report.ssa == pytest.approx(
            (report.sensibleness + report.specificity) / 2
        )
        for value in (report.sensibleness, report.specificity, report.ssa):
            assert 0.0 <= value <= 100.0

    @given(
        st.lists(
            st.tuples(st.booleans(), st.integers(2, 5)), min_size=2, max_size=10
        ).filter(lambda rows: len({v for v, _ in rows}) == 2)
    )
    def test_alpha_is_one_under_perfect_agreement(self, rows):
        items = [[int(v)] * n for v, n in rows]
        assert krippendorff_alpha(items) == pytest.approx(1.0)
        assert agreement(items) == pytest.approx(100.0)


class TestEncodingProperties:
    @given(st.lists(words, min_size=1, max_size=30))
    def test_encode_history_caps_hold(self, texts):
        vocab = build_vocabulary(
            [make_example([" ".join(WORDS[:4])], " ".join(WORDS[4:]))]
        )
        history = [
            Turn(Speaker.SYSTEM if i % 2 == 0 else Speaker.USER, t, i)
            for i, t in enumerate(texts)
        ]
        encoded = encode_history(history, vocab, max_turns=10, max_tokens=32)
        assert len(encoded) <= 32
        assert encoded.turns_kept <= 10


class TestPplProperties:
    @given(
        st.lists(st.floats(-6, -0.01, allow_nan=False), min_size=1, max_size=8),
        st.integers(0, 7),
        st.floats(0.01, 3),
    )
    def test_lowering_a_logprob_raises_ppl(self, logprobs, position, delta):
        position %= len(logprobs)
        tokens = [f"w{i}" for i in range(len(logprobs))]
        table = dict(zip(tokens, logprobs))
        base = ppl(ScriptedBackend([], logprob_table=table), "c", " ".join(tokens))
        table[tokens[position]] = logprobs[position] - delta
        worse = ppl(ScriptedBackend([], logprob_table=table), "c", " ".join(tokens))
        assert worse > base
        assert base == pytest.approx(
            math.exp(-sum(logprobs) / len(logprobs))
        )
