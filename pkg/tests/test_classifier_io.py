"""Out-of-bounds classifier training/scoring and model persistence."""

import numpy as np
import pytest

from rolebot.corpus import ErrorType, Label
from rolebot.errors import EmptyClass, SchemaViolation
from rolebot.models import (
    ClassifierConfig,
    GeneratorConfig,
    RerankerConfig,
    RetrieverConfig,
    classifier_score,
    classifier_train,
    generator_train,
    load_model,
    reranker_train,
    retriever_train,
    save_model,
)

from .conftest import make_example


def _labelled_examples():
    """In-bounds chit-chat positives vs marker-word negatives."""
    positives = [
        make_example(["hello there", "i am fine"], "did you sleep well", origin=f"p{i}")
        for i in range(4)
    ] + [
        make_example(["hello there", "i am fine"], "what did you eat", origin=f"q{i}")
        for i in range(4)
    ]
    negatives = [
        make_example(
            ["hello there", "i am fine"],
            "i will visit your house",
            label=Label.NEGATIVE,
            error_type=ErrorType.WRONG_PERSONA,
            origin=f"n{i}",
        )
        for i in range(4)
    ] + [
        make_example(
            ["hello there", "i am fine"],
            "that is a stupid thing",
            label=Label.NEGATIVE,
            error_type=ErrorType.NOT_SAFE,
            origin=f"m{i}",
        )
        for i in range(4)
    ]
    return positives, negatives


class TestClassifier:
    def test_separates_classes(self):
        positives, negatives = _labelled_examples()
        model = classifier_train(
            positives, negatives, ClassifierConfig(epochs=60, dropout=0.0, seed=0)
        )
        pos_scores = [
            classifier_score(model, ex.history, ex.response) for ex in positives
        ]
        neg_scores = [
            classifier_score(model, ex.history, ex.response) for ex in negatives
        ]
        assert min(pos_scores) > max(neg_scores)

    def test_scores_are_probabilities(self):
        positives, negatives = _labelled_examples()
        model = classifier_train(positives, negatives, ClassifierConfig(epochs=3, seed=0))
        s = classifier_score(model, positives[0].history, "anything at all")
        assert 0.0 < s < 1.0

    def test_deterministic(self):
        positives, negatives = _labelled_examples()
        cfg = ClassifierConfig(epochs=4, seed=11)
        m1 = classifier_train(positives, negatives, cfg)
        m2 = classifier_train(positives, negatives, cfg)
        np.testing.assert_array_equal(m1.E, m2.E)
        assert m1.u == m2.u

    def test_both_classes_required(self):
        positives, _ = _labelled_examples()
        with pytest.raises(EmptyClass):
            classifier_train(positives, [], ClassifierConfig())
        with pytest.raises(EmptyClass):
            classifier_train([], positives, ClassifierConfig())


class TestModelIO:
    def _examples(self):
        return _labelled_examples()

    @pytest.mark.parametrize("kind", ["generator", "retriever", "reranker", "classifier"])
    def test_roundtrip_preserves_scores(self, kind, tmp_path):
        positives, negatives = self._examples()
        if kind == "generator":
            model = generator_train(positives, negatives, GeneratorConfig(epochs=2, seed=1))
        elif kind == "retriever":
            model = retriever_train(positives, RetrieverConfig(epochs=2, seed=1))
        elif kind == "reranker":
            model = reranker_train(positives, RerankerConfig(epochs=2, seed=1))
        else:
            model = classifier_train(positives, negatives, ClassifierConfig(epochs=2, seed=1))
        path = tmp_path / f"{kind}.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == kind
        h, r = positives[0].history, positives[0].response.text
        if kind == "generator":
            assert loaded.sequence_nll(h, r) == model.sequence_nll(h, r)
        elif kind == "classifier":
            assert classifier_score(loaded, h, r) == classifier_score(model, h, r)
        else:
            assert loaded.score(h, r) == model.score(h, r)

    def test_serialization_is_byte_stable(self, tmp_path):
        positives, negatives = self._examples()
        cfg = ClassifierConfig(epochs=2, seed=7)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_model(classifier_train(positives, negatives, cfg), p1)
        save_model(classifier_train(positives, negatives, cfg), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{broken")
        with pytest.raises(SchemaViolation):
            load_model(path)

    def test_wrong_shape_rejected(self, tmp_path):
        positives, negatives = self._examples()
        model = retriever_train(positives, RetrieverConfig(epochs=1, seed=0))
        path = tmp_path / "m.json"
        save_model(model, path)
        import json

        doc = json.loads(path.read_text())
        doc["parameters"]["Ec"] = [[0.0, 1.0]]
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaViolation):
            load_model(path)

    def test_wrong_version_rejected(self, tmp_path):
        positives, negatives = self._examples()
        model = retriever_train(positives, RetrieverConfig(epochs=1, seed=0))
        path = tmp_path / "m.json"
        save_model(model, path)
        import json

        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaViolation):
            load_model(path)
