"""Shared fixtures: tiny corpora and pre-trained toy models.

Model training is slow relative to the rest of the suite, so trained models
are session-scoped and shared across test files. Tests that need a freshly
trained model train their own.
"""

from __future__ import annotations

import pytest

from rolebot import toy_data
from rolebot.corpus import (
    Dialogue,
    Label,
    Source,
    Speaker,
    TrainingExample,
    Turn,
    parse_dialogue_text,
)
from rolebot.filtering import FilterTaskStore, export_examples
from rolebot.models import (
    ClassifierConfig,
    GeneratorConfig,
    RerankerConfig,
    RetrieverConfig,
    classifier_train,
    generator_train,
    reranker_train,
    retriever_train,
)


def make_turns(*texts: str) -> list[Turn]:
    """Alternating turns, system first."""
    return [
        Turn(
            speaker=Speaker.SYSTEM if i % 2 == 0 else Speaker.USER,
            text=t,
            index=i,
        )
        for i, t in enumerate(texts)
    ]


def make_dialogue(*texts: str, id: str = "d-0", source: Source = Source.GENERATED) -> Dialogue:
    return Dialogue(id=id, turns=make_turns(*texts), source=source)


def make_example(
    history_texts: list[str], response: str, label: Label = Label.POSITIVE, **kw
) -> TrainingExample:
    history = make_turns(*history_texts)
    return TrainingExample(
        history=history,
        response=Turn(speaker=Speaker.SYSTEM, text=response, index=len(history)),
        label=label,
        origin_dialogue_id=kw.pop("origin", "d-0"),
        **kw,
    )


@pytest.fixture(scope="session")
def toy_examples():
    """Positives and negatives from the bundled toy synthesis + filtering path."""
    transcripts = toy_data.build_toy_transcripts(n=12, seed=11)
    dialogues = []
    for i, t in enumerate(transcripts):
        d, _ = parse_dialogue_text("AI: " + t, dialogue_id=f"toy-{i:03d}")
        dialogues.append(d)
    store = FilterTaskStore(dialogues)
    for task in store.tasks():
        store.submit_annotation(task.task_id, toy_data.auto_annotate(task.dialogue))
    positives, negatives, _ = export_examples(store.tasks())
    return positives, negatives


@pytest.fixture(scope="session")
def trained_generator(toy_examples):
    positives, negatives = toy_examples
    cfg = GeneratorConfig(embed_dim=8, hidden_dim=16, epochs=5, seed=3)
    return generator_train(positives, negatives, cfg)


@pytest.fixture(scope="session")
def trained_retriever(toy_examples):
    positives, _ = toy_examples
    return retriever_train(positives, RetrieverConfig(embed_dim=16, epochs=5, seed=3))


@pytest.fixture(scope="session")
def trained_reranker(toy_examples):
    positives, _ = toy_examples
    return reranker_train(positives, RerankerConfig(epochs=3, seed=3))


@pytest.fixture(scope="session")
def trained_classifier(toy_examples):
    positives, negatives = toy_examples
    return classifier_train(positives, negatives, ClassifierConfig(epochs=5, seed=3))
