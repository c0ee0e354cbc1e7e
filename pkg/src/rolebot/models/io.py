"""Model persistence: a self-describing JSON container per model.

The container records the model kind, hyperparameters, vocabulary, training
seed, and every parameter array. Serialization is deterministic (sorted
keys, repr-exact floats) so retraining with identical inputs produces a
byte-identical file.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from ..errors import IOFailure, SchemaViolation
from .classifier import ClassifierConfig, ClassifierModel
from .generator import GeneratorConfig, GeneratorModel
from .retrieval import RerankerConfig, RerankerModel, RetrieverConfig, RetrieverModel
from .vocab import Vocabulary

FORMAT_VERSION = 1

_KINDS = {
    "generator": (GeneratorModel, GeneratorConfig, ["E", "W1", "b1", "W2", "b2"]),
    "retriever": (RetrieverModel, RetrieverConfig, ["Ec", "Er"]),
    "reranker": (RerankerModel, RerankerConfig, ["E", "W1", "b1", "w2", "b2", "u"]),
    "classifier": (ClassifierModel, ClassifierConfig, ["E", "seg", "W1", "b1", "w2", "b2", "u"]),
}


def save_model(model, path) -> None:
    kind = model.kind
    _, _, param_names = _KINDS[kind]
    params = {}
    for name in param_names:
        value = getattr(model, name)
        params[name] = value.tolist() if isinstance(value, np.ndarray) else value
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "hyperparameters": dataclasses.asdict(model.cfg),
        "vocabulary": list(model.vocab.tokens),
        "training_seed": model.training_seed,
        "parameters": params,
    }
    try:
        Path(path).write_text(
            json.dumps(doc, sort_keys=True, ensure_ascii=False), encoding="utf-8"
        )
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"model file is not valid JSON: {exc}")
    try:
        if doc["format_version"] != FORMAT_VERSION:
            raise SchemaViolation(f"unsupported format version {doc['format_version']}")
        kind = doc["kind"]
        cls, cfg_cls, param_names = _KINDS[kind]
        cfg = cfg_cls(**doc["hyperparameters"])
        vocab = Vocabulary(tokens=list(doc["vocabulary"]))
        model = cls(vocab, cfg)
        model.training_seed = doc["training_seed"]
        for name in param_names:
            value = doc["parameters"][name]
            current = getattr(model, name)
            if isinstance(current, np.ndarray):
                arr = np.asarray(value, dtype=float)
                if arr.shape != current.shape:
                    raise SchemaViolation(
                        f"parameter {name} has shape {arr.shape}, expected {current.shape}"
                    )
                setattr(model, name, arr)
            else:
                setattr(model, name, float(value))
        return model
    except SchemaViolation:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad model container: {exc}")
