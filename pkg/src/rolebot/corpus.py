"""Canonical data model for dialogues, role specifications, and training examples.

A dialogue is an ordered list of strictly alternating turns, always opened by
the system (the bot initiates the conversation). Human filtering marks the
first out-of-bounds system turn; `extract_examples` converts those marks into
(history, response) supervision pairs: system turns before the mark become
positives, the marked turn becomes the single negative, and everything after
it is discarded.

Persistence is line-delimited JSON, one record per line, so 25k-dialogue
corpora stream without loading everything at once.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import (
    EmptyCorpus,
    EmptyDialogue,
    IndexMismatch,
    IOFailure,
    MalformedMarkers,
    SchemaViolation,
)


class Speaker(str, Enum):
    SYSTEM = "system"
    USER = "user"


class Source(str, Enum):
    EXAMPLE = "example"
    GENERATED = "generated"
    FILTERED = "filtered"
    FEEDBACK = "feedback"


class ErrorType(str, Enum):
    """Taxonomy of out-of-bounds system utterances."""

    NOT_SENSIBLE = "not_sensible"
    WRONG_PERSONA = "wrong_persona"
    POLICY_VIOLATION = "policy_violation"
    NOT_SAFE = "not_safe"
    ETC = "etc"


class Label(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class Turn:
    """A single utterance. `index` is the 0-based position in its dialogue."""

    speaker: Speaker
    text: str
    index: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("turn text must be non-empty")
        if self.index < 0:
            raise ValueError("turn index must be >= 0")


@dataclass
class Dialogue:
    """An alternating system/user conversation, system first."""

    id: str
    turns: list[Turn]
    source: Source
    topic: Optional[str] = None

    def __post_init__(self):
        if not self.turns:
            raise ValueError(f"dialogue {self.id}: turns list is empty")
        for pos, turn in enumerate(self.turns):
            if turn.index != pos:
                raise ValueError(
                    f"dialogue {self.id}: turn index {turn.index} at position {pos}"
                )
            expected = Speaker.SYSTEM if pos % 2 == 0 else Speaker.USER
            if turn.speaker is not expected:
                raise ValueError(
                    f"dialogue {self.id}: speaker {turn.speaker.value} at position {pos}"
                )

    def system_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.speaker is Speaker.SYSTEM]


@dataclass
class RoleCategory:
    name: str
    description: str
    forbidden_examples: list[str] = field(default_factory=list)


@dataclass
class RoleSpecification:
    """Outline shown to the generator plus detailed constraint categories.

    Only the outline enters prompts; the categories drive human filtering.
    """

    outline: str
    categories: list[RoleCategory] = field(default_factory=list)

    def __post_init__(self):
        if not self.outline.strip():
            raise ValueError("role specification outline must be non-empty")
        names = [c.name for c in self.categories]
        if len(names) != len(set(names)):
            raise ValueError("category names must be unique")


@dataclass
class FilterAnnotation:
    """Where (if anywhere) a dialogue first leaves the role specification."""

    dialogue_id: str
    first_violation_index: Optional[int] = None
    error_type: Optional[ErrorType] = None

    def __post_init__(self):
        if (self.first_violation_index is None) != (self.error_type is None):
            raise ValueError(
                "error_type must be present iff first_violation_index is present"
            )

    def validate_against(self, dialogue: Dialogue) -> None:
        if self.dialogue_id != dialogue.id:
            raise IndexMismatch(
                f"annotation for {self.dialogue_id} applied to dialogue {dialogue.id}"
            )
        v = self.first_violation_index
        if v is None:
            return
        if not 0 <= v < len(dialogue.turns):
            raise IndexMismatch(f"violation index {v} out of range for {dialogue.id}")
        if dialogue.turns[v].speaker is not Speaker.SYSTEM:
            raise IndexMismatch(f"violation index {v} points at a user turn")


@dataclass
class TrainingExample:
    """(history, response) supervision pair extracted from a filtered dialogue."""

    history: list[Turn]
    response: Turn
    label: Label
    origin_dialogue_id: str
    error_type: Optional[ErrorType] = None

    def __post_init__(self):
        if self.response.speaker is not Speaker.SYSTEM:
            raise ValueError("response must be a system turn")
        if self.label is Label.NEGATIVE and self.error_type is None:
            raise ValueError("negative examples carry an error_type")
        if self.label is Label.POSITIVE and self.error_type is not None:
            raise ValueError("positive examples carry no error_type")


@dataclass
class ParseReport:
    """What happened while parsing a raw transcript."""

    total_lines: int
    consumed_lines: int
    truncated: bool = False
    truncation_line: Optional[int] = None
    reason: Optional[str] = None


def _content_id(raw: str) -> str:
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def parse_dialogue_text(
    raw: str,
    system_marker: str = "AI:",
    user_marker: str = "User:",
    dialogue_id: Optional[str] = None,
    source: Source = Source.GENERATED,
    topic: Optional[str] = None,
) -> tuple[Dialogue, ParseReport]:
    """Parse a raw transcript into a Dialogue.

    Each line starting with a speaker marker opens a turn; unmarked non-blank
    lines continue the previous turn (joined with a single space). Parsing
    stops at the first marked line that breaks strict alternation: generated
    transcripts routinely degrade at the tail, so we truncate rather than
    reject, and record the truncation point in the report.
    """
    lines = raw.splitlines()
    turns: list[tuple[Speaker, str]] = []
    report = ParseReport(total_lines=len(lines), consumed_lines=0)

    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith(system_marker):
            speaker, text = Speaker.SYSTEM, stripped[len(system_marker):].strip()
        elif stripped.startswith(user_marker):
            speaker, text = Speaker.USER, stripped[len(user_marker):].strip()
        else:
            if not turns:
                # preamble before the first marked line; skip
                continue
            prev_speaker, prev_text = turns[-1]
            turns[-1] = (prev_speaker, f"{prev_text} {stripped}")
            report.consumed_lines = lineno
            continue

        if not turns:
            if speaker is Speaker.USER:
                raise MalformedMarkers(
                    f"first marked line (line {lineno}) is a user turn"
                )
        else:
            expected = Speaker.USER if turns[-1][0] is Speaker.SYSTEM else Speaker.SYSTEM
            if speaker is not expected:
                report.truncated = True
                report.truncation_line = lineno
                report.reason = "alternation break"
                break
        if not text:
            # marker with no content ends the transcript cleanly
            report.truncated = True
            report.truncation_line = lineno
            report.reason = "empty marked line"
            break
        turns.append((speaker, text))
        report.consumed_lines = lineno

    if not turns:
        raise EmptyDialogue("no valid leading system turn found")

    dialogue = Dialogue(
        id=dialogue_id if dialogue_id is not None else _content_id(raw),
        turns=[
            Turn(speaker=s, text=t, index=i) for i, (s, t) in enumerate(turns)
        ],
        source=source,
        topic=topic,
    )
    return dialogue, report


def extract_examples(
    dialogue: Dialogue, annotation: FilterAnnotation
) -> tuple[list[TrainingExample], list[TrainingExample]]:
    """Turn a filtering mark into training pairs.

    System turns strictly before the violation become positives (history =
    everything before them); the marked turn becomes the single negative.
    Turns after the mark are dropped: the context may already be damaged by
    the problematic utterance. Without a mark, every system turn is positive.
    """
    annotation.validate_against(dialogue)
    v = annotation.first_violation_index
    positives: list[TrainingExample] = []
    negatives: list[TrainingExample] = []

    for turn in dialogue.system_turns():
        if v is not None and turn.index > v:
            break
        if v is not None and turn.index == v:
            negatives.append(
                TrainingExample(
                    history=list(dialogue.turns[: turn.index]),
                    response=turn,
                    label=Label.NEGATIVE,
                    error_type=annotation.error_type,
                    origin_dialogue_id=dialogue.id,
                )
            )
        else:
            positives.append(
                TrainingExample(
                    history=list(dialogue.turns[: turn.index]),
                    response=turn,
                    label=Label.POSITIVE,
                    origin_dialogue_id=dialogue.id,
                )
            )
    return positives, negatives


def _tokens(text: str) -> list[str]:
    # whitespace split, case preserved: reproducible and language-agnostic
    return text.split()


def distinct_n(dialogues: list[Dialogue], n: int) -> float:
    """Unique n-grams across all turns divided by total word count.

    The denominator is the unigram token count for every n (that is how the
    diversity statistic is conventionally reported). N-grams never cross turn
    boundaries.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if not dialogues:
        raise EmptyCorpus("distinct_n over an empty corpus")
    ngrams: set[tuple[str, ...]] = set()
    total_words = 0
    for d in dialogues:
        for turn in d.turns:
            toks = _tokens(turn.text)
            total_words += len(toks)
            for i in range(len(toks) - n + 1):
                ngrams.add(tuple(toks[i : i + n]))
    if total_words == 0:
        raise EmptyCorpus("corpus contains no tokens")
    return len(ngrams) / total_words


@dataclass
class StatsReport:
    """Corpus-level descriptive statistics."""

    dialogues: int
    turns: int
    avg_turns_per_dialogue: float
    positive_examples: int
    negative_examples: int
    unique_system_turns: int
    words: int
    avg_words_per_turn: float
    unique_words: int
    unique_bigrams: int
    distinct_1: float
    distinct_2: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def corpus_stats(
    dialogues: list[Dialogue],
    examples: Optional[list[TrainingExample]] = None,
) -> StatsReport:
    if not dialogues:
        raise EmptyCorpus("corpus_stats over an empty corpus")
    n_turns = sum(len(d.turns) for d in dialogues)
    sys_texts = {t.text for d in dialogues for t in d.system_turns()}
    words = 0
    uniq_words: set[str] = set()
    uniq_bigrams: set[tuple[str, str]] = set()
    for d in dialogues:
        for turn in d.turns:
            toks = _tokens(turn.text)
            words += len(toks)
            uniq_words.update(toks)
            uniq_bigrams.update(zip(toks, toks[1:]))
    examples = examples or []
    n_pos = sum(1 for e in examples if e.label is Label.POSITIVE)
    n_neg = sum(1 for e in examples if e.label is Label.NEGATIVE)
    return StatsReport(
        dialogues=len(dialogues),
        turns=n_turns,
        avg_turns_per_dialogue=n_turns / len(dialogues),
        positive_examples=n_pos,
        negative_examples=n_neg,
        unique_system_turns=len(sys_texts),
        words=words,
        avg_words_per_turn=words / n_turns if n_turns else 0.0,
        unique_words=len(uniq_words),
        unique_bigrams=len(uniq_bigrams),
        distinct_1=distinct_n(dialogues, 1),
        distinct_2=distinct_n(dialogues, 2),
    )


# --- persistence (line-delimited JSON) ------------------------------------

def _turn_to_dict(turn: Turn) -> dict:
    return {"speaker": turn.speaker.value, "text": turn.text}


def _turn_from_dict(obj: dict, index: int, line: Optional[int] = None) -> Turn:
    try:
        speaker = Speaker(obj["speaker"])
        text = obj["text"]
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaViolation(f"bad turn record: {exc!r}", line=line)
    return Turn(speaker=speaker, text=text, index=index)


def dialogue_to_dict(dialogue: Dialogue) -> dict:
    return {
        "id": dialogue.id,
        "source": dialogue.source.value,
        "topic": dialogue.topic,
        "turns": [_turn_to_dict(t) for t in dialogue.turns],
    }


def dialogue_from_dict(obj: dict, line: Optional[int] = None) -> Dialogue:
    try:
        turns = [
            _turn_from_dict(t, i, line) for i, t in enumerate(obj["turns"])
        ]
        return Dialogue(
            id=obj["id"],
            source=Source(obj["source"]),
            topic=obj.get("topic"),
            turns=turns,
        )
    except SchemaViolation:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaViolation(f"bad dialogue record: {exc}", line=line)


def save_corpus(dialogues: Iterable[Dialogue], path) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for d in dialogues:
                fh.write(json.dumps(dialogue_to_dict(d), ensure_ascii=False))
                fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}")


def load_corpus(path) -> list[Dialogue]:
    path = Path(path)
    dialogues = []
    try:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaViolation(f"invalid JSON: {exc}", line=lineno)
                dialogues.append(dialogue_from_dict(obj, line=lineno))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}")
    return dialogues


def annotation_to_dict(a: FilterAnnotation) -> dict:
    return {
        "dialogue_id": a.dialogue_id,
        "first_violation_index": a.first_violation_index,
        "error_type": a.error_type.value if a.error_type else None,
    }


def annotation_from_dict(obj: dict, line: Optional[int] = None) -> FilterAnnotation:
    try:
        return FilterAnnotation(
            dialogue_id=obj["dialogue_id"],
            first_violation_index=obj.get("first_violation_index"),
            error_type=(
                ErrorType(obj["error_type"]) if obj.get("error_type") else None
            ),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaViolation(f"bad annotation record: {exc}", line=line)


def save_annotations(annotations: Iterable[FilterAnnotation], path) -> None:
    try:
        with Path(path).open("w", encoding="utf-8") as fh:
            for a in annotations:
                fh.write(json.dumps(annotation_to_dict(a), ensure_ascii=False))
                fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}")


def load_annotations(path) -> list[FilterAnnotation]:
    out = []
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaViolation(f"invalid JSON: {exc}", line=lineno)
                out.append(annotation_from_dict(obj, line=lineno))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}")
    return out


def example_to_dict(e: TrainingExample) -> dict:
    return {
        "history": [_turn_to_dict(t) for t in e.history],
        "response": _turn_to_dict(e.response),
        "label": e.label.value,
        "error_type": e.error_type.value if e.error_type else None,
        "origin_dialogue_id": e.origin_dialogue_id,
    }


def example_from_dict(obj: dict, line: Optional[int] = None) -> TrainingExample:
    try:
        history = [
            _turn_from_dict(t, i, line) for i, t in enumerate(obj["history"])
        ]
        response = _turn_from_dict(obj["response"], len(history), line)
        return TrainingExample(
            history=history,
            response=response,
            label=Label(obj["label"]),
            error_type=(
                ErrorType(obj["error_type"]) if obj.get("error_type") else None
            ),
            origin_dialogue_id=obj["origin_dialogue_id"],
        )
    except SchemaViolation:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaViolation(f"bad example record: {exc}", line=line)


def save_examples(examples: Iterable[TrainingExample], path) -> None:
    try:
        with Path(path).open("w", encoding="utf-8") as fh:
            for e in examples:
                fh.write(json.dumps(example_to_dict(e), ensure_ascii=False))
                fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}")


def load_examples(path) -> list[TrainingExample]:
    out = []
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaViolation(f"invalid JSON: {exc}", line=lineno)
                out.append(example_from_dict(obj, line=lineno))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}")
    return out
