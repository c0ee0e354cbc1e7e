"""Deterministic toy fixtures: role spec, seed dialogues, scripted transcripts.

Everything here is generated from an explicit seed so the full workflow --
synthesis, filtering, training, serving, feedback -- runs offline and
bit-reproducibly. Violation utterances carry marker words that a rule-based
annotator can spot, standing in for the human filtering pass in smoke runs.
"""

from __future__ import annotations

import random
from typing import Optional

from .corpus import (
    Dialogue,
    ErrorType,
    FilterAnnotation,
    RoleCategory,
    RoleSpecification,
    Source,
    Speaker,
    Turn,
)

TOY_OUTLINE = (
    "The chatbot is a friendly companion that calls senior users for a chat.\n"
    "Initiate the conversation, react warmly, and end the call politely."
)

# marker word -> error type; the rule-based annotator keys off these
VIOLATION_MARKERS = {
    "visit": ErrorType.WRONG_PERSONA,
    "weather": ErrorType.POLICY_VIOLATION,
    "song": ErrorType.POLICY_VIOLATION,
    "stupid": ErrorType.NOT_SAFE,
    "banana": ErrorType.NOT_SENSIBLE,
}

_VIOLATION_LINES = [
    "i will visit your house today",
    "the weather is sunny and warm today",
    "i will play a song for you now",
    "that is a stupid thing to say",
    "banana clock runs backwards loudly",
]

_SYSTEM_LINES = [
    "hello how are you today",
    "did you sleep well last night",
    "what did you eat for lunch",
    "did you take a walk today",
    "how is your garden doing",
    "have you called your family recently",
    "are you feeling healthy this week",
    "what hobby did you enjoy today",
    "did you read anything interesting",
    "i am glad to hear that",
    "that sounds really lovely",
    "please take good care of yourself",
]

_USER_LINES = [
    "i am doing fine thank you",
    "i slept quite well",
    "i had soup and bread",
    "yes i walked in the park",
    "the garden is growing nicely",
    "i talked to my daughter yesterday",
    "i feel healthy and strong",
    "i enjoyed knitting today",
    "i read the newspaper",
    "thank you for asking",
    "that is kind of you",
    "goodbye and talk soon",
]

_CLOSING = "it was nice talking with you goodbye"


def toy_role_spec() -> RoleSpecification:
    return RoleSpecification(
        outline=TOY_OUTLINE,
        categories=[
            RoleCategory(
                name="persona",
                description="No physical presence; never offer to meet or visit.",
                forbidden_examples=["i will visit your house today"],
            ),
            RoleCategory(
                name="policy",
                description="No weather reports, news, or playing media.",
                forbidden_examples=[
                    "the weather is sunny and warm today",
                    "i will play a song for you now",
                ],
            ),
            RoleCategory(
                name="safety",
                description="No insulting or unsafe language.",
                forbidden_examples=["that is a stupid thing to say"],
            ),
        ],
    )


def toy_seed_dialogues(n: int = 5, seed: int = 7) -> list[Dialogue]:
    """Human-written style seed dialogues for one-shot prompting."""
    rng = random.Random(seed)
    dialogues = []
    for i in range(n):
        pairs = rng.randrange(3, 6)
        turns = []
        for j in range(pairs):
            turns.append(
                Turn(Speaker.SYSTEM, _SYSTEM_LINES[(i + 2 * j) % len(_SYSTEM_LINES)], 2 * j)
            )
            turns.append(
                Turn(Speaker.USER, _USER_LINES[(i + 2 * j) % len(_USER_LINES)], 2 * j + 1)
            )
        dialogues.append(
            Dialogue(
                id=f"seed-{i:03d}",
                turns=turns,
                source=Source.EXAMPLE,
                topic=f"topic-{i % 3}",
            )
        )
    return dialogues


def build_toy_transcripts(n: int = 20, seed: int = 11) -> list[str]:
    """Raw transcripts the scripted backend replays.

    Roughly half contain one violation line at a random system position;
    a few break alternation at the tail, exercising parser truncation.
    """
    rng = random.Random(seed)
    transcripts = []
    for i in range(n):
        pairs = rng.randrange(4, 7)
        violate_at: Optional[int] = (
            rng.randrange(1, pairs) if rng.random() < 0.5 else None
        )
        lines = []
        for j in range(pairs):
            if violate_at is not None and j == violate_at:
                sys_line = _VIOLATION_LINES[rng.randrange(len(_VIOLATION_LINES))]
            else:
                sys_line = _SYSTEM_LINES[rng.randrange(len(_SYSTEM_LINES))]
            lines.append(f"AI: {sys_line}")
            lines.append(f"User: {_USER_LINES[rng.randrange(len(_USER_LINES))]}")
        lines.append(f"AI: {_CLOSING}")
        lines.append(f"User: {_USER_LINES[-1]}")
        if rng.random() < 0.15:
            # degraded tail: two system lines in a row
            lines.append("AI: hello how are you today")
            lines.append("AI: hello how are you today")
        transcript = "\n".join(lines)
        # the backend returns the completion after the "AI:" cue
        transcripts.append(transcript[len("AI:"):].lstrip())
    return transcripts


def auto_annotate(dialogue: Dialogue) -> FilterAnnotation:
    """Rule-based stand-in for a human annotator: flag the first system turn
    containing a violation marker word."""
    for turn in dialogue.turns:
        if turn.speaker is not Speaker.SYSTEM:
            continue
        for marker, error_type in VIOLATION_MARKERS.items():
            if marker in turn.text.lower().split():
                return FilterAnnotation(
                    dialogue_id=dialogue.id,
                    first_violation_index=turn.index,
                    error_type=error_type,
                )
    return FilterAnnotation(dialogue_id=dialogue.id)


TOY_FALLBACK_QUESTIONS = [
    "what did you eat for lunch",
    "did you take a walk today",
    "how is your garden doing",
]


def toy_feedback_script(n_sessions: int = 3, seed: int = 23) -> list[list[dict]]:
    """Scripted feedback sessions: message / fix / save actions."""
    rng = random.Random(seed)
    scripts = []
    for _ in range(n_sessions):
        actions: list[dict] = []
        for j in range(rng.randrange(2, 5)):
            actions.append({"message": _USER_LINES[rng.randrange(len(_USER_LINES))]})
            if rng.random() < 0.3:
                error = rng.choice(
                    [ErrorType.NOT_SENSIBLE, ErrorType.WRONG_PERSONA]
                )
                actions.append({"fix": error.value})
        actions.append({"save": True})
        scripts.append(actions)
    return scripts
