"""Dialogue history encoding with turn- and token-level truncation.

A history serializes as BOS, then each kept turn as a speaker tag followed by
its word tokens, turns separated by SEP. Truncation removes the oldest turns
first: the turn cap applies before the token cap, and the token cap drops
whole turns from the front while possible, only slicing tokens when a single
turn alone exceeds the budget.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..corpus import Speaker, Turn
from .vocab import Vocabulary

MAX_TURNS = 10
MAX_TOKENS = 256


@dataclass
class EncodedContext:
    ids: list[int]
    turns_kept: int

    def __len__(self) -> int:
        return len(self.ids)


def _turn_block(turn: Turn, vocab: Vocabulary) -> list[int]:
    tag = vocab.sys_id if turn.speaker is Speaker.SYSTEM else vocab.usr_id
    return [tag] + vocab.encode_words(turn.text)


def encode_history(
    history: list[Turn],
    vocab: Vocabulary,
    max_turns: int = MAX_TURNS,
    max_tokens: int = MAX_TOKENS,
) -> EncodedContext:
    kept = history[-max_turns:] if max_turns else list(history)
    blocks = [_turn_block(t, vocab) for t in kept]

    def total(blks: list[list[int]]) -> int:
        if not blks:
            return 1  # BOS alone
        return 1 + sum(len(b) for b in blks) + (len(blks) - 1)  # BOS + SEPs

    while len(blocks) > 1 and total(blocks) > max_tokens:
        blocks.pop(0)
    ids = [vocab.bos_id]
    for i, block in enumerate(blocks):
        if i > 0:
            ids.append(vocab.sep_id)
        ids.extend(block)
    if len(ids) > max_tokens:
        ids = ids[-max_tokens:]
    return EncodedContext(ids=ids, turns_kept=len(blocks))


def encode_text(text: str, vocab: Vocabulary) -> list[int]:
    """Word ids of a free-standing response candidate (no tags, no BOS)."""
    return vocab.encode_words(text)
