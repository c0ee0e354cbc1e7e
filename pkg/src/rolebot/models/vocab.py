"""Whitespace/lowercase tokenizer and a fixed-order vocabulary.

Reserved tokens occupy the lowest indices so encoders can rely on their
positions; speaker tags are always present right after the reserved block.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

PAD = "<pad>"
UNK = "<unk>"
BOS = "<bos>"
EOS = "<eos>"
SEP = "<sep>"
SYS_TAG = "<sys>"
USR_TAG = "<usr>"

RESERVED = (PAD, UNK, BOS, EOS, SEP)
SPECIALS = RESERVED + (SYS_TAG, USR_TAG)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass
class Vocabulary:
    tokens: list[str]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("reserved tokens must occupy the lowest indices")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 1) -> "Vocabulary":
        counts = Counter()
        for text in texts:
            counts.update(tokenize(text))
        words = sorted(
            tok for tok, c in counts.items() if c >= min_freq and tok not in SPECIALS
        )
        return cls(tokens=list(SPECIALS) + words)

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._index.get(token, self._index[UNK])

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def encode_words(self, text: str) -> list[int]:
        return [self.id(tok) for tok in tokenize(text)]

    @property
    def pad_id(self) -> int:
        return self._index[PAD]

    @property
    def unk_id(self) -> int:
        return self._index[UNK]

    @property
    def bos_id(self) -> int:
        return self._index[BOS]

    @property
    def eos_id(self) -> int:
        return self._index[EOS]

    @property
    def sep_id(self) -> int:
        return self._index[SEP]

    @property
    def sys_id(self) -> int:
        return self._index[SYS_TAG]

    @property
    def usr_id(self) -> int:
        return self._index[USR_TAG]
