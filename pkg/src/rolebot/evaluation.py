"""Metric suite for response selection, unanswerable detection, and human eval.

Includes the ranking harness (recall@1 against K-1 distractors), construction
of a hard-negative unanswerable validation set, rank-statistic AUC and max-F1
threshold calibration, sensibleness/specificity aggregation with majority
voting, pairwise rater agreement, and Krippendorff's alpha for nominal data.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import Turn, TrainingExample
from .errors import (
    EvenVoteCount,
    InconsistentK,
    InsufficientRaters,
    ModelMissing,
    SchemaViolation,
    SingleClass,
)

RATING_FACTORS = (
    "fluency",
    "coherence",
    "user_persona",
    "system_persona",
    "style",
    "safety",
)


@dataclass
class RankingEvalItem:
    history: list[Turn]
    gold: str
    distractors: list[str]

    def __post_init__(self):
        if self.gold in self.distractors:
            raise ValueError("gold response must not appear among distractors")

    @property
    def k(self) -> int:
        return len(self.distractors) + 1


class ValLabel(str, Enum):
    ANSWERABLE = "answerable"
    UNANSWERABLE = "unanswerable"


@dataclass
class UnanswerableValItem:
    history: list[Turn]
    candidate: str
    label: ValLabel


@dataclass
class SSAVoteRecord:
    turn_ref: str
    sensibleness_votes: list[bool]
    specificity_votes: list[bool]


@dataclass
class DialogueRating:
    dialogue_id: str
    scores: dict[str, int]

    def __post_init__(self):
        for factor, value in self.scores.items():
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ValueError(f"score for {factor} must be an integer in [1, 5]")


Scorer = Callable[[list[Turn], Sequence[str]], Sequence[float]]


def hits_at_1(scorer: Scorer, items: Sequence[RankingEvalItem]) -> float:
    """Fraction of items where the gold strictly outranks every distractor.

    The gold is placed first in the candidate list handed to the scorer;
    ties count as misses.
    """
    if not items:
        raise ValueError("hits_at_1 needs at least one item")
    ks = {item.k for item in items}
    if len(ks) != 1:
        raise InconsistentK(f"items carry multiple candidate-set sizes: {sorted(ks)}")
    hits = 0
    for item in items:
        candidates = [item.gold] + list(item.distractors)
        scores = list(scorer(item.history, candidates))
        if all(scores[0] > s for s in scores[1:]):
            hits += 1
    return hits / len(items)


def build_unanswerable_valset(
    val_positives: Sequence[TrainingExample],
    retriever,
    mix: float,
    candidates: Optional[Sequence[str]] = None,
    seed: int = 0,
) -> list[UnanswerableValItem]:
    """Replace the gold response of a `mix` fraction of items with the
    top-ranked non-gold retrieval (a hard negative); those become
    UNANSWERABLE, the rest keep their gold and stay ANSWERABLE.
    """
    from .models.retrieval import retrieve

    if retriever is None:
        raise ModelMissing("build_unanswerable_valset needs a trained retriever")
    if not 0 < mix < 1:
        raise ValueError("mix must be in (0, 1)")
    if not val_positives:
        raise ValueError("empty validation positives")
    if candidates is None:
        candidates = sorted({ex.response.text for ex in val_positives})
    n = len(val_positives)
    n_unanswerable = round(n * mix)
    rng = np.random.default_rng(seed)
    flip = set(rng.choice(n, size=n_unanswerable, replace=False).tolist())
    items: list[UnanswerableValItem] = []
    for i, ex in enumerate(val_positives):
        if i in flip:
            ranked = retrieve(retriever, ex.history, candidates, k=len(candidates))
            hard = next(c for c in ranked if c.text != ex.response.text)
            items.append(
                UnanswerableValItem(
                    history=ex.history, candidate=hard.text, label=ValLabel.UNANSWERABLE
                )
            )
        else:
            items.append(
                UnanswerableValItem(
                    history=ex.history, candidate=ex.response.text, label=ValLabel.ANSWERABLE
                )
            )
    return items


def roc_auc(scores: Sequence[float], labels: Sequence[ValLabel]) -> float:
    """Probability a random answerable outscores a random unanswerable,
    ties counting half (rank-sum convention)."""
    pos = [s for s, l in zip(scores, labels) if l is ValLabel.ANSWERABLE]
    neg = [s for s, l in zip(scores, labels) if l is ValLabel.UNANSWERABLE]
    if not pos or not neg:
        raise SingleClass("roc_auc needs both labels present")
    wins = 0.0
    for a in pos:
        for u in neg:
            if a > u:
                wins += 1.0
            elif a == u:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def calibrate_threshold(
    scores: Sequence[float], labels: Sequence[ValLabel]
) -> tuple[float, float]:
    """Threshold maximizing F1 for the UNANSWERABLE class.

    Prediction rule: UNANSWERABLE when score < threshold. Candidate
    thresholds are the midpoints of consecutive distinct scores plus
    sentinels below the minimum and above the maximum; ties resolve to the
    lowest threshold.
    """
    if not any(l is ValLabel.ANSWERABLE for l in labels) or not any(
        l is ValLabel.UNANSWERABLE for l in labels
    ):
        raise SingleClass("calibrate_threshold needs both labels present")
    uniq = sorted(set(scores))
    cands = [uniq[0] - 1.0]
    cands += [(a + b) / 2.0 for a, b in zip(uniq, uniq[1:])]
    cands.append(uniq[-1] + 1.0)

    def f1_at(threshold: float) -> float:
        tp = fp = fn = 0
        for s, l in zip(scores, labels):
            predicted_u = s < threshold
            actually_u = l is ValLabel.UNANSWERABLE
            if predicted_u and actually_u:
                tp += 1
            elif predicted_u and not actually_u:
                fp += 1
            elif not predicted_u and actually_u:
                fn += 1
        denom = 2 * tp + fp + fn
        return 2 * tp / denom if denom else 0.0

    best_t, best_f1 = cands[0], f1_at(cands[0])
    for t in cands[1:]:
        f1 = f1_at(t)
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return best_t, best_f1


def _majority(votes: Sequence[bool]) -> bool:
    if len(votes) % 2 == 0:
        raise EvenVoteCount(f"majority voting needs an odd vote count, got {len(votes)}")
    return sum(votes) * 2 > len(votes)


@dataclass
class SSAReport:
    sensibleness: float  # percent
    specificity: float  # percent
    ssa: float  # percent


def ssa_aggregate(votes: Sequence[SSAVoteRecord]) -> SSAReport:
    """Majority-vote each turn, then average the two percentages."""
    if not votes:
        raise ValueError("ssa_aggregate needs at least one vote record")
    sens = [_majority(v.sensibleness_votes) for v in votes]
    spec = [_majority(v.specificity_votes) for v in votes]
    s_pct = 100.0 * sum(sens) / len(sens)
    p_pct = 100.0 * sum(spec) / len(spec)
    return SSAReport(sensibleness=s_pct, specificity=p_pct, ssa=(s_pct + p_pct) / 2.0)


def agreement(items: Sequence[Sequence]) -> float:
    """Mean over items of pairwise rater agreement, as a percentage."""
    usable = [list(item) for item in items if len(item) >= 2]
    if not usable:
        raise InsufficientRaters("agreement needs items with >= 2 raters")
    per_item = []
    for ratings in usable:
        pairs = list(combinations(ratings, 2))
        per_item.append(sum(a == b for a, b in pairs) / len(pairs))
    return 100.0 * sum(per_item) / len(per_item)


def krippendorff_alpha(items: Sequence[Sequence]) -> float:
    """Krippendorff's alpha for nominal data via the coincidence matrix.

    Items with fewer than two ratings are dropped (standard treatment of
    missing data). Returns 1.0 under perfect agreement; alpha <= 1 always.
    """
    usable = [list(item) for item in items if len(item) >= 2]
    if not usable:
        raise InsufficientRaters("krippendorff_alpha needs items with >= 2 raters")
    # coincidence counts: for each item, each ordered pair of distinct
    # ratings contributes 1/(m_u - 1)
    coincidence: Counter = Counter()
    for ratings in usable:
        m = len(ratings)
        for i, a in enumerate(ratings):
            for j, b in enumerate(ratings):
                if i == j:
                    continue
                coincidence[(a, b)] += 1.0 / (m - 1)
    # observed disagreement: nominal metric (a != b)
    d_o = sum(c for (a, b), c in coincidence.items() if a != b)
    # expected disagreement from the marginals
    n_c = Counter()
    for ratings in usable:
        for a in ratings:
            n_c[a] += 1.0
    n = sum(n_c.values())
    d_e = (sum(n_c[a] * n_c[b] for a in n_c for b in n_c if a != b)) / (n - 1)
    if d_e == 0:
        return 1.0
    return 1.0 - d_o / d_e


def votes_to_items(
    votes: Sequence[SSAVoteRecord], dimension: str
) -> list[list[bool]]:
    attr = {
        "sensibleness": "sensibleness_votes",
        "specificity": "specificity_votes",
    }[dimension]
    return [list(getattr(v, attr)) for v in votes]


@dataclass
class RatingSummary:
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)


def aggregate_ratings(ratings: Sequence[DialogueRating]) -> RatingSummary:
    """Per-factor mean and population standard deviation."""
    if not ratings:
        raise ValueError("aggregate_ratings needs at least one rating")
    summary = RatingSummary()
    for factor in RATING_FACTORS:
        values = []
        for r in ratings:
            if factor not in r.scores:
                raise SchemaViolation(f"rating {r.dialogue_id} missing factor {factor}")
            values.append(r.scores[factor])
        arr = np.asarray(values, dtype=float)
        summary.mean[factor] = float(arr.mean())
        summary.std[factor] = float(arr.std())
    return summary


# --- persistence -----------------------------------------------------------


def load_vote_records(path) -> list[SSAVoteRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    SSAVoteRecord(
                        turn_ref=obj["turn_ref"],
                        sensibleness_votes=[bool(v) for v in obj["sensibleness_votes"]],
                        specificity_votes=[bool(v) for v in obj["specificity_votes"]],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SchemaViolation(f"bad vote record: {exc}", line=lineno)
    return records


def load_ratings(path) -> list[DialogueRating]:
    ratings = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ratings.append(
                    DialogueRating(dialogue_id=obj["dialogue_id"], scores=obj["scores"])
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaViolation(f"bad rating record: {exc}", line=lineno)
    return ratings
