"""Human filtering of generated dialogues.

Each generated dialogue becomes one task; an annotator marks the first
system turn that leaves the role specification (or marks "no violation").
Completed tasks export training examples and a survival report: turns at
indices <= the violation survive (the violating turn itself survives as the
negative example), everything after is discarded.
"""

from __future__ import annotations

import statistics
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .corpus import (
    Dialogue,
    FilterAnnotation,
    Source,
    TrainingExample,
    extract_examples,
)
from .errors import AlreadyDone, PendingTasksRemain, TaskNotFound, WrongSource


class TaskStatus(str, Enum):
    PENDING = "pending"
    DONE = "done"
    SKIPPED = "skipped"


@dataclass
class FilterTask:
    task_id: str
    dialogue: Dialogue
    assigned_to: Optional[str] = None
    status: TaskStatus = TaskStatus.PENDING
    annotation: Optional[FilterAnnotation] = None
    elapsed_seconds: Optional[float] = None


def create_tasks(dialogues: list[Dialogue]) -> list[FilterTask]:
    """One PENDING task per generated dialogue, ordered by dialogue id."""
    for d in dialogues:
        if d.source is not Source.GENERATED:
            raise WrongSource(
                f"dialogue {d.id} has source {d.source.value}; filtering takes generated dialogues"
            )
    return [
        FilterTask(task_id=d.id, dialogue=d)
        for d in sorted(dialogues, key=lambda d: d.id)
    ]


@dataclass
class SurvivalReport:
    total_turns: int
    surviving_turns: int

    @property
    def survival_rate(self) -> float:
        return self.surviving_turns / self.total_turns if self.total_turns else 0.0


def export_examples(
    tasks: list[FilterTask],
) -> tuple[list[TrainingExample], list[TrainingExample], SurvivalReport]:
    """Concatenate per-dialogue example extraction over all DONE tasks."""
    pending = [t.task_id for t in tasks if t.status is not TaskStatus.DONE]
    if pending:
        raise PendingTasksRemain(f"{len(pending)} tasks not done (e.g. {pending[0]})")
    positives: list[TrainingExample] = []
    negatives: list[TrainingExample] = []
    total = 0
    surviving = 0
    for task in tasks:
        pos, neg = extract_examples(task.dialogue, task.annotation)
        positives.extend(pos)
        negatives.extend(neg)
        n = len(task.dialogue.turns)
        total += n
        v = task.annotation.first_violation_index
        surviving += n if v is None else v + 1
    return positives, negatives, SurvivalReport(total_turns=total, surviving_turns=surviving)


@dataclass
class ThroughputReport:
    count: int
    mean_seconds: Optional[float]
    median_seconds: Optional[float]


def annotation_throughput(tasks: list[FilterTask]) -> ThroughputReport:
    times = [
        t.elapsed_seconds
        for t in tasks
        if t.status is TaskStatus.DONE and t.elapsed_seconds is not None
    ]
    if not times:
        return ThroughputReport(count=0, mean_seconds=None, median_seconds=None)
    return ThroughputReport(
        count=len(times),
        mean_seconds=sum(times) / len(times),
        median_seconds=statistics.median(times),
    )


class FilterTaskStore:
    """In-memory task queue with atomic check-and-set submission.

    Multiple annotators may submit concurrently; each task flips
    PENDING -> DONE exactly once.
    """

    def __init__(self, dialogues: list[Dialogue]):
        self._tasks = {t.task_id: t for t in create_tasks(dialogues)}
        self._order = sorted(self._tasks)
        self._lock = threading.Lock()

    def tasks(self) -> list[FilterTask]:
        return [self._tasks[tid] for tid in self._order]

    def get(self, task_id: str) -> FilterTask:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise TaskNotFound(task_id)

    def next_pending(self, annotator: Optional[str] = None) -> Optional[FilterTask]:
        with self._lock:
            for tid in self._order:
                task = self._tasks[tid]
                if task.status is TaskStatus.PENDING:
                    if annotator is not None:
                        task.assigned_to = annotator
                    return task
        return None

    def submit_annotation(
        self,
        task_id: str,
        annotation: FilterAnnotation,
        elapsed_seconds: Optional[float] = None,
    ) -> FilterTask:
        task = self.get(task_id)
        annotation.validate_against(task.dialogue)
        with self._lock:
            if task.status is TaskStatus.DONE:
                raise AlreadyDone(f"task {task_id} already annotated")
            task.annotation = annotation
            task.elapsed_seconds = elapsed_seconds
            task.status = TaskStatus.DONE
        return task

    def done(self) -> bool:
        return all(t.status is TaskStatus.DONE for t in self._tasks.values())
