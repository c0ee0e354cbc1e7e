"""Exception hierarchy shared across the toolkit.

Every operation raises a named subclass of RolebotError so callers (and the
CLI) can map failures to user errors vs. internal errors without string
matching.
"""


class RolebotError(Exception):
    """Base class for all toolkit errors."""


# --- corpus ---------------------------------------------------------------

class EmptyDialogue(RolebotError):
    """No valid leading system turn could be parsed."""


class MalformedMarkers(RolebotError):
    """The first marked line of a transcript is a user turn."""


class IndexMismatch(RolebotError):
    """An annotation index does not point at a system turn of the dialogue."""


class EmptyCorpus(RolebotError):
    """A corpus-level statistic was requested on an empty corpus."""


class IOFailure(RolebotError):
    """A persistence operation failed at the filesystem level."""


class SchemaViolation(RolebotError):
    """A persisted record does not match the expected schema."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# --- synthesis ------------------------------------------------------------

class EmptyExample(RolebotError):
    """One-shot prompting requires a non-empty example dialogue."""


class BackendFailure(RolebotError):
    """The language-model backend raised; carries the prompt hash."""

    def __init__(self, message, prompt_hash=None):
        super().__init__(message)
        self.prompt_hash = prompt_hash


class EmptyContinuation(RolebotError):
    """Perplexity of an empty continuation is undefined."""


# --- filtering ------------------------------------------------------------

class WrongSource(RolebotError):
    """A dialogue with an unexpected source entered the filtering queue."""


class AlreadyDone(RolebotError):
    """An annotation was submitted for a task that is already DONE."""


class PendingTasksRemain(RolebotError):
    """Export was requested while some tasks are not DONE."""


# --- models ---------------------------------------------------------------

class EmptyClass(RolebotError):
    """Classifier training needs at least one example of each class."""


class DivergedTraining(RolebotError):
    """Training produced a non-finite loss or parameter."""


class KTooLarge(RolebotError):
    """Requested more candidates than are available."""


class NoDropoutConfigured(RolebotError):
    """MC-Dropout scoring requires a model built with dropout > 0."""


class EmptyResponse(RolebotError):
    """A loss was requested for a response that encodes to zero tokens."""


# --- pipeline / feedback --------------------------------------------------

class ModelMissing(RolebotError):
    """A pipeline stage needs a model that was not provided."""


class OutOfTurn(RolebotError):
    """A user message was posted when it is not the user's turn."""


class SessionClosed(RolebotError):
    """An operation was attempted on a SAVED or ABANDONED session."""


class NothingToFix(RolebotError):
    """Fix was pressed while the last turn is not a system turn."""


class SessionNotFound(RolebotError):
    """Unknown session id."""


class TaskNotFound(RolebotError):
    """Unknown filter task id."""


# --- evaluation -----------------------------------------------------------

class InconsistentK(RolebotError):
    """Ranking eval items do not share a single candidate-set size."""


class SingleClass(RolebotError):
    """AUC / threshold calibration needs both labels present."""


class EvenVoteCount(RolebotError):
    """Majority voting requires an odd number of votes per record."""


class InsufficientRaters(RolebotError):
    """Agreement statistics need at least two raters per item."""


# --- cli ------------------------------------------------------------------

class ConfigInvalid(RolebotError):
    """A run config failed validation; carries the offending field path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class StageFailure(RolebotError):
    """A workflow stage failed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
