"""Human-in-the-loop chat sessions with the Fix-button correction loop.

Annotators chat turn-by-turn with the served bot. When a system utterance
leaves the role specification they pick an error type and press Fix: the
rejected utterance is recorded as a negative example and replaced in place
by a fresh generation (the rejected candidate is excluded for that turn, and
the route is forced to generation so a rejected retrieval cannot come back).
Saving a session turns every accepted system turn into a positive example.

Every shown response -- final turns and every rejected attempt -- counts in
the error-rate denominator; the numerator is the number of Fix presses.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

from .corpus import (
    ErrorType,
    Label,
    Speaker,
    TrainingExample,
    Turn,
)
from .errors import (
    IOFailure,
    ModelMissing,
    NothingToFix,
    OutOfTurn,
    SchemaViolation,
    SessionClosed,
    SessionNotFound,
)
from .pipeline import ModelsBundle, PipelineConfig, PipelineDecision, Route, respond_rfg


class SessionStatus(str, Enum):
    ACTIVE = "active"
    SAVED = "saved"
    ABANDONED = "abandoned"


@dataclass
class FixEvent:
    turn_index: int
    rejected_text: str
    error_type: ErrorType
    replacement_text: str
    attempt_number: int
    route: Route  # route of the rejected response


@dataclass
class ResponseEvent:
    """One system response shown to the user (final or later rejected)."""

    turn_index: int
    text: str
    route: Route


@dataclass
class ChatSession:
    id: str
    history: list[Turn] = field(default_factory=list)
    fix_events: list[FixEvent] = field(default_factory=list)
    response_events: list[ResponseEvent] = field(default_factory=list)
    status: SessionStatus = SessionStatus.ACTIVE
    config_snapshot: dict = field(default_factory=dict)

    def final_system_turns(self) -> list[Turn]:
        return [t for t in self.history if t.speaker is Speaker.SYSTEM]


Responder = Callable[..., PipelineDecision]


def pipeline_responder(bundle: ModelsBundle, cfg: PipelineConfig) -> Responder:
    if bundle.retriever is None or bundle.reranker is None or bundle.generator is None:
        raise ModelMissing("feedback service needs a full retrieve-fail-generate bundle")

    def respond(history, request_seed=0, excluded_candidates=(), force_generation=False):
        return respond_rfg(
            history,
            bundle,
            cfg,
            request_seed=request_seed,
            excluded_candidates=excluded_candidates,
            force_generation=force_generation,
        )

    return respond


class ChatService:
    """Session store; operations on one session are serialized by a lock."""

    def __init__(self, responder: Responder, config_snapshot: Optional[dict] = None):
        if responder is None:
            raise ModelMissing("a responder (pipeline) is required")
        self._responder = responder
        self._snapshot = config_snapshot or {}
        self._sessions: dict[str, ChatSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global = threading.Lock()
        self._counter = 0

    def get(self, session_id: str) -> ChatSession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionNotFound(session_id)

    def sessions(self) -> list[ChatSession]:
        return list(self._sessions.values())

    def _lock(self, session_id: str) -> threading.Lock:
        return self._locks[session_id]

    def _request_seed(self, session: ChatSession) -> int:
        # deterministic per (session, shown-response ordinal)
        return hash_seed(session.id, len(session.response_events))

    def start_session(self, session_id: Optional[str] = None) -> ChatSession:
        with self._global:
            self._counter += 1
            sid = session_id or f"session-{self._counter:06d}-{uuid.uuid4().hex[:8]}"
            session = ChatSession(id=sid, config_snapshot=dict(self._snapshot))
            self._sessions[sid] = session
            self._locks[sid] = threading.Lock()
        decision = self._responder([], request_seed=self._request_seed(session))
        opener = Turn(speaker=Speaker.SYSTEM, text=decision.response, index=0)
        session.history.append(opener)
        session.response_events.append(
            ResponseEvent(turn_index=0, text=decision.response, route=decision.route)
        )
        return session

    def post_user_message(self, session_id: str, text: str) -> Turn:
        session = self.get(session_id)
        with self._lock(session_id):
            if session.status is not SessionStatus.ACTIVE:
                raise SessionClosed(f"session {session_id} is {session.status.value}")
            if session.history and session.history[-1].speaker is Speaker.USER:
                raise OutOfTurn("waiting for a system reply")
            user_turn = Turn(speaker=Speaker.USER, text=text, index=len(session.history))
            session.history.append(user_turn)
            decision = self._responder(
                list(session.history), request_seed=self._request_seed(session)
            )
            system_turn = Turn(
                speaker=Speaker.SYSTEM, text=decision.response, index=len(session.history)
            )
            session.history.append(system_turn)
            session.response_events.append(
                ResponseEvent(
                    turn_index=system_turn.index,
                    text=decision.response,
                    route=decision.route,
                )
            )
            return system_turn

    def fix_response(self, session_id: str, error_type: ErrorType) -> Turn:
        session = self.get(session_id)
        with self._lock(session_id):
            if session.status is not SessionStatus.ACTIVE:
                raise SessionClosed(f"session {session_id} is {session.status.value}")
            if not session.history or session.history[-1].speaker is not Speaker.SYSTEM:
                raise NothingToFix("last turn is not a system turn")
            last = session.history[-1]
            prior = [e for e in session.fix_events if e.turn_index == last.index]
            attempt = len(prior) + 1
            rejected_route = next(
                e.route
                for e in reversed(session.response_events)
                if e.turn_index == last.index
            )
            decision = self._responder(
                list(session.history[: last.index]),
                request_seed=self._request_seed(session),
                excluded_candidates=(last.text,),
                force_generation=True,
            )
            replacement = Turn(
                speaker=Speaker.SYSTEM, text=decision.response, index=last.index
            )
            session.fix_events.append(
                FixEvent(
                    turn_index=last.index,
                    rejected_text=last.text,
                    error_type=error_type,
                    replacement_text=decision.response,
                    attempt_number=attempt,
                    route=rejected_route,
                )
            )
            session.history[-1] = replacement
            session.response_events.append(
                ResponseEvent(
                    turn_index=last.index, text=decision.response, route=decision.route
                )
            )
            return replacement

    def save_session(
        self, session_id: str
    ) -> tuple[list[TrainingExample], list[TrainingExample]]:
        session = self.get(session_id)
        with self._lock(session_id):
            if session.status is not SessionStatus.ACTIVE:
                raise SessionClosed(f"session {session_id} is {session.status.value}")
            session.status = SessionStatus.SAVED
            return extract_session_examples(session)


def hash_seed(*parts) -> int:
    import hashlib

    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "big")


def extract_session_examples(
    session: ChatSession,
) -> tuple[list[TrainingExample], list[TrainingExample]]:
    """Positives from accepted system turns, negatives from Fix events."""
    positives = [
        TrainingExample(
            history=list(session.history[: turn.index]),
            response=turn,
            label=Label.POSITIVE,
            origin_dialogue_id=session.id,
        )
        for turn in session.final_system_turns()
    ]
    negatives = [
        TrainingExample(
            history=list(session.history[: e.turn_index]),
            response=Turn(
                speaker=Speaker.SYSTEM, text=e.rejected_text, index=e.turn_index
            ),
            label=Label.NEGATIVE,
            error_type=e.error_type,
            origin_dialogue_id=session.id,
        )
        for e in session.fix_events
    ]
    return positives, negatives


@dataclass
class ErrorReport:
    total_returned_responses: int
    total_fixes: int
    overall_rate: float
    per_type_rates: dict[str, float]


def error_rate(sessions: Sequence[ChatSession]) -> ErrorReport:
    """Fix presses divided by every response ever shown (finals + rejected)."""
    if not sessions:
        raise ValueError("error_rate needs at least one session")
    total = 0
    fixes = 0
    by_type: dict[str, int] = {}
    for s in sessions:
        total += len(s.final_system_turns()) + len(s.fix_events)
        fixes += len(s.fix_events)
        for e in s.fix_events:
            by_type[e.error_type.value] = by_type.get(e.error_type.value, 0) + 1
    overall = fixes / total if total else 0.0
    per_type = {t: n / total for t, n in sorted(by_type.items())}
    return ErrorReport(
        total_returned_responses=total,
        total_fixes=fixes,
        overall_rate=overall,
        per_type_rates=per_type,
    )


def routing_error_breakdown(
    sessions: Sequence[ChatSession],
) -> dict[str, Optional[float]]:
    """Per-route fix rate: fixes on that route / responses served by it.

    Routes that never served a response report None.
    """
    served: dict[str, int] = {r.value: 0 for r in Route}
    fixed: dict[str, int] = {r.value: 0 for r in Route}
    for s in sessions:
        for e in s.response_events:
            served[e.route.value] += 1
        for f in s.fix_events:
            fixed[f.route.value] += 1
    return {
        route: (fixed[route] / n if n else None) for route, n in served.items()
    }


# --- event-log persistence -------------------------------------------------


def session_to_events(session: ChatSession) -> list[dict]:
    events: list[dict] = [
        {"event": "start", "session_id": session.id, "config": session.config_snapshot}
    ]
    for t in session.history:
        events.append(
            {"event": "turn", "speaker": t.speaker.value, "text": t.text, "index": t.index}
        )
    for e in session.response_events:
        events.append(
            {
                "event": "response",
                "turn_index": e.turn_index,
                "text": e.text,
                "route": e.route.value,
            }
        )
    for e in session.fix_events:
        events.append(
            {
                "event": "fix",
                "turn_index": e.turn_index,
                "rejected_text": e.rejected_text,
                "error_type": e.error_type.value,
                "replacement_text": e.replacement_text,
                "attempt_number": e.attempt_number,
                "route": e.route.value,
            }
        )
    events.append({"event": "status", "status": session.status.value})
    return events


def save_session_log(sessions: Sequence[ChatSession], path) -> None:
    try:
        with Path(path).open("w", encoding="utf-8") as fh:
            for session in sessions:
                for event in session_to_events(session):
                    fh.write(json.dumps(event, ensure_ascii=False))
                    fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}")


def load_session_log(path) -> list[ChatSession]:
    sessions: list[ChatSession] = []
    current: Optional[ChatSession] = None
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    kind = obj["event"]
                    if kind == "start":
                        current = ChatSession(
                            id=obj["session_id"], config_snapshot=obj.get("config", {})
                        )
                        sessions.append(current)
                    elif kind == "turn":
                        current.history.append(
                            Turn(
                                speaker=Speaker(obj["speaker"]),
                                text=obj["text"],
                                index=obj["index"],
                            )
                        )
                    elif kind == "response":
                        current.response_events.append(
                            ResponseEvent(
                                turn_index=obj["turn_index"],
                                text=obj["text"],
                                route=Route(obj["route"]),
                            )
                        )
                    elif kind == "fix":
                        current.fix_events.append(
                            FixEvent(
                                turn_index=obj["turn_index"],
                                rejected_text=obj["rejected_text"],
                                error_type=ErrorType(obj["error_type"]),
                                replacement_text=obj["replacement_text"],
                                attempt_number=obj["attempt_number"],
                                route=Route(obj["route"]),
                            )
                        )
                    elif kind == "status":
                        current.status = SessionStatus(obj["status"])
                    else:
                        raise SchemaViolation(f"unknown event {kind}", line=lineno)
                except SchemaViolation:
                    raise
                except (KeyError, ValueError, TypeError, AttributeError) as exc:
                    raise SchemaViolation(f"bad event record: {exc}", line=lineno)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}")
    return sessions
