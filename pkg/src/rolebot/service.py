"""HTTP surface over the feedback and filtering workflows.

Endpoints (all JSON):
  POST /session                         -> new chat session with opening turn
  POST /session/{id}/message            -> user message, returns system reply
  POST /session/{id}/fix                -> reject last system turn, regenerate
  POST /session/{id}/save               -> close session, report example counts
  GET  /metrics/error-rate              -> overall + per-type error rates
  GET  /metadata                        -> error-type taxonomy for clients
  GET  /filter/tasks/next               -> next pending filtering task
  POST /filter/tasks/{id}/annotation    -> submit a filtering annotation
  POST /respond                         -> stateless pipeline decision
  POST /lm                              -> backend wire adapter (optional)
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .corpus import ErrorType, FilterAnnotation, Speaker, Turn
from .errors import (
    AlreadyDone,
    IndexMismatch,
    NothingToFix,
    OutOfTurn,
    RolebotError,
    SessionClosed,
    SessionNotFound,
    TaskNotFound,
)
from .feedback import ChatService, error_rate, hash_seed, routing_error_breakdown
from .filtering import FilterTaskStore
from .pipeline import ModelsBundle, PipelineConfig, respond_rfg
from .synthesis import LMBackend, SamplingParams


class MessageIn(BaseModel):
    text: str


class FixIn(BaseModel):
    error_type: str


class AnnotationIn(BaseModel):
    first_violation_index: Optional[int] = None
    error_type: Optional[str] = None
    elapsed_seconds: Optional[float] = None


class TurnIn(BaseModel):
    speaker: str
    text: str


class RespondIn(BaseModel):
    session_id: str
    history: list[TurnIn]


def _turn_out(turn: Turn) -> dict:
    return {"speaker": turn.speaker.value, "text": turn.text, "index": turn.index}


def _http_error(exc: RolebotError) -> HTTPException:
    mapping = {
        SessionNotFound: 404,
        TaskNotFound: 404,
        SessionClosed: 409,
        AlreadyDone: 409,
        OutOfTurn: 409,
        NothingToFix: 409,
        IndexMismatch: 422,
    }
    status = mapping.get(type(exc), 400)
    return HTTPException(status_code=status, detail=str(exc))


def create_app(
    chat_service: Optional[ChatService] = None,
    task_store: Optional[FilterTaskStore] = None,
    bundle: Optional[ModelsBundle] = None,
    pipeline_config: Optional[PipelineConfig] = None,
    backend: Optional[LMBackend] = None,
) -> FastAPI:
    app = FastAPI(title="rolebot")

    @app.get("/metadata")
    def metadata():
        return {"error_types": [e.value for e in ErrorType]}

    if chat_service is not None:

        @app.post("/session")
        def start_session():
            session = chat_service.start_session()
            return {
                "session_id": session.id,
                "greeting": _turn_out(session.history[0]),
                "route": session.response_events[0].route.value,
            }

        @app.post("/session/{session_id}/message")
        def post_message(session_id: str, body: MessageIn):
            try:
                turn = chat_service.post_user_message(session_id, body.text)
            except RolebotError as exc:
                raise _http_error(exc)
            session = chat_service.get(session_id)
            return {
                "turn": _turn_out(turn),
                "route": session.response_events[-1].route.value,
            }

        @app.post("/session/{session_id}/fix")
        def fix(session_id: str, body: FixIn):
            try:
                error_type = ErrorType(body.error_type)
            except ValueError:
                raise HTTPException(422, f"unknown error_type {body.error_type!r}")
            try:
                turn = chat_service.fix_response(session_id, error_type)
            except RolebotError as exc:
                raise _http_error(exc)
            session = chat_service.get(session_id)
            attempts = sum(
                1 for e in session.fix_events if e.turn_index == turn.index
            )
            return {
                "turn": _turn_out(turn),
                "route": session.response_events[-1].route.value,
                "attempt_number": attempts,
            }

        @app.post("/session/{session_id}/save")
        def save(session_id: str):
            try:
                positives, negatives = chat_service.save_session(session_id)
            except RolebotError as exc:
                raise _http_error(exc)
            return {"positives": len(positives), "negatives": len(negatives)}

        @app.get("/metrics/error-rate")
        def metrics():
            sessions = chat_service.sessions()
            if not sessions:
                return {
                    "total_returned_responses": 0,
                    "total_fixes": 0,
                    "overall_rate": 0.0,
                    "per_type_rates": {},
                    "per_route_rates": {},
                }
            report = error_rate(sessions)
            return {
                "total_returned_responses": report.total_returned_responses,
                "total_fixes": report.total_fixes,
                "overall_rate": report.overall_rate,
                "per_type_rates": report.per_type_rates,
                "per_route_rates": routing_error_breakdown(sessions),
            }

    if task_store is not None:

        @app.get("/filter/tasks/next")
        def next_task(annotator: Optional[str] = None):
            task = task_store.next_pending(annotator)
            if task is None:
                return {"task": None, "remaining": 0}
            remaining = sum(
                1 for t in task_store.tasks() if t.status.value == "pending"
            )
            return {
                "task": {
                    "task_id": task.task_id,
                    "dialogue": {
                        "id": task.dialogue.id,
                        "turns": [_turn_out(t) for t in task.dialogue.turns],
                    },
                },
                "remaining": remaining,
            }

        @app.post("/filter/tasks/{task_id}/annotation")
        def annotate(task_id: str, body: AnnotationIn):
            try:
                error_type = ErrorType(body.error_type) if body.error_type else None
                annotation = FilterAnnotation(
                    dialogue_id=task_id,
                    first_violation_index=body.first_violation_index,
                    error_type=error_type,
                )
            except ValueError as exc:
                raise HTTPException(422, str(exc))
            try:
                task = task_store.submit_annotation(
                    task_id, annotation, body.elapsed_seconds
                )
            except RolebotError as exc:
                raise _http_error(exc)
            return {"task_id": task.task_id, "status": task.status.value}

    if bundle is not None and pipeline_config is not None:

        @app.post("/respond")
        def respond(body: RespondIn):
            try:
                history = [
                    Turn(speaker=Speaker(t.speaker), text=t.text, index=i)
                    for i, t in enumerate(body.history)
                ]
            except ValueError as exc:
                raise HTTPException(422, str(exc))
            try:
                decision = respond_rfg(
                    history,
                    bundle,
                    pipeline_config,
                    request_seed=hash_seed(body.session_id, len(history)),
                )
            except RolebotError as exc:
                raise _http_error(exc)
            return {
                "response": decision.response,
                "route": decision.route.value,
                "diagnostics": decision.diagnostics,
            }

    if backend is not None:

        @app.post("/lm")
        def lm(body: dict):
            if "prompt" in body:
                params = SamplingParams(**body.get("params", {}))
                return {"text": backend.complete(body["prompt"], params)}
            if "context" in body and "continuation" in body:
                entries = backend.token_logprobs(body["context"], body["continuation"])
                return {
                    "tokens": [t for t, _ in entries],
                    "logprobs": [lp for _, lp in entries],
                }
            raise HTTPException(422, "expected prompt or context/continuation payload")

    return app
