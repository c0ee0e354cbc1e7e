"""One-shot dialogue synthesis against a pluggable language-model backend.

A prompt is the role outline followed by a single sampled seed dialogue and a
generation cue; the backend then writes an entire fresh session playing both
speakers. Only the completion is parsed into the output dialogue -- the
prompt never leaks into the corpus.

Backends are a two-method contract (`complete`, `token_logprobs`) so a local
toy model, a scripted transcript player, or a remote large model over HTTP
all plug in identically. Perplexity is computed from backend logprobs under
the backend's own tokenization; the toolkit never re-tokenizes.
"""

from __future__ import annotations

import hashlib
import math
import random
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .corpus import Dialogue, ParseReport, RoleSpecification, Source, parse_dialogue_text
from .errors import BackendFailure, EmptyContinuation, EmptyExample, WrongSource


@dataclass
class SamplingParams:
    temperature: float = 0.5
    nucleus_p: float = 0.8
    max_tokens: int = 512
    stop_sequences: list[str] = field(default_factory=list)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0 < self.nucleus_p <= 1:
            raise ValueError("nucleus_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "nucleus_p": self.nucleus_p,
            "max_tokens": self.max_tokens,
            "stop_sequences": list(self.stop_sequences),
            "seed": self.seed,
        }


class LMBackend(ABC):
    """Behavioral contract every language-model backend satisfies."""

    @abstractmethod
    def complete(self, prompt: str, params: SamplingParams) -> str:
        """Continue `prompt`; returns the completion text only."""

    @abstractmethod
    def token_logprobs(
        self, context: str, continuation: str
    ) -> list[tuple[str, float]]:
        """Per-token (token, logprob) of `continuation` given `context`."""


@dataclass
class PromptTemplate:
    """Layout of a one-shot generation prompt."""

    outline_block: str = "{outline}"
    example_turn_format: str = "{marker} {text}"
    generation_cue: str = "AI:"
    system_marker: str = "AI:"
    user_marker: str = "User:"


DEFAULT_TEMPLATE = PromptTemplate()


def compose_prompt(
    spec: RoleSpecification,
    example: Dialogue,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> str:
    """Render outline + serialized example dialogue + generation cue.

    Only the outline is prompted; the detailed category constraints are
    deliberately absent (they are enforced downstream by filtering, not by
    the prompt).
    """
    if example is None or not example.turns:
        raise EmptyExample("one-shot prompting requires a non-empty example dialogue")
    lines = [template.outline_block.format(outline=spec.outline)]
    for turn in example.turns:
        marker = (
            template.system_marker
            if turn.speaker.value == "system"
            else template.user_marker
        )
        lines.append(template.example_turn_format.format(marker=marker, text=turn.text))
    return "\n".join(lines) + "\n\n" + template.generation_cue


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


@dataclass
class GenerationRecord:
    """One synthesized dialogue plus its provenance."""

    dialogue: Dialogue
    report: ParseReport
    example_id: str
    prompt_sha: str
    params: SamplingParams
    rng_seed: int


def generate_dialogue(
    backend: LMBackend,
    spec: RoleSpecification,
    examples: Sequence[Dialogue],
    params: SamplingParams,
    rng_seed: int,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    dialogue_id: Optional[str] = None,
) -> tuple[Dialogue, ParseReport]:
    record = generate_dialogue_record(
        backend, spec, examples, params, rng_seed, template, dialogue_id
    )
    return record.dialogue, record.report


def generate_dialogue_record(
    backend: LMBackend,
    spec: RoleSpecification,
    examples: Sequence[Dialogue],
    params: SamplingParams,
    rng_seed: int,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    dialogue_id: Optional[str] = None,
) -> GenerationRecord:
    if not examples:
        raise EmptyExample("at least one seed example dialogue is required")
    for ex in examples:
        if ex.source is not Source.EXAMPLE:
            raise WrongSource(f"seed dialogue {ex.id} has source {ex.source.value}")
    rng = random.Random(rng_seed)
    example = examples[rng.randrange(len(examples))]
    prompt = compose_prompt(spec, example, template)
    sha = prompt_hash(prompt)
    try:
        completion = backend.complete(prompt, params)
    except Exception as exc:  # noqa: BLE001 - wrap whatever the backend raised
        raise BackendFailure(f"backend failed: {exc}", prompt_hash=sha)
    # the cue is part of the first system turn; completion continues after it
    transcript = template.generation_cue + " " + completion.lstrip()
    dialogue, report = parse_dialogue_text(
        transcript,
        system_marker=template.system_marker,
        user_marker=template.user_marker,
        dialogue_id=dialogue_id,
        source=Source.GENERATED,
        topic=example.topic,
    )
    return GenerationRecord(
        dialogue=dialogue,
        report=report,
        example_id=example.id,
        prompt_sha=sha,
        params=params,
        rng_seed=rng_seed,
    )


def generate_batch(
    backend: LMBackend,
    spec: RoleSpecification,
    examples: Sequence[Dialogue],
    params: SamplingParams,
    n: int,
    rng_seed: int,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    workers: int = 1,
) -> list[GenerationRecord]:
    """Generate `n` dialogues, sampling seed examples without replacement
    until the pool is exhausted, then reshuffling.

    Results are collected in submission order so a fixed seed gives a
    bit-identical batch regardless of worker count.
    """
    if not examples:
        raise EmptyExample("at least one seed example dialogue is required")
    rng = random.Random(rng_seed)
    order: list[int] = []
    picks: list[int] = []
    for _ in range(n):
        if not order:
            order = list(range(len(examples)))
            rng.shuffle(order)
        picks.append(order.pop())

    def one(i: int) -> GenerationRecord:
        example = examples[picks[i]]
        seed_i = rng_seed * 1_000_003 + i
        prompt = compose_prompt(spec, example, template)
        sha = prompt_hash(prompt)
        try:
            completion = backend.complete(prompt, params)
        except Exception as exc:  # noqa: BLE001
            raise BackendFailure(f"backend failed: {exc}", prompt_hash=sha)
        transcript = template.generation_cue + " " + completion.lstrip()
        dialogue, report = parse_dialogue_text(
            transcript,
            system_marker=template.system_marker,
            user_marker=template.user_marker,
            source=Source.GENERATED,
            topic=example.topic,
            dialogue_id=f"gen-{rng_seed}-{i:05d}",
        )
        return GenerationRecord(
            dialogue=dialogue,
            report=report,
            example_id=example.id,
            prompt_sha=sha,
            params=params,
            rng_seed=seed_i,
        )

    if workers <= 1:
        return [one(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n)))


def ppl(backend: LMBackend, context: str, continuation: str) -> float:
    """Perplexity of `continuation` given `context`: exp(mean NLL per token)."""
    if not continuation.strip():
        raise EmptyContinuation("cannot score an empty continuation")
    try:
        entries = backend.token_logprobs(context, continuation)
    except Exception as exc:  # noqa: BLE001
        raise BackendFailure(f"backend failed: {exc}")
    if not entries:
        raise EmptyContinuation("backend returned no tokens for the continuation")
    logprobs = [lp for _, lp in entries]
    return math.exp(-sum(logprobs) / len(logprobs))


class ScriptedBackend(LMBackend):
    """Transcript player: replays a fixed list of completions in order.

    Logprobs come from a word table (default -1.0 per whitespace token), so
    the whole synthesis and scoring path runs offline and deterministically.
    """

    def __init__(
        self,
        completions: Sequence[str],
        logprob_table: Optional[dict[str, float]] = None,
        default_logprob: float = -1.0,
    ):
        self.completions = list(completions)
        self.logprob_table = dict(logprob_table or {})
        self.default_logprob = default_logprob
        self.calls = 0

    def complete(self, prompt: str, params: SamplingParams) -> str:
        if not self.completions:
            raise RuntimeError("scripted backend has no completions")
        text = self.completions[self.calls % len(self.completions)]
        self.calls += 1
        return text

    def token_logprobs(self, context, continuation):
        return [
            (tok, self.logprob_table.get(tok, self.default_logprob))
            for tok in continuation.split()
        ]


class HttpBackend(LMBackend):
    """Adapter for a conforming remote backend behind a single endpoint.

    The endpoint accepts {"prompt", "params"} and returns {"text"}, or
    {"context", "continuation"} and returns {"tokens", "logprobs"}.
    """

    def __init__(self, url: str, timeout: float = 60.0):
        import httpx

        self.url = url
        self._client = httpx.Client(timeout=timeout)

    def complete(self, prompt: str, params: SamplingParams) -> str:
        resp = self._client.post(
            self.url, json={"prompt": prompt, "params": params.to_dict()}
        )
        resp.raise_for_status()
        return resp.json()["text"]

    def token_logprobs(self, context, continuation):
        resp = self._client.post(
            self.url, json={"context": context, "continuation": continuation}
        )
        resp.raise_for_status()
        obj = resp.json()
        return list(zip(obj["tokens"], obj["logprobs"]))
