"""One-shot prompting, backends, batch generation, and perplexity."""

import math

import pytest

from rolebot import toy_data
from rolebot.corpus import Source, Speaker
from rolebot.errors import (
    BackendFailure,
    EmptyContinuation,
    EmptyExample,
    WrongSource,
)
from rolebot.synthesis import (
    LMBackend,
    PromptTemplate,
    SamplingParams,
    ScriptedBackend,
    compose_prompt,
    generate_batch,
    generate_dialogue,
    generate_dialogue_record,
    ppl,
)

from .conftest import make_dialogue


class TestSamplingParams:
    def test_defaults(self):
        p = SamplingParams()
        assert p.temperature == 0.5
        assert p.nucleus_p == 0.8
        assert p.max_tokens == 512

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"temperature": 0.0},
            {"temperature": -1.0},
            {"nucleus_p": 0.0},
            {"nucleus_p": 1.5},
            {"max_tokens": 0},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SamplingParams(**kwargs)

    def test_to_dict_round_trips(self):
        p = SamplingParams(seed=9, stop_sequences=["\n\n"])
        assert SamplingParams(**p.to_dict()) == p


class TestComposePrompt:
    def test_layout(self):
        spec = toy_data.toy_role_spec()
        example = make_dialogue("hello there", "hi", id="e", source=Source.EXAMPLE)
        prompt = compose_prompt(spec, example)
        assert prompt.startswith(spec.outline)
        assert "AI: hello there" in prompt
        assert "User: hi" in prompt
        assert prompt.endswith("\n\nAI:")

    def test_outline_only_not_categories(self):
        spec = toy_data.toy_role_spec()
        example = make_dialogue("a", "b", id="e", source=Source.EXAMPLE)
        prompt = compose_prompt(spec, example)
        for cat in spec.categories:
            assert cat.description not in prompt

    def test_none_example_rejected(self):
        with pytest.raises(EmptyExample):
            compose_prompt(toy_data.toy_role_spec(), None)

    def test_custom_template(self):
        template = PromptTemplate(
            system_marker="S>", user_marker="U>", generation_cue="S>"
        )
        example = make_dialogue("a", "b", id="e", source=Source.EXAMPLE)
        prompt = compose_prompt(toy_data.toy_role_spec(), example, template)
        assert "S> a" in prompt and prompt.endswith("S>")


class TestGenerateDialogue:
    def _spec_and_examples(self):
        return toy_data.toy_role_spec(), toy_data.toy_seed_dialogues(n=3)

    def test_scripted_backend_produces_dialogue(self):
        spec, examples = self._spec_and_examples()
        backend = ScriptedBackend(["hello\nUser: hi\nAI: bye"])
        d, report = generate_dialogue(backend, spec, examples, SamplingParams(), 0)
        assert d.source is Source.GENERATED
        assert [t.text for t in d.turns] == ["hello", "hi", "bye"]
        assert d.turns[0].speaker is Speaker.SYSTEM

    def test_record_provenance(self):
        spec, examples = self._spec_and_examples()
        backend = ScriptedBackend(["x\nUser: y"])
        record = generate_dialogue_record(backend, spec, examples, SamplingParams(), 5)
        assert record.example_id in {e.id for e in examples}
        assert len(record.prompt_sha) == 16
        assert record.rng_seed == 5

    def test_non_example_source_rejected(self):
        spec, _ = self._spec_and_examples()
        bad = [make_dialogue("a", "b", id="g", source=Source.GENERATED)]
        with pytest.raises(WrongSource):
            generate_dialogue(ScriptedBackend(["x"]), spec, bad, SamplingParams(), 0)

    def test_backend_error_wrapped(self):
        spec, examples = self._spec_and_examples()

        class Exploding(LMBackend):
            def complete(self, prompt, params):
                raise RuntimeError("boom")

            def token_logprobs(self, context, continuation):
                raise RuntimeError("boom")

        with pytest.raises(BackendFailure) as err:
            generate_dialogue(Exploding(), spec, examples, SamplingParams(), 0)
        assert err.value.prompt_hash is not None

    def test_same_seed_same_dialogue(self):
        spec, examples = self._spec_and_examples()
        d1, _ = generate_dialogue(
            ScriptedBackend(["a\nUser: b", "c\nUser: d"]), spec, examples, SamplingParams(), 7
        )
        d2, _ = generate_dialogue(
            ScriptedBackend(["a\nUser: b", "c\nUser: d"]), spec, examples, SamplingParams(), 7
        )
        assert d1 == d2


class TestGenerateBatch:
    def test_deterministic_ids_and_content(self):
        spec = toy_data.toy_role_spec()
        examples = toy_data.toy_seed_dialogues(n=4)
        comps = toy_data.build_toy_transcripts(n=6, seed=1)
        r1 = generate_batch(ScriptedBackend(comps), spec, examples, SamplingParams(), 6, 9)
        r2 = generate_batch(ScriptedBackend(comps), spec, examples, SamplingParams(), 6, 9)
        assert [x.dialogue.id for x in r1] == [f"gen-9-{i:05d}" for i in range(6)]
        assert [x.dialogue for x in r1] == [x.dialogue for x in r2]

    def test_examples_cycle_without_replacement(self):
        spec = toy_data.toy_role_spec()
        examples = toy_data.toy_seed_dialogues(n=3)
        records = generate_batch(
            ScriptedBackend(["x\nUser: y"]), spec, examples, SamplingParams(), 6, 0
        )
        used = [r.example_id for r in records]
        # each full cycle of 3 uses each seed dialogue exactly once
        assert sorted(used[:3]) == sorted(e.id for e in examples)
        assert sorted(used[3:]) == sorted(e.id for e in examples)

    def test_workers_do_not_change_output(self):
        spec = toy_data.toy_role_spec()
        examples = toy_data.toy_seed_dialogues(n=2)
        comps = ["a\nUser: b", "c\nUser: d", "e\nUser: f"]
        seq = generate_batch(ScriptedBackend(comps), spec, examples, SamplingParams(), 5, 3)
        par = generate_batch(
            ScriptedBackend(comps), spec, examples, SamplingParams(), 5, 3, workers=4
        )
        assert [x.dialogue.id for x in seq] == [x.dialogue.id for x in par]

    def test_empty_examples_rejected(self):
        with pytest.raises(EmptyExample):
            generate_batch(
                ScriptedBackend(["x"]), toy_data.toy_role_spec(), [], SamplingParams(), 1, 0
            )


class TestPpl:
    def test_uniform_logprobs(self):
        backend = ScriptedBackend([], default_logprob=-2.0)
        # exp(mean of 2.0) regardless of length
        assert ppl(backend, "ctx", "a b c") == pytest.approx(math.exp(2.0))

    def test_table_lookup(self):
        backend = ScriptedBackend([], logprob_table={"a": -1.0, "b": -3.0})
        assert ppl(backend, "ctx", "a b") == pytest.approx(math.exp(2.0))

    def test_empty_continuation_rejected(self):
        with pytest.raises(EmptyContinuation):
            ppl(ScriptedBackend([]), "ctx", "   ")

    def test_higher_nll_higher_ppl(self):
        good = ScriptedBackend([], default_logprob=-0.5)
        bad = ScriptedBackend([], default_logprob=-5.0)
        assert ppl(bad, "c", "x y") > ppl(good, "c", "x y")


class TestScriptedBackend:
    def test_completions_cycle(self):
        b = ScriptedBackend(["one", "two"])
        p = SamplingParams()
        assert [b.complete("", p) for _ in range(3)] == ["one", "two", "one"]

    def test_empty_backend_fails(self):
        with pytest.raises(RuntimeError):
            ScriptedBackend([]).complete("", SamplingParams())
