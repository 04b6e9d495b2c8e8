import pytest

from legalrag.corpus import Label
from legalrag.errors import ProviderError
from legalrag.llm_gateway import (
    UNPARSABLE,
    CachingProvider,
    Completion,
    CompletionCache,
    CompletionParams,
    MockChatProvider,
    ParseStatus,
    ReplayProvider,
    RetryPolicy,
    SequenceMockProvider,
    cache_key,
    classify_dataset,
    classify_instance,
    parse_label,
)
from legalrag.prompting import PromptMessages, PromptTemplate, Strategy, TerminalField

from conftest import make_instance


def messages_of(user: str) -> PromptMessages:
    return PromptMessages(system="sys", user=user, terminal_field=TerminalField.LABEL)


class TestCacheKey:
    def test_identical_inputs_identical_digest(self):
        params = CompletionParams()
        assert cache_key(messages_of("hello"), params) == cache_key(messages_of("hello"), params)

    def test_temperature_changes_digest(self):
        msgs = messages_of("hello")
        assert cache_key(msgs, CompletionParams(temperature=0.7)) != cache_key(
            msgs, CompletionParams(temperature=0.0)
        )

    def test_digest_length_constant(self):
        short = messages_of("word " * 10)
        long = messages_of("word " * 10_000)
        params = CompletionParams()
        assert len(cache_key(short, params)) == len(cache_key(long, params)) == 64


class TestProviders:
    def test_scripted_mock(self):
        params = CompletionParams()
        msgs = messages_of("the prompt")
        digest = cache_key(msgs, params)
        provider = MockChatProvider(script={digest: "Label: TRUE"})
        assert provider.complete(msgs, params).text == "Label: TRUE"

    def test_cache_hit_on_second_call(self, tmp_path):
        cache = CompletionCache(tmp_path / "cache")
        provider = CachingProvider(MockChatProvider(), cache)
        params = CompletionParams()
        msgs = messages_of("cached prompt")
        first = provider.complete(msgs, params)
        second = provider.complete(msgs, params)
        assert not first.cache_hit
        assert second.cache_hit
        assert first.text == second.text

    def test_replay_with_empty_cache_names_digest(self, tmp_path):
        cache = CompletionCache(tmp_path / "cache")
        provider = ReplayProvider(cache)
        params = CompletionParams()
        msgs = messages_of("never seen")
        with pytest.raises(ProviderError, match=cache_key(msgs, params)):
            provider.complete(msgs, params)

    def test_replay_reproduces_cached_outputs(self, tmp_path):
        cache = CompletionCache(tmp_path / "cache")
        caching = CachingProvider(MockChatProvider(), cache)
        params = CompletionParams()
        msgs = messages_of("warm me up")
        original = caching.complete(msgs, params)
        replayed = ReplayProvider(cache).complete(msgs, params)
        assert replayed.text == original.text
        assert replayed.cache_hit

    def test_mock_default_rule_is_deterministic(self):
        params = CompletionParams()
        msgs = messages_of("mock determinism")
        a = MockChatProvider().complete(msgs, params)
        b = MockChatProvider().complete(msgs, params)
        assert a.text == b.text


# Curated completion-string corpus: (text, expected outcome).
PARSE_CASES = [
    ("Analysis: the claim holds. Label: TRUE", Label.TRUE),
    ("Label: FALSE", Label.FALSE),
    ("label: true", Label.TRUE),
    ("Label:FALSE", Label.FALSE),
    ("Label: **TRUE**", Label.TRUE),
    ("TRUE", Label.TRUE),
    ("FALSE", Label.FALSE),
    ("  TRUE  \n", Label.TRUE),
    ("the claim is TRUE in part, but ultimately FALSE", Label.FALSE),
    ("FALSE at first glance, yet TRUE on reflection", Label.TRUE),
    ("The answer is true.", Label.TRUE),
    ("Verdict: false!", Label.FALSE),
    ("Analysis first...\n\nLabel: TRUE\n", Label.TRUE),
    # Labeled occurrence outranks any later bare token.
    ("Label: TRUE, though some say false", Label.TRUE),
    ("Label: FALSE. A TRUE statement would differ.", Label.FALSE),
    ("Label: TRUE\nLabel: FALSE", Label.FALSE),
    # No standalone token at all.
    ("The candidate cannot be evaluated.", UNPARSABLE),
    ("", UNPARSABLE),
    ("untrue and falsehood are not standalone tokens", UNPARSABLE),
    ("TRUTHFULLY speaking, no verdict", UNPARSABLE),
    ("label: maybe", UNPARSABLE),
    ("Ambiguous reasoning with no verdict words.", UNPARSABLE),
]


class TestParseLabel:
    @pytest.mark.parametrize("text, expected", PARSE_CASES)
    def test_curated_corpus(self, text, expected):
        assert parse_label(text) is expected or parse_label(text) == expected

    @pytest.mark.parametrize("label", ["TRUE", "FALSE"])
    def test_round_trip_with_rendered_blocks(self, label):
        assert parse_label(f"Introduction: I.\nQuestion: Q?\nLabel: {label}") == Label(label)


@pytest.fixture
def test_instance():
    return make_instance(7, None, analysis=None)


@pytest.fixture
def template():
    return PromptTemplate()


class TestClassifyInstance:
    def test_clean_first_try(self, template, test_instance):
        provider = SequenceMockProvider(["Label: TRUE"])
        pred = classify_instance(provider, Strategy.ZERO_SHOT, template, test_instance)
        assert (pred.label, pred.retries_used, pred.parse_status) == (
            Label.TRUE,
            0,
            ParseStatus.CLEAN,
        )

    def test_recovered_after_one_retry(self, template, test_instance):
        provider = SequenceMockProvider(["no verdict", "FALSE"])
        pred = classify_instance(provider, Strategy.ZERO_SHOT, template, test_instance)
        assert (pred.label, pred.retries_used, pred.parse_status) == (
            Label.FALSE,
            1,
            ParseStatus.RECOVERED,
        )

    def test_defaulted_after_exhausted_retries(self, template, test_instance):
        limit = 3
        provider = SequenceMockProvider(["gibberish"] * (limit + 1))
        pred = classify_instance(
            provider,
            Strategy.ZERO_SHOT,
            template,
            test_instance,
            retry_policy=RetryPolicy(retry_limit=limit),
        )
        assert (pred.label, pred.retries_used, pred.parse_status) == (
            Label.FALSE,
            limit,
            ParseStatus.DEFAULTED,
        )
        assert provider.calls == limit + 1

    def test_retry_appends_preamble(self, template, test_instance):
        seen = []

        class SpyProvider(SequenceMockProvider):
            def complete(self, messages, params):
                seen.append(messages.user)
                return super().complete(messages, params)

        provider = SpyProvider(["??", "TRUE"])
        policy = RetryPolicy(retry_limit=2, retry_preamble="Previous output had no label.")
        classify_instance(
            provider, Strategy.ZERO_SHOT, template, test_instance, retry_policy=policy
        )
        assert "no label" not in seen[0]
        assert seen[1].endswith("Previous output had no label.")

    def test_cot_captures_analysis_before_label(self, template, test_instance):
        provider = SequenceMockProvider(["Careful reasoning here.\nLabel: TRUE"])
        pred = classify_instance(provider, Strategy.ZERO_SHOT_COT, template, test_instance)
        assert pred.generated_analysis == "Careful reasoning here."
        assert pred.label is Label.TRUE

    def test_non_cot_has_no_analysis(self, template, test_instance):
        provider = SequenceMockProvider(["TRUE"])
        pred = classify_instance(provider, Strategy.ZERO_SHOT, template, test_instance)
        assert pred.generated_analysis is None


class TestClassifyDataset:
    def test_order_is_stable_under_concurrency(self, template):
        instances = [make_instance(i, None, analysis=None) for i in range(12)]
        provider = MockChatProvider()
        serial = classify_dataset(
            provider, Strategy.ZERO_SHOT, template, instances, lambda inst: (), jobs=1
        )
        concurrent = classify_dataset(
            provider, Strategy.ZERO_SHOT, template, instances, lambda inst: (), jobs=4
        )
        assert serial == concurrent
        assert [p.instance_id for p in serial] == [inst.id for inst in instances]
