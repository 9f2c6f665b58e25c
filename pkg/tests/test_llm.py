import json

import httpx
import pytest

from ciclekit.corpus import LabelSpace
from ciclekit.llm import (
    ENV_API_KEY,
    ENV_BASE_URL,
    ENV_MODEL,
    CompletionError,
    CompletionRequest,
    CompletionResult,
    HttpCompletionClient,
    HttpPromptBackend,
    PerfectOracle,
    RandomShotOracle,
    ScriptedBackend,
    TranscriptWriter,
    classify_with_llm,
    parse_label,
    prompt_sha256,
)
from ciclekit.prompting import Bypass, FewShot, PromptSpec, render

SPACE = LabelSpace.from_labels(["allergen", "bacteria", "foreign-body"])


def make_spec(query="metal in flour", labels=("foreign-body", "bacteria"), strategy="max"):
    shots = tuple(
        FewShot(text=f"example {i}", label=label, similarity=1.0 - 0.1 * i, train_index=i)
        for i, label in enumerate(labels)
    )
    return PromptSpec(
        strategy=strategy,
        task_description="Classify:",
        shots=shots,
        query=query,
        rendered=render("Classify:", shots, query),
    )


class TestCompletionRequest:
    def test_temperature_must_be_zero(self):
        with pytest.raises(ValueError, match="temperature"):
            CompletionRequest(prompt="p", model="m", temperature=0.7)

    def test_max_tokens_positive(self):
        with pytest.raises(ValueError, match="max_tokens"):
            CompletionRequest(prompt="p", model="m", max_tokens=0)

    def test_defaults(self):
        req = CompletionRequest(prompt="p", model="m")
        assert req.max_tokens == 20
        assert req.temperature == 0.0


def ok_response(text="bacteria"):
    return httpx.Response(200, json={"choices": [{"text": text}]})


def client_with(handler, **kwargs):
    kwargs.setdefault("base_url", "http://llm.test/v1")
    kwargs.setdefault("sleeper", lambda s: None)
    return HttpCompletionClient(transport=httpx.MockTransport(handler), **kwargs)


class TestHttpClient:
    def test_posts_classic_completions_payload(self):
        seen = {}

        def handler(request):
            seen["url"] = str(request.url)
            seen["auth"] = request.headers.get("authorization")
            seen["payload"] = json.loads(request.content)
            return ok_response(" bacteria")

        client = client_with(handler, api_key="sk-test")
        result = client.complete(CompletionRequest(prompt="the prompt", model="davinci-x", max_tokens=7))
        assert result.text == " bacteria"
        assert result.retries == 0
        assert seen["url"] == "http://llm.test/v1/completions"
        assert seen["auth"] == "Bearer sk-test"
        assert seen["payload"] == {
            "model": "davinci-x",
            "prompt": "the prompt",
            "temperature": 0.0,
            "max_tokens": 7,
        }

    def test_no_auth_header_without_key(self, monkeypatch):
        monkeypatch.delenv(ENV_API_KEY, raising=False)

        def handler(request):
            assert "authorization" not in request.headers
            return ok_response()

        client_with(handler).complete(CompletionRequest(prompt="p", model="m"))

    def test_retries_on_429_with_exponential_backoff(self):
        sleeps = []
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] <= 2:
                return httpx.Response(429, json={"error": "slow down"})
            return ok_response()

        client = client_with(handler, backoff=0.5, sleeper=sleeps.append)
        result = client.complete(CompletionRequest(prompt="p", model="m"))
        assert calls["n"] == 3
        assert result.retries == 2
        assert sleeps == [0.5, 1.0]

    def test_backoff_is_capped(self):
        sleeps = []
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] <= 3:
                return httpx.Response(503)
            return ok_response()

        client = client_with(handler, backoff=10.0, backoff_cap=12.0, sleeper=sleeps.append)
        client.complete(CompletionRequest(prompt="p", model="m"))
        assert sleeps == [10.0, 12.0, 12.0]

    def test_retry_budget_exhausted_raises(self):
        def handler(request):
            return httpx.Response(500)

        client = client_with(handler, max_retries=2)
        with pytest.raises(CompletionError, match="after 2 retries"):
            client.complete(CompletionRequest(prompt="p", model="m"))

    def test_client_errors_never_retry(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            return httpx.Response(400, json={"error": "bad request"})

        client = client_with(handler)
        with pytest.raises(CompletionError, match="status 400"):
            client.complete(CompletionRequest(prompt="p", model="m"))
        assert calls["n"] == 1

    def test_timeout_raises_completion_error(self):
        def handler(request):
            raise httpx.ConnectTimeout("no answer")

        client = client_with(handler)
        with pytest.raises(CompletionError, match="timed out"):
            client.complete(CompletionRequest(prompt="p", model="m", timeout=0.01))

    def test_malformed_body_raises(self):
        def handler(request):
            return httpx.Response(200, json={"unexpected": True})

        client = client_with(handler)
        with pytest.raises(CompletionError, match="malformed"):
            client.complete(CompletionRequest(prompt="p", model="m"))

    def test_base_url_from_env(self, monkeypatch):
        monkeypatch.setenv(ENV_BASE_URL, "http://env.test/api/")

        def handler(request):
            assert str(request.url) == "http://env.test/api/completions"
            return ok_response()

        client = HttpCompletionClient(transport=httpx.MockTransport(handler), sleeper=lambda s: None)
        client.complete(CompletionRequest(prompt="p", model="m"))

    def test_missing_base_url_rejected(self, monkeypatch):
        monkeypatch.delenv(ENV_BASE_URL, raising=False)
        with pytest.raises(ValueError, match=ENV_BASE_URL):
            HttpCompletionClient()


class TestHttpPromptBackend:
    def test_sends_rendered_prompt(self, monkeypatch):
        monkeypatch.delenv(ENV_MODEL, raising=False)
        seen = {}

        def handler(request):
            seen["payload"] = json.loads(request.content)
            return ok_response("foreign-body")

        backend = HttpPromptBackend(client_with(handler), model="gpt-base", max_tokens=11)
        spec = make_spec()
        result = backend.complete_prompt(spec, true_label=None)
        assert result.text == "foreign-body"
        assert seen["payload"]["prompt"] == spec.rendered
        assert seen["payload"]["max_tokens"] == 11
        assert seen["payload"]["model"] == "gpt-base"

    def test_model_required(self, monkeypatch):
        monkeypatch.delenv(ENV_MODEL, raising=False)
        with pytest.raises(ValueError, match=ENV_MODEL):
            HttpPromptBackend(client_with(lambda r: ok_response()))


class TestParseLabel:
    LABELS = ("allergen", "bacteria", "Meat Products")

    @pytest.mark.parametrize(
        "raw",
        ["bacteria", " bacteria ", "\nbacteria\n", '"bacteria"', "'bacteria'", "`bacteria`",
         "“bacteria”", "‘bacteria’", "BACTERIA", ' " bacteria " '],
    )
    def test_cleanup_variants_match(self, raw):
        assert parse_label(raw, self.LABELS) == "bacteria"

    def test_canonical_casing_is_returned(self):
        assert parse_label("meat products", self.LABELS) == "Meat Products"
        assert parse_label("MEAT PRODUCTS", self.LABELS) == "Meat Products"

    @pytest.mark.parametrize("raw", ["bacterial", "bac teria", "", "   ", "unknown", "bacteria."])
    def test_non_matches_return_none(self, raw):
        assert parse_label(raw, self.LABELS) is None

    def test_no_fuzzy_prefix_matching(self):
        assert parse_label("bacteria and more words", self.LABELS) is None

    def test_idempotent_on_successful_parse(self):
        parsed = parse_label('"Meat Products"', self.LABELS)
        assert parse_label(parsed, self.LABELS) == parsed


class TestOracles:
    def test_perfect_oracle_returns_reachable_true_label(self):
        spec = make_spec(labels=("foreign-body", "bacteria"))
        result = PerfectOracle().complete_prompt(spec, true_label="bacteria")
        assert result.text == "bacteria"

    def test_perfect_oracle_draws_from_shots_when_unreachable(self):
        spec = make_spec(labels=("foreign-body", "bacteria"))
        result = PerfectOracle(seed=1).complete_prompt(spec, true_label="allergen")
        assert result.text in {"foreign-body", "bacteria"}

    def test_perfect_oracle_needs_true_label_and_shots(self):
        spec = make_spec()
        with pytest.raises(ValueError, match="true label"):
            PerfectOracle().complete_prompt(spec, true_label=None)
        empty = PromptSpec(strategy="sim", task_description="d", shots=(), query="q",
                           rendered=render("d", (), "q"))
        with pytest.raises(ValueError, match="no shots"):
            PerfectOracle().complete_prompt(empty, true_label="bacteria")

    def test_draws_are_order_independent(self):
        spec_a = make_spec(query="query one", labels=("foreign-body", "bacteria"))
        spec_b = make_spec(query="query two", labels=("foreign-body", "bacteria"))
        oracle = RandomShotOracle(seed=9)
        forward = [oracle.complete_prompt(s, None).text for s in (spec_a, spec_b)]
        oracle2 = RandomShotOracle(seed=9)
        backward = [oracle2.complete_prompt(s, None).text for s in (spec_b, spec_a)]
        assert forward == list(reversed(backward))

    def test_random_oracle_is_deterministic_per_seed(self):
        spec = make_spec(query="some incident")
        a = RandomShotOracle(seed=3).complete_prompt(spec, None).text
        b = RandomShotOracle(seed=3).complete_prompt(spec, None).text
        assert a == b

    def test_seed_changes_some_draw(self):
        specs = [make_spec(query=f"incident {i}", labels=("foreign-body", "bacteria")) for i in range(30)]
        a = [RandomShotOracle(seed=1).complete_prompt(s, None).text for s in specs]
        b = [RandomShotOracle(seed=2).complete_prompt(s, None).text for s in specs]
        assert a != b


class TestScriptedBackend:
    def test_replays_by_prompt_hash(self):
        spec = make_spec()
        backend = ScriptedBackend({prompt_sha256(spec.rendered): "foreign-body"})
        assert backend.complete_prompt(spec).text == "foreign-body"

    def test_default_reply(self):
        backend = ScriptedBackend({}, default="bacteria")
        assert backend.complete_prompt(make_spec()).text == "bacteria"

    def test_unknown_prompt_raises(self):
        backend = ScriptedBackend({})
        with pytest.raises(KeyError):
            backend.complete_prompt(make_spec())


class _ExplodingBackend:
    def complete_prompt(self, spec, true_label=None):
        raise AssertionError("backend must not be called for a bypass")


class TestClassifyWithLlm:
    def test_bypass_never_touches_the_backend(self):
        bypass = Bypass(label="allergen", class_index=0, probability=0.99)
        label, telemetry = classify_with_llm(bypass, SPACE, _ExplodingBackend())
        assert label == "allergen"
        assert telemetry.bypassed
        assert not telemetry.parse_failed
        assert telemetry.strategy == "cicle"
        assert telemetry.prompt_chars is None

    def test_prompt_path_records_telemetry(self):
        spec = make_spec()
        backend = ScriptedBackend({prompt_sha256(spec.rendered): ' "foreign-body" '})
        label, telemetry = classify_with_llm(spec, SPACE, backend, true_label="foreign-body")
        assert label == "foreign-body"
        assert not telemetry.bypassed
        assert not telemetry.parse_failed
        assert telemetry.prompt_chars == spec.n_chars
        assert telemetry.classes_in_prompt == 2
        assert telemetry.shots == 2
        assert telemetry.raw_reply == ' "foreign-body" '
        assert telemetry.strategy == "max"

    def test_unparseable_reply_is_a_failure(self):
        spec = make_spec()
        backend = ScriptedBackend({}, default="I think it is bacteria")
        label, telemetry = classify_with_llm(spec, SPACE, backend)
        assert label is None
        assert telemetry.parse_failed

    def test_telemetry_to_dict_roundtrips_through_json(self):
        spec = make_spec()
        backend = ScriptedBackend({}, default="bacteria")
        _, telemetry = classify_with_llm(spec, SPACE, backend)
        row = json.loads(json.dumps(telemetry.to_dict()))
        assert row["strategy"] == "max"
        assert row["shots"] == 2
        assert row["bypassed"] is False


class TestTranscriptWriter:
    def test_writes_prompt_and_bypass_lines(self, tmp_path):
        path = tmp_path / "transcript.jsonl"
        spec = make_spec()
        with TranscriptWriter(str(path)) as log:
            log.log_prompt(spec, reply="foreign-body", parsed="foreign-body", retries=1, latency=0.25)
            log.log_bypass(Bypass(label="allergen", class_index=0, probability=0.9))
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(lines) == 2
        first, second = lines
        assert first["strategy"] == "max"
        assert first["bypassed"] is False
        assert first["prompt_sha256"] == prompt_sha256(spec.rendered)
        assert first["prompt_chars"] == spec.n_chars
        assert first["n_shots"] == 2
        assert first["reply"] == "foreign-body"
        assert first["parsed"] == "foreign-body"
        assert first["retries"] == 1
        assert first["latency_ms"] == 250.0
        assert second == {
            "strategy": "cicle",
            "bypassed": True,
            "label": "allergen",
            "probability": 0.9,
        }
