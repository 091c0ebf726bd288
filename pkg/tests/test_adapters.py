import json
from pathlib import Path
from unittest.mock import MagicMock, patch

import pytest
import requests

from apps.runner.adapters import (
    ChatCompletionsBackend,
    RecordingBackend,
    ScriptedBackend,
    build_backend,
    generate_prompt_constrained,
)
from apps.runner.adapters.chat_completions import parse_chat_reply
from packages.core.errors import FixtureConflictError, FixtureMissError, TransportError
from packages.core.models import (
    BackendRequest,
    FinishReason,
    GenerationParams,
    TokenUsage,
    VocabularyBank,
)
from packages.core.run_config import build_config
from packages.core.storage.fixtures import FixtureStore

FIXTURES = Path(__file__).parent / "fixtures"

OK_BODY = {
    "choices": [{"message": {"role": "assistant", "content": "Rush Hour"}, "finish_reason": "stop"}],
    "usage": {"prompt_tokens": 42, "completion_tokens": 3},
}


def _response(status_code, body=None):
    response = MagicMock()
    response.status_code = status_code
    response.json.return_value = body or {}
    response.text = json.dumps(body or {})
    return response


def _request(text="Question: Which movie?", **kwargs):
    return BackendRequest(user_text=text, **kwargs)


@pytest.fixture
def sleeps():
    return []


@pytest.fixture
def http_backend(sleeps):
    return ChatCompletionsBackend(
        model="test-model",
        base_url="https://llm.example.test/v1/",
        api_key="test-key",
        max_attempts=3,
        backoff_base=2.0,
        backoff_cap=8.0,
        sleep=sleeps.append,
    )


# --- chat completions ------------------------------------------------------------

@patch("apps.runner.adapters.chat_completions.requests.Session")
def test_http_generate_success(mock_session_cls, http_backend, sleeps):
    session = mock_session_cls.return_value
    session.post.return_value = _response(200, OK_BODY)

    reply = http_backend.generate(_request(system_text="Be brief."))

    assert reply.text == "Rush Hour"
    assert reply.attempts == 1
    assert reply.usage == TokenUsage(prompt_tokens=42, completion_tokens=3)
    assert sleeps == []
    assert http_backend.calls == 1

    url = session.post.call_args.args[0]
    payload = session.post.call_args.kwargs["json"]
    assert url == "https://llm.example.test/v1/chat/completions"
    assert payload["model"] == "test-model"
    assert payload["messages"][0] == {"role": "system", "content": "Be brief."}
    assert payload["messages"][1]["content"] == "Question: Which movie?"
    assert payload["temperature"] == 0.5
    assert payload["top_p"] == 1.0
    session.headers.__setitem__.assert_called_with("Authorization", "Bearer test-key")


@patch("apps.runner.adapters.chat_completions.requests.Session")
def test_http_retries_rate_limit(mock_session_cls, http_backend, sleeps):
    session = mock_session_cls.return_value
    session.post.side_effect = [_response(429), _response(503), _response(200, OK_BODY)]

    reply = http_backend.generate(_request())

    assert reply.text == "Rush Hour"
    assert reply.attempts == 3
    assert sleeps == [2.0, 4.0]


@patch("apps.runner.adapters.chat_completions.requests.Session")
def test_http_client_error_fails_fast(mock_session_cls, http_backend, sleeps):
    session = mock_session_cls.return_value
    session.post.return_value = _response(400, {"error": "bad request"})

    with pytest.raises(TransportError) as exc_info:
        http_backend.generate(_request())

    assert exc_info.value.status_code == 400
    assert exc_info.value.attempts == 1
    assert session.post.call_count == 1
    assert sleeps == []


@patch("apps.runner.adapters.chat_completions.requests.Session")
def test_http_gives_up_after_budget(mock_session_cls, http_backend, sleeps):
    session = mock_session_cls.return_value
    session.post.side_effect = requests.exceptions.Timeout("slow")

    with pytest.raises(TransportError) as exc_info:
        http_backend.generate(_request())

    assert exc_info.value.attempts == 3
    assert exc_info.value.status_code is None
    assert session.post.call_count == 3
    assert sleeps == [2.0, 4.0]


@patch("apps.runner.adapters.chat_completions.requests.Session")
def test_http_backoff_is_capped(mock_session_cls, sleeps):
    backend = ChatCompletionsBackend(
        model="m", base_url="https://x.test", api_key="k",
        max_attempts=5, backoff_base=2.0, backoff_cap=5.0, sleep=sleeps.append,
    )
    mock_session_cls.return_value.post.side_effect = requests.exceptions.ConnectionError("down")

    with pytest.raises(TransportError):
        backend.generate(_request())

    assert sleeps == [2.0, 4.0, 5.0, 5.0]


@patch("apps.runner.adapters.chat_completions.requests.Session")
def test_http_non_json_body(mock_session_cls, http_backend):
    response = _response(200)
    response.json.side_effect = ValueError("Expecting value")
    mock_session_cls.return_value.post.return_value = response

    with pytest.raises(TransportError, match="Invalid JSON"):
        http_backend.generate(_request())


def test_parse_chat_reply_length_and_missing_choices():
    body = {"choices": [{"message": {"content": "Rush"}, "finish_reason": "length"}]}
    reply = parse_chat_reply(body, attempts=2, latency=0.25)
    assert reply.finish_reason == FinishReason.LENGTH
    assert reply.attempts == 2
    assert reply.usage == TokenUsage()

    with pytest.raises(TransportError):
        parse_chat_reply({"choices": []})


def test_api_key_is_not_part_of_request_digest():
    request = _request()
    assert "test-key" not in json.dumps(request.canonical())


# --- scripted / fixtures ---------------------------------------------------------

def test_scripted_backend_from_rules_file():
    backend = ScriptedBackend.from_file(FIXTURES / "scripted_hotpot.json")
    reply = backend.generate(
        _request("Answer the question using the evidence.\nQuestion: Were Scott Derrickson and Ed Wood of the same nationality?")
    )
    assert reply.text == "yes"
    assert backend.calls == 1


def test_scripted_digest_entry_beats_rules():
    request = _request("Question: anything")
    store = FixtureStore(entries={request.digest: {"reply": "from digest", "usage": {"prompt_tokens": 5}}})
    backend = ScriptedBackend(store, rules=[("Question", "from rule")])

    reply = backend.generate(request)
    assert reply.text == "from digest"
    assert reply.usage.prompt_tokens == 5


def test_scripted_miss_names_digest():
    backend = ScriptedBackend(rules=[("^nothing matches this$", "x")])
    request = _request()
    with pytest.raises(FixtureMissError) as exc_info:
        backend.generate(request)
    assert exc_info.value.digest == request.digest


def test_scripted_flat_file(tmp_path):
    request = _request()
    path = tmp_path / "flat.json"
    path.write_text(json.dumps({request.digest: {"reply": "Rush Hour"}}), encoding="utf-8")

    assert ScriptedBackend.from_file(path).generate(request).text == "Rush Hour"


def test_fixture_store_record_and_conflict():
    store = FixtureStore()
    store.record("abc", "Rush Hour")
    store.record("abc", "Rush Hour")
    assert len(store) == 1

    with pytest.raises(FixtureConflictError):
        store.record("abc", "Money Talks")


def test_fixture_store_save_is_sorted_and_reloadable(tmp_path):
    store = FixtureStore()
    store.record("b-digest", "two")
    store.record("a-digest", "one", TokenUsage(prompt_tokens=1, completion_tokens=1))
    path = store.save(tmp_path / "nested" / "fixtures.json")

    payload = json.loads(path.read_text(encoding="utf-8"))
    assert list(payload) == ["a-digest", "b-digest"]

    reloaded = FixtureStore.load(path)
    assert "a-digest" in reloaded
    assert reloaded.content_digest() == store.content_digest()


def test_recording_backend_stores_replies():
    inner = ScriptedBackend(rules=[("Question", "Rush Hour")])
    store = FixtureStore()
    backend = RecordingBackend(inner, store)
    request = _request()

    assert backend.generate(request).text == "Rush Hour"
    assert store.get(request.digest)["reply"] == "Rush Hour"
    assert backend.calls == 1
    assert inner.calls == 1


def test_build_backend_for_scripted_config():
    config = build_config({
        "dataset_path": str(FIXTURES / "hotpot_sample.json"),
        "backend": "scripted",
        "fixtures_path": str(FIXTURES / "scripted_hotpot.json"),
    })
    assert isinstance(build_backend(config), ScriptedBackend)


def test_recording_seeds_from_fixtures_path_but_saves_into_the_run(tmp_path):
    seed = tmp_path / "seed.json"
    FixtureStore(seed, {"old-digest": {"reply": "Rush Hour", "usage": {}}}).save()
    before = seed.read_text(encoding="utf-8")
    out = tmp_path / "run" / "fixtures.json"
    config = build_config({
        "dataset_path": str(FIXTURES / "hotpot_sample.json"),
        "record_fixtures": True,
        "fixtures_path": str(seed),
    })

    backend = build_backend(config, fixtures_out=out)

    assert isinstance(backend, RecordingBackend)
    assert backend.store.path == out
    assert "old-digest" in backend.store
    backend.store.record("new-digest", "Jackie Chan")
    backend.store.save()
    assert seed.read_text(encoding="utf-8") == before
    assert set(json.loads(out.read_text(encoding="utf-8"))) == {"old-digest", "new-digest"}


# --- prompt-constrained generation -----------------------------------------------

BANK = VocabularyBank(words=frozenset({"rush", "hour", "jackie", "chan"}))


def test_prompt_constrained_appends_vocabulary_and_audits():
    backend = ScriptedBackend(rules=[("Vocabulary Bank: chan, hour, jackie, rush", "Rush Hour in Tokyo")])
    request = _request(constraint=BANK, params=GenerationParams(temperature=0.0))

    reply = generate_prompt_constrained(backend, request)

    assert reply.text == "Rush Hour in Tokyo"
    assert reply.violations == ("in", "tokyo")


def test_prompt_constrained_keeps_existing_vocabulary_line():
    seen = []

    class Capture(ScriptedBackend):
        def generate(self, request):
            seen.append(request.user_text)
            return super().generate(request)

    backend = Capture(rules=[(".", "Rush Hour")])
    text = "Question: Which movie?\nVocabulary Bank: chan, hour, jackie, rush."
    reply = generate_prompt_constrained(backend, _request(text, constraint=BANK))

    assert reply.violations == ()
    assert seen == [text]


def test_prompt_constrained_without_bank_is_plain_generate():
    backend = ScriptedBackend(rules=[(".", "Tokyo")])
    assert generate_prompt_constrained(backend, _request()).violations == ()
