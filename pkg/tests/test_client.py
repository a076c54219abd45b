"""Client contract tests against a local stub server; no live network anywhere."""

from __future__ import annotations

import json
import threading
from datetime import date
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from rtmeval.client import (
    AuthFailure,
    GenerationRequest,
    RateLimited,
    SummaryClient,
    Timeout,
    UnparseableScore,
    request_digest,
)
from rtmeval.ingest import Pipeline, Summary


class _StubHandler(BaseHTTPRequestHandler):
    # Script entries: ("ok", text) | ("status", code) | "echo"
    script: list = []
    requests_seen: list = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        type(self).requests_seen.append(body)
        action = self.script.pop(0) if self.script else "echo"
        if action == "echo":
            prompt = body["messages"][0]["content"]
            if isinstance(prompt, list):
                prompt = "".join(p.get("text", "") for p in prompt if isinstance(p, dict))
            self._reply(200, {"choices": [{"message": {"content": f"ECHO:{prompt[:40]}"}}]})
        elif action[0] == "ok":
            self._reply(200, {"choices": [{"message": {"content": action[1]}}]})
        elif action[0] == "status":
            self._reply(action[1], {"error": "scripted"})
        elif action[0] == "body":
            self._reply(200, action[1])

    def _reply(self, status, payload):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.script = []
    _StubHandler.requests_seen = []
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def _client(endpoint, tmp_path, **kwargs):
    return SummaryClient(
        endpoint=endpoint,
        api_key="test-key",
        backoff_base=0.001,
        audit_path=tmp_path / "audit.jsonl",
        **kwargs,
    )


def test_echo_stub_round_trip(stub_server, tmp_path):
    client = _client(stub_server, tmp_path)
    text = client.generate(GenerationRequest(model="m", prompt="fixture prompt"))
    assert text == "ECHO:fixture prompt"


def test_rate_limit_retries_then_succeeds(stub_server, tmp_path):
    _StubHandler.script = [("status", 429), ("status", 429), ("status", 429), ("ok", "done")]
    client = _client(stub_server, tmp_path)
    text = client.generate(GenerationRequest(model="m", prompt="p", max_retries=3))
    assert text == "done"
    audit = [json.loads(line) for line in (tmp_path / "audit.jsonl").read_text().splitlines()]
    assert audit[-1]["status"] == "ok"
    assert audit[-1]["attempts"] == 4  # three 429s retried, fourth attempt succeeded


def test_rate_limit_exhausts_retries(stub_server, tmp_path):
    _StubHandler.script = [("status", 429)] * 5
    client = _client(stub_server, tmp_path)
    with pytest.raises(RateLimited):
        client.generate(GenerationRequest(model="m", prompt="p", max_retries=2))


def test_missing_credentials_fail_before_any_network_call(stub_server, tmp_path):
    client = SummaryClient(endpoint=None, api_key=None, audit_path=tmp_path / "a.jsonl")
    with pytest.raises(AuthFailure):
        client.generate(GenerationRequest(model="m", prompt="p"))
    assert _StubHandler.requests_seen == []


def test_auth_rejection_is_not_retried(stub_server, tmp_path):
    _StubHandler.script = [("status", 401), ("ok", "never")]
    client = _client(stub_server, tmp_path)
    with pytest.raises(AuthFailure):
        client.generate(GenerationRequest(model="m", prompt="p"))
    assert len(_StubHandler.requests_seen) == 1


def test_timeout_surfaces_after_retries(tmp_path):
    # Unroutable per RFC 5737; connect attempts fail fast or time out.
    client = SummaryClient(
        endpoint="http://203.0.113.1:9/v1",
        api_key="k",
        backoff_base=0.001,
        audit_path=tmp_path / "a.jsonl",
    )
    with pytest.raises((Timeout, Exception)):
        client.generate(GenerationRequest(model="m", prompt="p", max_retries=0, timeout=0.2))


def test_malformed_body_raises(stub_server, tmp_path):
    _StubHandler.script = [("body", {"unexpected": True})]
    client = _client(stub_server, tmp_path)
    from rtmeval.client import MalformedResponse

    with pytest.raises(MalformedResponse):
        client.generate(GenerationRequest(model="m", prompt="p"))


def test_image_request_carries_data_url(stub_server, tmp_path):
    image = tmp_path / "plot.svg"
    image.write_text("<svg xmlns='http://www.w3.org/2000/svg'/>", encoding="utf-8")
    client = _client(stub_server, tmp_path)
    client.generate(GenerationRequest(model="m", prompt="look", images=(str(image),)))
    sent = _StubHandler.requests_seen[-1]
    parts = sent["messages"][0]["content"]
    assert parts[0] == {"type": "text", "text": "look"}
    assert parts[1]["image_url"]["url"].startswith("data:image/svg+xml;base64,")


def test_audit_replay_reproduces_without_network(stub_server, tmp_path):
    client = _client(stub_server, tmp_path)
    req = GenerationRequest(model="m", prompt="replay me")
    original = client.generate(req)

    offline = SummaryClient(replay_path=tmp_path / "audit.jsonl")
    assert offline.generate(req) == original
    # A request absent from the log cannot be replayed.
    from rtmeval.client import ClientError

    with pytest.raises(ClientError):
        offline.generate(GenerationRequest(model="m", prompt="never sent"))


def test_request_digest_distinguishes_inputs(tmp_path):
    a = GenerationRequest(model="m", prompt="p")
    b = GenerationRequest(model="m", prompt="q")
    assert request_digest(a) != request_digest(b)
    assert request_digest(a) == request_digest(GenerationRequest(model="m", prompt="p"))


def _summary(text: str) -> Summary:
    return Summary("A", date(2021, 5, 1), Pipeline.ZERO_SHOT, text)


def test_judge_parses_score_prefix(stub_server, tmp_path):
    _StubHandler.script = [("ok", "Score: 4. Clear and well organized.")]
    client = _client(stub_server, tmp_path)
    result = client.judge_clarity(_summary("Fine."), "judge-model")
    assert result.score == 4


def test_judge_parses_fraction_form(stub_server, tmp_path):
    _StubHandler.script = [("ok", "5/5, excellent clarity")]
    client = _client(stub_server, tmp_path)
    assert client.judge_clarity(_summary("Fine."), "judge-model").score == 5


def test_judge_retries_once_then_errors(stub_server, tmp_path):
    _StubHandler.script = [("ok", "great summary"), ("ok", "really great summary")]
    client = _client(stub_server, tmp_path)
    with pytest.raises(UnparseableScore):
        client.judge_clarity(_summary("Fine."), "judge-model")
    assert len(_StubHandler.requests_seen) == 2
