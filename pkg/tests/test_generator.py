import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from featforge.expr import DEFAULT_OPERATORS, Vocabulary, parse_postfix
from featforge.generator import (OUTPUT_MARKER, BackendTimeout, HttpError, MalformedResponse,
                                 MockEvolver, NoSequenceFound, PromptContext, PromptTooLong,
                                 RemoteLLM, build_prompt, extract_sequence, parse_prompt)

DEMOS = ("f0, f1", "f0 f1 +, f2", "f0 f1 *, f2 log, f3")


def random_sequence(seed, n_features, n_exprs):
    trng = random.Random(seed)
    return ", ".join(" ".join(oracles.tree_to_postfix(oracles.random_tree(trng, n_features, 3)))
                     for _ in range(n_exprs))


def test_prompt_layout():
    text = build_prompt(PromptContext(DEMOS, n_features=4))
    lines = text.splitlines()
    labels = [i for i, l in enumerate(lines) if l.startswith("priority_v")]
    assert [lines[i] for i in labels] == ["priority_v0:", "priority_v1:", "priority_v2:"]
    assert [lines[i + 1] for i in labels] == list(DEMOS)
    assert "Feature IDs: f0, f1, f2, f3" in lines
    assert "ascending" in text
    assert text.rstrip().endswith(OUTPUT_MARKER)
    for op in DEFAULT_OPERATORS:
        assert op.token in lines[2]


def test_prompt_deterministic_and_validated():
    ctx = PromptContext(DEMOS, n_features=4)
    assert build_prompt(ctx) == build_prompt(PromptContext(DEMOS, n_features=4))
    with pytest.raises(ValueError):
        build_prompt(PromptContext((), n_features=4))
    with pytest.raises(PromptTooLong):
        build_prompt(PromptContext(DEMOS, n_features=4, max_prompt_chars=100))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 10**6))
def test_parse_prompt_recovers_inputs(n_features, n_demos, seed):
    rng = np.random.default_rng(seed)
    demos = tuple(random_sequence(int(rng.integers(2**31)), n_features, int(rng.integers(1, 4)))
                  for _ in range(n_demos))
    ops = tuple(op.token for op in DEFAULT_OPERATORS)
    got = parse_prompt(build_prompt(PromptContext(demos, n_features, ops)))
    assert got == (list(demos), n_features, list(ops))


# --- extraction ---------------------------------------------------------------------------

@pytest.mark.parametrize("raw,expected", [
    (f"Sure!\n{OUTPUT_MARKER} f0 f1 *, f2\n\nThanks", "f0 f1 *, f2"),
    (f"{OUTPUT_MARKER}\n`f0 log`", "f0 log"),
    ("I propose f0 f1 + , no wait: f0 f1 *, f2 sqrt. Done.", "f0 f1 *, f2 sqrt"),
    ("answer: f3", "f3"),
])
def test_extract_sequence(raw, expected):
    assert extract_sequence(raw) == expected


def test_extract_sequence_nothing_found():
    with pytest.raises(NoSequenceFound):
        extract_sequence("I cannot help with that.")


# --- mock evolver -------------------------------------------------------------------------

def random_prompt(rng, n_features):
    demos = tuple(random_sequence(int(rng.integers(2**31)), n_features, int(rng.integers(1, 5)))
                  for _ in range(int(rng.integers(1, 5))))
    return build_prompt(PromptContext(demos, n_features))


def test_mock_output_always_parses():
    rng = np.random.default_rng(0)
    gen = MockEvolver(seed=1, mutation_rate=0.5)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        seq = extract_sequence(gen.generate(random_prompt(rng, n)))
        parse_postfix(seq, Vocabulary(n))


def test_mock_rate_zero_with_identical_parents_is_verbatim():
    demo = "f0 f1 *, f2 log, f3"
    prompt = build_prompt(PromptContext((demo, demo), n_features=4))
    gen = MockEvolver(seed=0, mutation_rate=0.0)
    for _ in range(20):
        assert extract_sequence(gen.generate(prompt)) == demo


def test_mock_crossover_uses_two_best():
    prompt = build_prompt(PromptContext(("f3 f3 -", "f0, f1", "f2 log, f3 exp"), n_features=4))
    gen = MockEvolver(seed=0, mutation_rate=0.0, crossover_rate=1.0)
    outs = {extract_sequence(gen.generate(prompt)) for _ in range(50)}
    # the weakest demonstration never contributes
    assert outs == {"f2 log, f3 exp", "f2 log, f1"}


def test_mock_seeded_determinism_and_validation():
    rng = np.random.default_rng(3)
    prompts = [random_prompt(rng, 5) for _ in range(20)]
    g1, g2 = MockEvolver(seed=4), MockEvolver(seed=4)
    assert [g1.generate(p) for p in prompts] == [g2.generate(p) for p in prompts]
    with pytest.raises(ValueError):
        MockEvolver(mutation_rate=1.5)
    with pytest.raises(ValueError):
        MockEvolver().generate("")


# --- remote client against a local server -------------------------------------------------

class FakeEndpoint(BaseHTTPRequestHandler):
    script: list = []
    received: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        FakeEndpoint.received.append((self.path, dict(self.headers), body))
        status, payload = FakeEndpoint.script.pop(0)
        data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), FakeEndpoint)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    FakeEndpoint.script, FakeEndpoint.received = [], []
    yield f"http://127.0.0.1:{srv.server_address[1]}/v1"
    srv.shutdown()
    srv.server_close()


def reply(text):
    return 200, {"choices": [{"message": {"role": "assistant", "content": text}}]}


def test_remote_success(server):
    FakeEndpoint.script = [reply(f"{OUTPUT_MARKER} f0 f1 *")]
    client = RemoteLLM(server, model="m", api_key="k", temperature=0.3)
    assert client.generate("hello") == f"{OUTPUT_MARKER} f0 f1 *"
    path, headers, body = FakeEndpoint.received[0]
    assert path == "/v1/chat/completions"
    assert headers["Authorization"] == "Bearer k"
    assert body == {"model": "m", "messages": [{"role": "user", "content": "hello"}],
                    "temperature": 0.3, "max_tokens": 256}


def test_remote_retries_server_errors(server):
    FakeEndpoint.script = [(503, "busy"), (500, "oops"), reply("f0")]
    assert RemoteLLM(server, retries=2, backoff=0.0).generate("p") == "f0"
    assert len(FakeEndpoint.received) == 3


def test_remote_gives_up_after_retries(server):
    FakeEndpoint.script = [(500, "a"), (500, "b")]
    with pytest.raises(HttpError):
        RemoteLLM(server, retries=1, backoff=0.0).generate("p")


@pytest.mark.parametrize("payload", ["not json", {"choices": []}, {"choices": [{"message": {}}]},
                                     {"choices": [{"message": {"content": 5}}]}])
def test_remote_malformed_not_retried(server, payload):
    FakeEndpoint.script = [(200, payload), reply("f0")]
    with pytest.raises(MalformedResponse):
        RemoteLLM(server, retries=3, backoff=0.0).generate("p")
    assert len(FakeEndpoint.received) == 1


def test_remote_timeout(server):
    class Slow(FakeEndpoint):
        def do_POST(self):
            import time
            time.sleep(0.5)

    srv = HTTPServer(("127.0.0.1", 0), Slow)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    try:
        client = RemoteLLM(f"http://127.0.0.1:{srv.server_address[1]}", timeout=0.1,
                           retries=0, backoff=0.0)
        with pytest.raises(BackendTimeout):
            client.generate("p")
    finally:
        srv.shutdown()
        srv.server_close()


def test_remote_requires_endpoint(monkeypatch):
    monkeypatch.delenv("FEATFORGE_LLM_URL", raising=False)
    with pytest.raises(ValueError):
        RemoteLLM()
    monkeypatch.setenv("FEATFORGE_LLM_URL", "http://example.invalid/v1/")
    assert RemoteLLM().base_url == "http://example.invalid/v1"
