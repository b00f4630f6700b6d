import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, settings, strategies as st

from agora.agents import TransportError
from agora.gateway import (
    EvalRequest, EvalResponse, FatalHTTPError, LoopbackServer, ProtocolError, RemoteBackend, RetryPolicy,
    ValidationError, decode_request, decode_response, encode_request, encode_response, remote_evaluate,
)
from agora.harness import run_episode
from agora.scenario import load_scenario
from agora.uncertainty import UncertaintyVector

unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def simplex(draw, min_size=1, max_size=6):
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=min_size, max_size=max_size))
    total = sum(raw)
    return tuple(x / total for x in raw)


requests = st.builds(
    EvalRequest,
    task_id=st.text(min_size=1, max_size=12),
    feature_vector=st.lists(st.floats(-1e6, 1e6, allow_nan=False), max_size=5).map(tuple),
    declared_uncertainty=st.builds(UncertaintyVector, unit, unit, unit),
    prompt_text=st.none() | st.text(max_size=40),
    deadline_ms=st.integers(1, 10**7),
)
responses = st.builds(
    EvalResponse,
    task_id=st.text(min_size=1, max_size=12),
    class_probs=simplex(),
    outcome_probs=simplex(),
    semantic_ambiguities=st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)), max_size=4).map(tuple),
    tokens_generated=st.integers(0, 10**6),
    latency_ms=st.integers(0, 10**6),
)


@settings(max_examples=300, deadline=None)
@given(requests)
def test_request_round_trip(req):
    assert decode_request(encode_request(req)) == req


@settings(max_examples=300, deadline=None)
@given(responses)
def test_response_round_trip(resp):
    assert decode_response(encode_response(resp)) == resp


def test_round_trip_randomized_bulk():
    import numpy as np

    rng = np.random.default_rng(2024)
    for i in range(5_000):
        req = EvalRequest(f"t{i}", tuple(rng.normal(size=rng.integers(0, 5)).tolist()),
                          UncertaintyVector(*rng.uniform(0, 1, 3).tolist()),
                          None if i % 2 else f"prompt {i}", int(rng.integers(1, 10**6)))
        assert decode_request(encode_request(req)) == req
        k = int(rng.integers(1, 6))
        resp = EvalResponse(f"t{i}", tuple(rng.dirichlet(np.ones(k)).tolist()),
                            tuple(rng.dirichlet(np.ones(2)).tolist()),
                            tuple((float(a), float(b)) for a, b in rng.uniform(0, 1, (int(rng.integers(0, 4)), 2))),
                            int(rng.integers(0, 1000)), int(rng.integers(0, 1000)))
        assert decode_response(encode_response(resp)) == resp


def minimal_request():
    return EvalRequest("t1", (0.5, 0.5, 0.0), UncertaintyVector(0.2, 0.1, 0.0))


def test_wire_field_names():
    doc = json.loads(encode_request(minimal_request()))
    assert set(doc) >= {"protocol_version", "task_id", "payload", "deadline_ms"}
    assert set(doc["payload"]["declared_uncertainty"]) == {"perc", "sem", "inf"}
    resp = EvalResponse("t1", (1.0,), (1.0,), (), 3, 4)
    assert set(json.loads(encode_response(resp))) == {
        "task_id", "class_probs", "outcome_probs", "semantic_ambiguities", "tokens_generated", "latency_ms"}


def test_simplex_violation_names_field():
    body = json.dumps({"task_id": "t", "class_probs": [0.6, 0.5], "outcome_probs": [1.0],
                       "semantic_ambiguities": [], "tokens_generated": 1}).encode()
    with pytest.raises(ValidationError) as err:
        decode_response(body)
    assert err.value.field == "class_probs"


def test_unknown_field_dropped():
    doc = json.loads(encode_request(minimal_request()))
    doc["shiny_new_field"] = {"x": 1}
    doc["payload"]["also_new"] = 3
    assert decode_request(json.dumps(doc).encode()) == minimal_request()


@pytest.mark.parametrize("body", [b"{not json", b"[1, 2]", b"\xff\xfe"])
def test_malformed_body(body):
    with pytest.raises(ProtocolError):
        decode_request(body)


def test_request_invariants():
    with pytest.raises(ValidationError):
        EvalRequest("t", (), UncertaintyVector(), deadline_ms=0)
    with pytest.raises(ValidationError):
        EvalRequest("t", (), UncertaintyVector(), protocol_version=2)


class Scripted:
    """HTTP server answering from a list of statuses; 200 means a valid response."""

    def __init__(self, script):
        self.script = list(script)
        self.attempts = 0
        owner = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                owner.attempts += 1
                status = owner.script.pop(0) if owner.script else 200
                if status == 200:
                    req = decode_request(body)
                    out = encode_response(EvalResponse(req.task_id, (1.0,), (0.5, 0.5), (), 7))
                else:
                    out = json.dumps({"code": "scripted", "message": str(status)}).encode()
                self.send_response(status)
                self.send_header("Content-Length", str(len(out)))
                self.end_headers()
                self.wfile.write(out)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.running = False
        self.url = "http://127.0.0.1:%d" % self.httpd.server_address[1]

    def reset(self, script):
        self.script, self.attempts = list(script), 0
        return self

    def __enter__(self):
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture(scope="module")
def budget_server():
    with Scripted([]) as srv:
        yield srv


NO_SLEEP = dict(sleep=lambda s: None)


def test_fixed_response_one_attempt():
    with Scripted([]) as srv:
        resp = remote_evaluate(srv.url, minimal_request(), RetryPolicy(), **NO_SLEEP)
    assert resp.tokens_generated == 7 and srv.attempts == 1


def test_two_failures_then_success():
    with Scripted([503, 500]) as srv:
        resp = remote_evaluate(srv.url, minimal_request(), RetryPolicy(max_retries=3), **NO_SLEEP)
    assert resp.task_id == "t1" and srv.attempts == 3


def test_client_error_is_fatal():
    with Scripted([400]) as srv:
        with pytest.raises(FatalHTTPError):
            remote_evaluate(srv.url, minimal_request(), RetryPolicy(max_retries=3), **NO_SLEEP)
    assert srv.attempts == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.integers(0, 6))
def test_retry_budget_respected(budget_server, max_retries, failures):
    delays = []
    srv = budget_server.reset([502] * failures)
    policy = RetryPolicy(max_retries=max_retries)
    if failures > max_retries:
        with pytest.raises(TransportError):
            remote_evaluate(srv.url, minimal_request(), policy, sleep=delays.append)
    else:
        remote_evaluate(srv.url, minimal_request(), policy, sleep=delays.append)
    assert srv.attempts == min(failures, max_retries) + 1 <= max_retries + 1
    assert len(delays) == srv.attempts - 1
    assert all(0 < d <= policy.max_delay_s for d in delays)


def test_unreachable_endpoint_is_transport_error():
    with Scripted([]) as srv:
        url = srv.url
    with pytest.raises(TransportError):
        remote_evaluate(url, minimal_request(), RetryPolicy(max_retries=1, timeout_s=1.0), **NO_SLEEP)


def test_loopback_equivalence():
    import dataclasses

    config = dataclasses.replace(load_scenario("default-market"), n_tasks=40, comparisons=())
    synthetic = run_episode(config)
    with LoopbackServer(config.pool, config.seed, config.tokens_per_task) as server:
        remote = run_episode(config, backend=RemoteBackend(server.endpoints))
    assert remote.to_json() == synthetic.to_json()


def test_loopback_unknown_route():
    with LoopbackServer([]) as server:
        with pytest.raises(FatalHTTPError) as err:
            remote_evaluate(server.base_url + "/ghost", minimal_request(), **NO_SLEEP)
    assert err.value.status == 404
