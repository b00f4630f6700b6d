"""JSON-over-HTTP wire protocol for remote agent backends.

A remote agent is an endpoint accepting ``POST {endpoint}/v1/evaluate`` with
an :class:`EvalRequest` body and answering ``200`` with an
:class:`EvalResponse`. Errors come back as ``{"code": ..., "message": ...}``.
"""

from __future__ import annotations

import json
import logging
import math
import random
import socket
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping, Sequence

from .agents import AgentProfile, AgentResponse, ProtocolViolation, TaskInstance, TransportError, synthetic_response
from .uncertainty import DIMENSIONS, SIMPLEX_TOL, UncertaintyVector

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 30.0


class ProtocolError(ProtocolViolation):
    """Body is not a well-formed protocol message."""


class ValidationError(ProtocolError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class HTTPStatusError(TransportError):
    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


class FatalHTTPError(ProtocolViolation):
    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


@dataclass(frozen=True)
class EvalRequest:
    task_id: str
    feature_vector: tuple[float, ...]
    declared_uncertainty: UncertaintyVector
    prompt_text: str | None = None
    deadline_ms: int = int(DEFAULT_TIMEOUT_S * 1000)
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        if self.protocol_version != PROTOCOL_VERSION:
            raise ValidationError("protocol_version", f"unsupported version {self.protocol_version!r}")
        if not isinstance(self.deadline_ms, int) or self.deadline_ms <= 0:
            raise ValidationError("deadline_ms", "must be a positive integer")
        if not isinstance(self.task_id, str) or not self.task_id:
            raise ValidationError("task_id", "must be a non-empty string")


@dataclass(frozen=True)
class EvalResponse:
    task_id: str
    class_probs: tuple[float, ...]
    outcome_probs: tuple[float, ...]
    semantic_ambiguities: tuple[tuple[float, float], ...]
    tokens_generated: int
    latency_ms: int = 0

    def __post_init__(self):
        for name in ("class_probs", "outcome_probs"):
            _check_simplex(name, getattr(self, name))
        for i, pair in enumerate(self.semantic_ambiguities):
            if len(pair) != 2 or not all(_finite(x) and x >= 0 for x in pair):
                raise ValidationError(f"semantic_ambiguities[{i}]", "expected a nonnegative (weight, score) pair")
        for name in ("tokens_generated", "latency_ms"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ValidationError(name, "must be a nonnegative integer")

    def to_agent_response(self) -> AgentResponse:
        return AgentResponse(self.class_probs, self.outcome_probs, self.semantic_ambiguities, self.tokens_generated)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_simplex(name: str, probs) -> None:
    if not probs or not all(_finite(p) and p >= 0 for p in probs):
        raise ValidationError(name, "expected a nonempty list of nonnegative numbers")
    if abs(math.fsum(probs) - 1.0) > SIMPLEX_TOL:
        raise ValidationError(name, f"sums to {math.fsum(probs)!r}, not 1")


def _load(body: bytes) -> dict:
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON body: {exc}") from None
    if not isinstance(doc, dict):
        raise ProtocolError("body must be a JSON object")
    return doc


def _field(doc: dict, name: str, path: str | None = None):
    if name not in doc:
        raise ValidationError(path or name, "required field missing")
    return doc[name]


def _floats(value, name: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not all(_finite(x) for x in value):
        raise ValidationError(name, "expected a list of finite numbers")
    return tuple(float(x) for x in value)


def encode_request(req: EvalRequest) -> bytes:
    doc = {
        "protocol_version": req.protocol_version,
        "task_id": req.task_id,
        "payload": {
            "feature_vector": list(req.feature_vector),
            "declared_uncertainty": dict(zip(DIMENSIONS, req.declared_uncertainty.as_tuple())),
            "prompt_text": req.prompt_text,
        },
        "deadline_ms": req.deadline_ms,
    }
    return json.dumps(doc, sort_keys=True, allow_nan=False).encode("utf-8")


def decode_request(body: bytes) -> EvalRequest:
    """Parse a request; unknown fields are ignored."""
    doc = _load(body)
    version = _field(doc, "protocol_version")
    task_id = _field(doc, "task_id")
    payload = _field(doc, "payload")
    if not isinstance(payload, dict):
        raise ValidationError("payload", "expected an object")
    declared = _field(payload, "declared_uncertainty", "payload.declared_uncertainty")
    if not isinstance(declared, dict):
        raise ValidationError("declared_uncertainty", "expected an object with perc, sem, inf")
    values = []
    for d in DIMENSIONS:
        v = declared.get(d)
        if not _finite(v) or v < 0:
            raise ValidationError(f"declared_uncertainty.{d}", "expected a nonnegative number")
        values.append(float(v))
    prompt = payload.get("prompt_text")
    if prompt is not None and not isinstance(prompt, str):
        raise ValidationError("prompt_text", "expected a string or null")
    deadline = doc.get("deadline_ms", int(DEFAULT_TIMEOUT_S * 1000))
    if isinstance(version, bool) or isinstance(deadline, bool):
        raise ValidationError("protocol_version" if isinstance(version, bool) else "deadline_ms", "expected an integer")
    return EvalRequest(
        task_id=task_id,
        feature_vector=_floats(payload.get("feature_vector", []), "feature_vector"),
        declared_uncertainty=UncertaintyVector(*values),
        prompt_text=prompt,
        deadline_ms=deadline,
        protocol_version=version,
    )


def encode_response(resp: EvalResponse) -> bytes:
    doc = {
        "task_id": resp.task_id,
        "class_probs": list(resp.class_probs),
        "outcome_probs": list(resp.outcome_probs),
        "semantic_ambiguities": [list(p) for p in resp.semantic_ambiguities],
        "tokens_generated": resp.tokens_generated,
        "latency_ms": resp.latency_ms,
    }
    return json.dumps(doc, sort_keys=True, allow_nan=False).encode("utf-8")


def decode_response(body: bytes) -> EvalResponse:
    doc = _load(body)
    task_id = _field(doc, "task_id")
    if not isinstance(task_id, str):
        raise ValidationError("task_id", "expected a string")
    amb = _field(doc, "semantic_ambiguities")
    if not isinstance(amb, list) or not all(isinstance(p, list) for p in amb):
        raise ValidationError("semantic_ambiguities", "expected a list of pairs")
    return EvalResponse(
        task_id=task_id,
        class_probs=_floats(_field(doc, "class_probs"), "class_probs"),
        outcome_probs=_floats(_field(doc, "outcome_probs"), "outcome_probs"),
        semantic_ambiguities=tuple(_floats(p, f"semantic_ambiguities[{i}]") for i, p in enumerate(amb)),
        tokens_generated=_field(doc, "tokens_generated"),
        latency_ms=doc.get("latency_ms", 0),
    )


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    base_delay_s: float = 0.05
    max_delay_s: float = 2.0
    jitter: float = 0.5  # fraction of the delay randomised
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")

    def delay(self, retry: int, rng: random.Random) -> float:
        base = min(self.max_delay_s, self.base_delay_s * (2 ** retry))
        return base * (1.0 - self.jitter * rng.random())


def _post(url: str, body: bytes, timeout: float, bearer_token: str | None) -> bytes:
    headers = {"Content-Type": "application/json"}
    if bearer_token:
        headers["Authorization"] = f"Bearer {bearer_token}"
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace")[:200]
        if 500 <= exc.code < 600:
            raise HTTPStatusError(exc.code, detail) from None
        raise FatalHTTPError(exc.code, detail) from None
    except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError) as exc:
        raise TransportError(f"{url}: {exc}") from None


def remote_evaluate(
    endpoint: str,
    request: EvalRequest,
    policy: RetryPolicy = RetryPolicy(),
    *,
    bearer_token: str | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> EvalResponse:
    """POST the request, retrying timeouts and 5xx with jittered exponential backoff.

    At most ``1 + max_retries`` attempts are made. 4xx answers and invalid
    bodies are fatal straight away.
    """
    url = endpoint.rstrip("/") + "/v1/evaluate"
    body = encode_request(request)
    rng = rng or random.Random()
    timeout = min(policy.timeout_s, request.deadline_ms / 1000.0)
    last: Exception | None = None
    for attempt in range(policy.max_retries + 1):
        if attempt:
            sleep(policy.delay(attempt - 1, rng))
        try:
            raw = _post(url, body, timeout, bearer_token)
        except TransportError as exc:
            log.debug("attempt %d on %s failed: %s", attempt + 1, url, exc)
            last = exc
            continue
        response = decode_response(raw)
        if response.task_id != request.task_id:
            raise ValidationError("task_id", f"expected {request.task_id!r}, got {response.task_id!r}")
        return response
    raise TransportError(f"{url}: gave up after {policy.max_retries + 1} attempts: {last}")


def request_for(task: TaskInstance, deadline_ms: int = int(DEFAULT_TIMEOUT_S * 1000)) -> EvalRequest:
    return EvalRequest(task.id, tuple(task.feature_vector), task.epistemic, None, deadline_ms)


@dataclass
class RemoteBackend:
    """Backend that forwards each evaluation to the agent's endpoint."""

    endpoints: Mapping[str, str]
    policy: RetryPolicy = field(default_factory=RetryPolicy)
    bearer_token: str | None = None

    def evaluate(self, agent: AgentProfile, task: TaskInstance) -> AgentResponse:
        try:
            endpoint = self.endpoints[agent.id]
        except KeyError:
            raise ProtocolViolation(f"no endpoint configured for agent {agent.id!r}") from None
        deadline = int(self.policy.timeout_s * 1000)
        resp = remote_evaluate(endpoint, request_for(task, deadline), self.policy, bearer_token=self.bearer_token)
        return resp.to_agent_response()


class _Handler(BaseHTTPRequestHandler):
    server: "_LoopbackHTTPServer"

    def log_message(self, fmt, *args):
        log.debug("loopback: " + fmt, *args)

    def _reply(self, status: int, body: bytes):
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, code: str, message: str):
        self._reply(status, json.dumps({"code": code, "message": message}).encode("utf-8"))

    def do_POST(self):
        parts = self.path.strip("/").split("/")
        if len(parts) != 3 or parts[1:] != ["v1", "evaluate"]:
            return self._error(404, "not_found", f"no route {self.path}")
        agent = self.server.pool.get(parts[0])
        if agent is None:
            return self._error(404, "unknown_agent", parts[0])
        length = int(self.headers.get("Content-Length", 0))
        try:
            req = decode_request(self.rfile.read(length))
        except ProtocolError as exc:
            return self._error(400, "invalid_request", str(exc))
        started = time.monotonic()
        out = synthetic_response(self.server.seed, agent, req.task_id, req.declared_uncertainty.as_tuple(),
                                 self.server.tokens)
        latency = int((time.monotonic() - started) * 1000)
        resp = EvalResponse(req.task_id, out.class_probs, out.outcome_probs, out.semantic_ambiguities,
                            out.tokens_generated, latency)
        self._reply(200, encode_response(resp))


class _LoopbackHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, pool, seed, tokens):
        super().__init__(addr, _Handler)
        self.pool = pool
        self.seed = seed
        self.tokens = tokens


class LoopbackServer:
    """Serves the synthetic model over HTTP, one route per agent.

    Use as a context manager; ``endpoints`` maps agent ids to base URLs.
    """

    def __init__(self, pool: Sequence[AgentProfile], seed: int = 0, tokens_per_task: int = 20,
                 host: str = "127.0.0.1", port: int = 0):
        self._httpd = _LoopbackHTTPServer((host, port), {a.id: a for a in pool}, seed, tokens_per_task)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def endpoints(self) -> dict[str, str]:
        return {aid: f"{self.base_url}/{aid}" for aid in sorted(self._httpd.pool)}

    def start(self) -> "LoopbackServer":
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
