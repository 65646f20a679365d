"""Deterministic stand-in for a chat-completions endpoint.

Modes:

``echo-gold``
    answers each item with its gold answer in the instructed format
``empty``
    answers every item with an empty string
``flaky``
    fails the first ``failures`` attempts of each item with HTTP 429, then echoes gold
``down``
    refuses every connection
"""

from __future__ import annotations

import json
import threading
import time
from collections import Counter
from collections.abc import Iterable, Mapping
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx

from .client import ITEM_HEADER
from .corpus import Dataset
from .prompts import PromptInstance

MODES = ("echo-gold", "empty", "flaky", "down")


def gold_answer(prompt: PromptInstance, dataset: Dataset) -> str:
    p = dataset[prompt.passage_id]
    if prompt.strategy == "yes_no":
        return prompt.expected_label or "YES"
    if prompt.strategy == "question_answering":
        return f"[{p.subtree_surface}]"
    return f"[{p.sentence_ant_ana}]"


class MockEndpoint:
    def __init__(
        self,
        mode: str,
        answers: Mapping[str, str] | None = None,
        *,
        failures: int = 2,
        fail_items: Iterable[str] = (),
        delay: float = 0.0,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.answers = dict(answers or {})
        self.failures = failures
        self.fail_items = set(fail_items)
        self.delay = delay
        self.requests = 0
        self.attempts: Counter[str] = Counter()
        self.in_flight = 0
        self.high_water = 0
        self._lock = threading.Lock()

    @classmethod
    def for_prompts(cls, mode: str, prompts: Iterable[PromptInstance], dataset: Dataset, **kw) -> MockEndpoint:
        return cls(mode, {p.item_id: gold_answer(p, dataset) for p in prompts}, **kw)

    def respond(self, body: Mapping, item_id: str | None) -> tuple[int, dict]:
        """Return ``(status, json body)`` for one request."""
        with self._lock:
            self.requests += 1
            self.in_flight += 1
            self.high_water = max(self.high_water, self.in_flight)
            self.attempts[item_id or ""] += 1
            attempt = self.attempts[item_id or ""]
        try:
            if self.delay:
                time.sleep(self.delay)
            if item_id in self.fail_items:
                return 500, {"error": {"message": "injected failure"}}
            if self.mode == "flaky" and attempt <= self.failures:
                return 429, {"error": {"message": "rate limited"}}
            if self.mode == "empty":
                content = ""
            else:
                content = self.answers.get(item_id or "", "")
            return 200, {
                "id": f"mock-{self.requests}",
                "object": "chat.completion",
                "model": body.get("model"),
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            }
        finally:
            with self._lock:
                self.in_flight -= 1

    def handler(self, request: httpx.Request) -> httpx.Response:
        if self.mode == "down":
            raise httpx.ConnectError("mock endpoint is down", request=request)
        status, body = self.respond(json.loads(request.content or b"{}"), request.headers.get(ITEM_HEADER))
        return httpx.Response(status, json=body)

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handler)

    def serve(self, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
        """Serve over real HTTP on a background thread; call ``shutdown()`` when done."""
        endpoint = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                status, payload = endpoint.respond(body, self.headers.get(ITEM_HEADER))
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args: object) -> None:
                pass

        server = ThreadingHTTPServer((host, port), Handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        return server
