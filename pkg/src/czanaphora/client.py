"""Chat-completions client with retries, bounded concurrency and resumable runs."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import httpx
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from .prompts import PromptInstance

logger = logging.getLogger(__name__)

API_KEY_ENV = "CZANAPHORA_API_KEY"
ITEM_HEADER = "X-Item-Id"
TRANSIENT_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


class ClientError(RuntimeError):
    pass


class EndpointUnreachable(ClientError):
    pass


class RetriesExhausted(ClientError):
    pass


class MalformedResponse(ClientError):
    pass


class _Transient(Exception):
    def __init__(self, message: str, unreachable: bool = False):
        super().__init__(message)
        self.unreachable = unreachable


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model_id: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 512
    request_timeout: float = 120.0
    max_retries: int = 4
    max_in_flight: int = 4
    backoff_initial: float = 1.0
    backoff_max: float = 30.0

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


class RequestLog:
    """Thread-safe JSON-lines log of every request attempt."""

    def __init__(self, path: Path | None):
        self.path = path
        self._lock = threading.Lock()
        self.entries = 0

    def write(self, **record: Any) -> None:
        with self._lock:
            self.entries += 1
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")


class ChatClient:
    """Thin wrapper over an OpenAI-compatible ``/chat/completions`` endpoint.

    ``transport`` lets tests plug in :class:`httpx.MockTransport`.
    """

    def __init__(
        self,
        config: EndpointConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        api_key: str | None = None,
        log: RequestLog | None = None,
    ):
        self.config = config
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._http = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.request_timeout,
            transport=transport,
        )
        self.log = log or RequestLog(None)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> ChatClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _payload(self, prompt: str) -> dict[str, Any]:
        return {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        }

    def _attempt(self, prompt: str, item_id: str | None) -> str:
        headers = {ITEM_HEADER: item_id} if item_id else {}
        t0 = time.monotonic()
        try:
            resp = self._http.post("/chat/completions", json=self._payload(prompt), headers=headers)
        except (httpx.ConnectError, httpx.ConnectTimeout) as exc:
            self.log.write(item=item_id, status=None, error=str(exc), latency=time.monotonic() - t0)
            raise _Transient(f"connection failed: {exc}", unreachable=True) from exc
        except httpx.TimeoutException as exc:
            self.log.write(item=item_id, status=None, error="timeout", latency=time.monotonic() - t0)
            raise _Transient(f"timeout: {exc}") from exc
        latency = time.monotonic() - t0
        if resp.status_code in TRANSIENT_STATUS:
            self.log.write(item=item_id, status=resp.status_code, latency=latency)
            raise _Transient(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            self.log.write(item=item_id, status=resp.status_code, latency=latency, body=resp.text[:500])
            raise ClientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            self.log.write(item=item_id, status=resp.status_code, latency=latency, body=resp.text[:500])
            raise MalformedResponse(f"unexpected response body: {resp.text[:200]}") from exc
        content = content or ""
        self.log.write(item=item_id, status=resp.status_code, latency=latency, response=content)
        return content

    def complete(self, prompt: str, item_id: str | None = None) -> str:
        """Return the first completion, retrying transient failures with exponential backoff."""
        retrying = Retrying(
            stop=stop_after_attempt(self.config.max_retries + 1),
            wait=wait_exponential(multiplier=self.config.backoff_initial, max=self.config.backoff_max),
            retry=retry_if_exception_type(_Transient),
        )
        try:
            return retrying(self._attempt, prompt, item_id)
        except RetryError as exc:
            last = exc.last_attempt.exception()
            if isinstance(last, _Transient) and last.unreachable:
                raise EndpointUnreachable(str(last)) from last
            raise RetriesExhausted(f"gave up after {self.config.max_retries} retries: {last}") from last


def run_dir_name(strategy: str, shots: int, model_id: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", model_id)
    return f"{strategy}-{shots}shot-{safe}"


def _item_file(items_dir: Path, item_id: str) -> Path:
    safe = re.sub(r"[^A-Za-z0-9._#-]+", "_", item_id)
    if safe != item_id or len(safe) > 120:
        safe = f"{safe[:80]}-{hashlib.sha1(item_id.encode()).hexdigest()[:12]}"
    return items_dir / f"{safe}.json"


@dataclass
class BatchResult:
    item_id: str
    raw: str | None = None
    error: str | None = None
    cached: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None


def run_batch(
    prompts: Sequence[PromptInstance],
    client: ChatClient,
    run_dir: str | Path | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> list[BatchResult]:
    """Complete every prompt with at most ``max_in_flight`` outstanding requests.

    Results come back in input order. With ``run_dir``, each successful
    completion is stored under ``items/`` and reused on the next run.
    """
    items_dir = Path(run_dir) / "items" if run_dir is not None else None
    if items_dir is not None:
        items_dir.mkdir(parents=True, exist_ok=True)
    results: list[BatchResult | None] = [None] * len(prompts)
    todo: list[int] = []
    for i, p in enumerate(prompts):
        cached = _load_cached(items_dir, p) if items_dir is not None else None
        if cached is not None:
            results[i] = BatchResult(p.item_id, cached, cached=True)
        else:
            todo.append(i)
    done = len(prompts) - len(todo)

    def work(i: int) -> BatchResult:
        p = prompts[i]
        try:
            raw = client.complete(p.rendered, p.item_id)
        except ClientError as exc:
            logger.warning("item %s failed: %s", p.item_id, exc)
            return BatchResult(p.item_id, error=f"{type(exc).__name__}: {exc}")
        if items_dir is not None:
            _item_file(items_dir, p.item_id).write_text(
                json.dumps({"id": p.item_id, "prompt_sha1": _sha1(p.rendered), "raw": raw}, ensure_ascii=False),
                encoding="utf-8",
            )
        return BatchResult(p.item_id, raw)

    if todo:
        with ThreadPoolExecutor(max_workers=client.config.max_in_flight) as pool:
            for i, res in zip(todo, pool.map(work, todo)):
                results[i] = res
                done += 1
                if progress:
                    progress(done, len(prompts))
    return [r for r in results if r is not None]


def _sha1(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


def _load_cached(items_dir: Path, prompt: PromptInstance) -> str | None:
    path = _item_file(items_dir, prompt.item_id)
    if not path.exists():
        return None
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        return None
    if data.get("prompt_sha1") != _sha1(prompt.rendered):
        logger.info("prompt changed for %s; re-querying", prompt.item_id)
        return None
    return data.get("raw")
