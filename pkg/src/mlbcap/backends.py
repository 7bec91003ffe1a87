"""Model-completion backends.

Two kinds behind one ``complete()`` call: a deterministic offline mock whose
replies are a pure function of (seed, template id, prompt text), and an
OpenAI-compatible chat-completions HTTP client with bounded retry. Also hosts
the tolerant JSON extractor used on every model reply.
"""

from __future__ import annotations

import base64
import hashlib
import json
import random
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import requests

from .errors import (
    BackendRejected,
    BackendUnavailable,
    CapabilityError,
    ParseInvalid,
    ParseNoObject,
)
from .prompts import RenderedPrompt, TemplateId

SYSTEM_PROMPT = "You are an expert assistant for scientific figure captioning."
BACKOFF_BASE_SECONDS = 0.5
_RETRYABLE_STATUS = {429}


class BackendKind(str, Enum):
    MOCK = "mock"
    HTTP_CHAT = "http_chat"


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    kind: BackendKind = BackendKind.MOCK
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    api_key_env: str = ""
    supports_images: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind == BackendKind.HTTP_CHAT and not (self.endpoint_url and self.model_name):
            raise ValueError("http_chat backends need endpoint_url and model_name")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend_id: str
    latency: float
    attempt_count: int


def extract_json_object(text: str) -> tuple[object, tuple[int, int]]:
    """Parse the first balanced top-level {...} region in a model reply.

    Tolerates surrounding prose and code fences. Returns (value, span) where
    text[span[0]:span[1]] is the region that parsed. Raises ParseNoObject when
    no balanced region exists, ParseInvalid when the region is not valid JSON.
    """
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    region = text[start : i + 1]
                    try:
                        return json.loads(region), (start, i + 1)
                    except json.JSONDecodeError as exc:
                        raise ParseInvalid(
                            f"balanced region is not valid JSON: {exc}"
                        ) from exc
            # unbalanced close before open cannot happen (we start at '{')
        break
    raise ParseNoObject("no balanced JSON object in reply")


# --- deterministic mock ---

_MOCK_VOCAB = (
    "accuracy", "baseline", "curve", "distribution", "error", "frequency",
    "gain", "heatmap", "increase", "latency", "margin", "noise", "outcome",
    "precision", "quantile", "ratio", "recall", "runtime", "sample", "trend",
    "throughput", "variance", "weight", "cluster", "epoch", "gradient",
    "layer", "metric", "node", "overlap", "peak", "range", "series", "slope",
    "spread", "subset", "threshold", "token", "value", "window",
)


def _digest_stream(key: str):
    """Infinite byte stream derived from repeated hashing of key."""
    counter = 0
    while True:
        block = hashlib.sha256(f"{key}#{counter}".encode("utf-8")).digest()
        yield from block
        counter += 1


def _mock_sentence(stream, n_words: int, fig_prefix: bool = False) -> str:
    words = [_MOCK_VOCAB[next(stream) % len(_MOCK_VOCAB)] for _ in range(n_words)]
    body = " ".join(words)
    if fig_prefix:
        return f"Fig. {1 + next(stream) % 9}. {body.capitalize()}."
    return f"{body.capitalize()}."


def _mock_reply(config: BackendConfig, prompt: RenderedPrompt) -> str:
    key = f"{config.seed}|{prompt.template_id.value}|" + hashlib.sha256(
        prompt.text.encode("utf-8")
    ).hexdigest()
    stream = _digest_stream(key)
    h = next(stream)
    tid = prompt.template_id
    if tid == TemplateId.QUALITY_ASSESSMENT:
        return json.dumps({"rating": 1 + h % 6})
    if tid in (TemplateId.CAPTION_FEWSHOT, TemplateId.CAPTION_PLAIN):
        n = 4 + h % 40
        return json.dumps({"caption": _mock_sentence(stream, n, fig_prefix=True)})
    if tid == TemplateId.DESCRIPTION_LARGE:
        return json.dumps({"description": _mock_sentence(stream, 6 + h % 20)})
    if tid == TemplateId.JUDGEMENT:
        labels = ["A", "B", "C", "D"]
        good = labels[h % 4]
        bad = labels[(h // 4) % 4]
        if bad == good:
            bad = labels[(labels.index(good) + 1) % 4]
        n = 5 + next(stream) % 60
        return json.dumps(
            {
                "Good": good,
                "Bad": bad,
                "Improved Caption": _mock_sentence(stream, n, fig_prefix=True),
            }
        )
    # DESCRIPTION_SIMPLE and SUMMARIZE reply with plain text
    return _mock_sentence(stream, 6 + h % 20, fig_prefix=(tid == TemplateId.SUMMARIZE))


# --- HTTP chat ---

_MIME_BY_SUFFIX = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg",
                   ".gif": "image/gif", ".webp": "image/webp"}


def _image_data_url(image_ref: str) -> str:
    data = Path(image_ref).read_bytes()
    mime = _MIME_BY_SUFFIX.get(Path(image_ref).suffix.lower(), "image/png")
    return f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"


def build_chat_request(config: BackendConfig, prompt: RenderedPrompt) -> dict:
    """Request body in OpenAI chat-completions shape (covered by fixture tests)."""
    if prompt.image_ref:
        content: object = [
            {"type": "text", "text": prompt.text},
            {"type": "image_url", "image_url": {"url": _image_data_url(prompt.image_ref)}},
        ]
    else:
        content = prompt.text
    return {
        "model": config.model_name,
        "temperature": config.temperature,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": content},
        ],
    }


def _http_headers(config: BackendConfig) -> dict[str, str]:
    import os

    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    return headers


def _http_call(config: BackendConfig, prompt: RenderedPrompt) -> str:
    resp = requests.post(
        config.endpoint_url,
        headers=_http_headers(config),
        json=build_chat_request(config, prompt),
        timeout=config.timeout,
    )
    if resp.status_code in _RETRYABLE_STATUS or resp.status_code >= 500:
        raise _Transient(f"HTTP {resp.status_code}")
    if not 200 <= resp.status_code < 300:
        raise BackendRejected(
            f"provider returned HTTP {resp.status_code}", status=resp.status_code
        )
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendRejected(
            f"malformed completion body: {exc}", status=resp.status_code
        ) from exc


class _Transient(Exception):
    pass


def backoff_delay(attempt: int, rng: random.Random | None = None) -> float:
    """Doubling backoff with half-range jitter; delays never decrease."""
    r = rng.random() if rng is not None else random.random()
    return BACKOFF_BASE_SECONDS * (2 ** attempt) * (0.5 + 0.5 * r)


def complete(
    config: BackendConfig,
    prompt: RenderedPrompt,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> CompletionResult:
    """Run one completion with at most max_retries retries on transient failures.

    Transient means a network error, HTTP 429, or a 5xx status. Any other
    non-2xx status is terminal (BackendRejected). Mock backends never retry.
    """
    if prompt.image_ref and not config.supports_images:
        raise CapabilityError(
            "prompt carries an image but backend is text-only",
            backend_id=config.backend_id,
        )
    started = time.perf_counter()
    if config.kind == BackendKind.MOCK:
        return CompletionResult(
            text=_mock_reply(config, prompt),
            backend_id=config.backend_id,
            latency=time.perf_counter() - started,
            attempt_count=1,
        )

    attempts_allowed = config.max_retries + 1
    last_error: Exception | None = None
    for attempt in range(1, attempts_allowed + 1):
        try:
            text = _http_call(config, prompt)
        except (_Transient, requests.RequestException) as exc:
            last_error = exc
            if attempt < attempts_allowed:
                sleep(backoff_delay(attempt - 1, rng))
            continue
        return CompletionResult(
            text=text,
            backend_id=config.backend_id,
            latency=time.perf_counter() - started,
            attempt_count=attempt,
        )
    raise BackendUnavailable(
        f"retries exhausted after {attempts_allowed} attempts: {last_error}",
        backend_id=config.backend_id,
    )
