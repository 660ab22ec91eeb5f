"""Uniform access to chat/base LLM endpoints with deterministic replay.

Speaks the de-facto HTTP JSON completion protocol (model, messages/prompt,
temperature, max_tokens, optional echo+logprobs). Every request body is
digested; responses are persisted as human-readable transcript files so runs
can be replayed byte-for-byte with zero network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .prompting import RenderedPrompt

logger = logging.getLogger(__name__)

API_KEY_ENV = "MTJUDGE_API_KEY"
TRANSIENT_STATUSES = {408, 429, 500, 502, 503, 504}


class GatewayError(Exception):
    def __init__(self, message: str, status: int | None = None,
                 body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class ReplayMiss(GatewayError):
    pass


class CapabilityError(GatewayError):
    pass


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    kind: str
    endpoint: str
    decoding: DecodingParams = DecodingParams()

    def __post_init__(self):
        if self.kind not in ("chat", "base"):
            raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    requests: int = 0
    cost: float = 0.0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            prompt_tokens=self.prompt_tokens + other.prompt_tokens,
            completion_tokens=self.completion_tokens + other.completion_tokens,
            requests=self.requests + other.requests,
            cost=self.cost + other.cost,
        )


def request_digest(body: Mapping) -> str:
    """Stable digest of a request body; identical bodies collide on purpose."""
    canonical = json.dumps(body, sort_keys=True, ensure_ascii=False,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class TranscriptStore:
    """Directory of transcript files keyed by request digest.

    Reads are lock-free; writes are serialized. Files are pretty-printed JSON
    so recorded runs can be inspected and patched by hand.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)

    def put(self, key: str, transcript: dict) -> None:
        # write-then-rename so concurrent readers never see a partial file
        with self._write_lock:
            tmp = self._path(key).with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as f:
                json.dump(transcript, f, ensure_ascii=False, indent=2,
                          sort_keys=True)
                f.write("\n")
            os.replace(tmp, self._path(key))

    def __contains__(self, key: str) -> bool:
        return self._path(key).exists()

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.json"))


def _default_transport(url: str, payload: dict, headers: dict,
                       timeout: float) -> tuple[int, dict]:
    import requests

    resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    try:
        body = resp.json()
    except ValueError:
        body = {"raw": resp.text}
    return resp.status_code, body


class Gateway:
    """Completion client with read-through caching and strict replay.

    mode="record": consult the store first, hit the network on a miss, and
    persist the transcript. mode="replay": never touch the network; a miss is
    an error naming the digest.
    """

    def __init__(self, store: TranscriptStore | None = None,
                 mode: str = "record",
                 transport: Callable | None = None,
                 price_per_1k: Mapping[str, float] | float = 0.0,
                 max_attempts: int = 3,
                 backoff: tuple[float, ...] = (1.0, 4.0, 16.0),
                 concurrency: int = 4,
                 timeout: float = 120.0):
        if mode not in ("record", "replay"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        if mode == "replay" and store is None:
            raise ValueError("replay mode needs a transcript store")
        self.store = store
        self.mode = mode
        self.transport = transport or _default_transport
        self.price_per_1k = price_per_1k
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.concurrency = concurrency
        self.timeout = timeout

    def _price(self, model: str) -> float:
        if isinstance(self.price_per_1k, Mapping):
            return float(self.price_per_1k.get(model, 0.0))
        return float(self.price_per_1k)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, spec: ModelSpec, body: dict) -> dict:
        last_error: GatewayError | None = None
        for attempt in range(self.max_attempts):
            if attempt and attempt - 1 < len(self.backoff):
                time.sleep(self.backoff[attempt - 1])
            try:
                status, payload = self.transport(spec.endpoint, body,
                                                 self._headers(), self.timeout)
            except Exception as exc:
                last_error = GatewayError(f"transport failure: {exc}")
                continue
            if status == 200:
                return payload
            message = f"endpoint returned status {status}"
            error = GatewayError(message, status=status,
                                 body=json.dumps(payload)[:2000])
            if status in TRANSIENT_STATUSES:
                last_error = error
                continue
            raise error
        raise last_error or GatewayError("request failed")

    def _usage_from(self, payload: dict, model: str,
                    network: bool) -> Usage:
        usage = payload.get("usage") or {}
        prompt_tokens = int(usage.get("prompt_tokens", 0))
        completion_tokens = int(usage.get("completion_tokens", 0))
        total = prompt_tokens + completion_tokens
        return Usage(prompt_tokens=prompt_tokens,
                     completion_tokens=completion_tokens,
                     requests=1 if network else 0,
                     cost=total / 1000.0 * self._price(model))

    def complete(self, spec: ModelSpec,
                 prompt: RenderedPrompt | str) -> tuple[str, Usage]:
        """Greedy completion for one prompt; returns (text, usage)."""
        text = prompt.text if isinstance(prompt, RenderedPrompt) else prompt
        if spec.kind == "chat":
            body = {
                "model": spec.name,
                "messages": [{"role": "user", "content": text}],
                "temperature": spec.decoding.temperature,
                "max_tokens": spec.decoding.max_tokens,
            }
        else:
            body = {
                "model": spec.name,
                "prompt": text,
                "temperature": spec.decoding.temperature,
                "max_tokens": spec.decoding.max_tokens,
            }
        key = request_digest(body)

        if self.store is not None:
            transcript = self.store.get(key)
            if transcript is not None:
                return transcript["response_text"], self._usage_from(
                    transcript, spec.name, network=False)
        if self.mode == "replay":
            raise ReplayMiss(f"no transcript for digest {key}")

        payload = self._post(spec, body)
        try:
            choice = payload["choices"][0]
            response_text = (choice["message"]["content"]
                             if spec.kind == "chat" else choice["text"])
        except (KeyError, IndexError, TypeError):
            raise GatewayError("malformed completion response",
                               body=json.dumps(payload)[:2000])
        if self.store is not None:
            self.store.put(key, {
                "key": key,
                "model": spec.name,
                "request": body,
                "response_text": response_text,
                "usage": payload.get("usage") or {},
            })
        return response_text, self._usage_from(payload, spec.name,
                                               network=True)

    def score_continuation(self, spec: ModelSpec, context: str,
                           continuation: str,
                           ) -> tuple[list[tuple[str, float]], Usage]:
        """Per-token log-probabilities of the continuation given the context.

        Uses a completions-style echo+logprobs call; endpoints without
        log-probability support raise CapabilityError.
        """
        if not continuation:
            raise GatewayError("continuation must be non-empty")
        body = {
            "model": spec.name,
            "prompt": context + continuation,
            "temperature": 0.0,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        key = request_digest(body)

        if self.store is not None:
            transcript = self.store.get(key)
            if transcript is not None:
                return (self._slice_continuation(transcript["logprobs"],
                                                 len(context), key),
                        self._usage_from(transcript, spec.name,
                                         network=False))
        if self.mode == "replay":
            raise ReplayMiss(f"no transcript for digest {key}")

        payload = self._post(spec, body)
        try:
            logprobs = payload["choices"][0]["logprobs"]
            assert logprobs is not None
            logprobs = {
                "tokens": logprobs["tokens"],
                "token_logprobs": logprobs["token_logprobs"],
                "text_offset": logprobs["text_offset"],
            }
        except (KeyError, IndexError, TypeError, AssertionError):
            raise CapabilityError(
                f"endpoint for {spec.name} does not expose token logprobs")
        if self.store is not None:
            self.store.put(key, {
                "key": key,
                "model": spec.name,
                "request": body,
                "response_text": "",
                "logprobs": logprobs,
                "usage": payload.get("usage") or {},
            })
        return (self._slice_continuation(logprobs, len(context), key),
                self._usage_from(payload, spec.name, network=True))

    @staticmethod
    def _slice_continuation(logprobs: dict, context_len: int,
                            key: str) -> list[tuple[str, float]]:
        out = []
        for token, lp, offset in zip(logprobs["tokens"],
                                     logprobs["token_logprobs"],
                                     logprobs["text_offset"]):
            if offset >= context_len:
                if lp is None:
                    raise CapabilityError(
                        f"transcript {key}: missing logprob inside the "
                        f"continuation")
                out.append((token, float(lp)))
        return out

    def batch_complete(self, spec: ModelSpec,
                       prompts: list[RenderedPrompt | str],
                       ) -> list[tuple[str, Usage]]:
        """Complete many prompts with bounded concurrency, preserving input
        order in the result regardless of completion order."""
        if self.concurrency <= 1 or len(prompts) <= 1:
            return [self.complete(spec, p) for p in prompts]
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            return list(pool.map(lambda p: self.complete(spec, p), prompts))


@dataclass
class UsageLedger:
    """Token/cost accounting per (prompt template, input mode, language pair),
    mirroring the layout of a per-run usage table."""

    _rows: dict[tuple[str, str, str], dict] = field(default_factory=dict)

    def add(self, template: str, mode: str, lp: str, usage: Usage,
            samples: int = 1) -> None:
        row = self._rows.setdefault((template, mode, lp), {
            "samples": 0, "tokens": 0, "requests": 0, "cost": 0.0})
        row["samples"] += samples
        row["tokens"] += usage.total_tokens
        row["requests"] += usage.requests
        row["cost"] += usage.cost

    def report(self) -> list[dict]:
        """Rows per (template, mode, lp) plus one total row per template."""
        out: list[dict] = []
        templates = sorted({t for t, _, _ in self._rows})
        for template in templates:
            total = {"samples": 0, "tokens": 0, "requests": 0, "cost": 0.0}
            group = sorted(k for k in self._rows if k[0] == template)
            for key in group:
                row = self._rows[key]
                out.append({"prompt": template, "mode": key[1], "lp": key[2],
                            **row})
                for field_name in total:
                    total[field_name] += row[field_name]
            out.append({"prompt": template, "mode": "Total", "lp": "",
                        **total})
        return out
