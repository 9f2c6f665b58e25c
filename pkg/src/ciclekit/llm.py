"""Completion backends, label parsing, and the prompt-to-prediction step.

The HTTP client targets any completions endpoint that accepts the classic
{model, prompt, temperature, max_tokens} payload. Oracle backends stand in
for the real model during tests and cost-free benchmark reproduction; they
see the structured prompt, never the network.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Protocol

import httpx
import numpy as np

from .corpus import LabelSpace
from .prompting import Bypass, PromptOutcome, PromptSpec

ENV_BASE_URL = "CICLE_API_BASE"
ENV_API_KEY = "CICLE_API_KEY"
ENV_MODEL = "CICLE_MODEL"

RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class CompletionError(RuntimeError):
    """The endpoint failed for good, retries included."""


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model: str
    max_tokens: int = 20
    temperature: float = 0.0
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.temperature != 0.0:
            raise ValueError("completions are deterministic; temperature must be 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    retries: int = 0
    latency: float = 0.0


class HttpCompletionClient:
    """Plain completions client with bounded concurrency and retries.

    429 and 5xx responses are retried with exponential backoff; any other
    failure raises immediately. At most ``max_concurrency`` requests are in
    flight across threads.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        max_retries: int = 5,
        backoff: float = 0.5,
        backoff_cap: float = 30.0,
        max_concurrency: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleeper=time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL) or "").rstrip("/")
        if not self.base_url:
            raise ValueError(f"no endpoint: pass base_url or set {ENV_BASE_URL}")
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        self.max_retries = max_retries
        self.backoff = backoff
        self.backoff_cap = backoff_cap
        self._sleep = sleeper
        self._gate = threading.BoundedSemaphore(max_concurrency)
        self._client = httpx.Client(transport=transport)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": request.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        started = time.monotonic()
        attempt = 0
        while True:
            with self._gate:
                try:
                    response = self._client.post(
                        f"{self.base_url}/completions",
                        json=payload,
                        headers=headers,
                        timeout=request.timeout,
                    )
                except httpx.TimeoutException as exc:
                    raise CompletionError(f"request timed out after {request.timeout}s") from exc
            if response.status_code == 200:
                body = response.json()
                try:
                    text = body["choices"][0]["text"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise CompletionError(f"malformed completion body: {body!r}") from exc
                return CompletionResult(
                    text=text, retries=attempt, latency=time.monotonic() - started
                )
            if response.status_code in RETRY_STATUS and attempt < self.max_retries:
                self._sleep(min(self.backoff * (2.0 ** attempt), self.backoff_cap))
                attempt += 1
                continue
            raise CompletionError(
                f"completion failed with status {response.status_code} after {attempt} retries"
            )

    def close(self) -> None:
        self._client.close()


class PromptBackend(Protocol):
    def complete_prompt(self, spec: PromptSpec, true_label: str | None) -> CompletionResult: ...


class HttpPromptBackend:
    """Routes rendered prompts to a completions endpoint."""

    def __init__(self, client: HttpCompletionClient, model: str | None = None,
                 max_tokens: int = 20, timeout: float = 30.0):
        self.client = client
        self.model = model or os.environ.get(ENV_MODEL)
        if not self.model:
            raise ValueError(f"no model name: pass model or set {ENV_MODEL}")
        self.max_tokens = max_tokens
        self.timeout = timeout

    def complete_prompt(self, spec: PromptSpec, true_label: str | None = None) -> CompletionResult:
        request = CompletionRequest(
            prompt=spec.rendered,
            model=self.model,
            max_tokens=self.max_tokens,
            timeout=self.timeout,
        )
        return self.client.complete(request)


def _sample_rng(seed: int, query: str) -> np.random.Generator:
    # per-query stream: the draw for one sample never depends on batch order
    digest = hashlib.blake2b(f"{seed}:{query}".encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


def _distinct_shot_labels(spec: PromptSpec) -> list[str]:
    seen: list[str] = []
    for shot in spec.shots:
        if shot.label not in seen:
            seen.append(shot.label)
    return seen


class PerfectOracle:
    """Replies with the true label whenever the prompt makes it reachable.

    If the true label is absent from the shot labels, the reply is a
    seeded uniform draw among them, standing in for a best-case model that
    can only answer from what the prompt shows.
    """

    def __init__(self, seed: int = 42):
        self.seed = seed

    def complete_prompt(self, spec: PromptSpec, true_label: str | None) -> CompletionResult:
        if true_label is None:
            raise ValueError("the perfect oracle needs the true label")
        labels = _distinct_shot_labels(spec)
        if not labels:
            raise ValueError("cannot answer a prompt with no shots")
        if true_label in labels:
            return CompletionResult(text=true_label)
        rng = _sample_rng(self.seed, spec.query)
        return CompletionResult(text=labels[int(rng.integers(len(labels)))])


class RandomShotOracle:
    """Replies with a seeded uniform draw among the distinct shot labels."""

    def __init__(self, seed: int = 42):
        self.seed = seed

    def complete_prompt(self, spec: PromptSpec, true_label: str | None = None) -> CompletionResult:
        labels = _distinct_shot_labels(spec)
        if not labels:
            raise ValueError("cannot answer a prompt with no shots")
        rng = _sample_rng(self.seed, spec.query)
        return CompletionResult(text=labels[int(rng.integers(len(labels)))])


class ScriptedBackend:
    """Replays canned replies keyed by the sha256 of the rendered prompt."""

    def __init__(self, replies: dict[str, str], default: str | None = None):
        self.replies = dict(replies)
        self.default = default

    def complete_prompt(self, spec: PromptSpec, true_label: str | None = None) -> CompletionResult:
        key = prompt_sha256(spec.rendered)
        if key in self.replies:
            return CompletionResult(text=self.replies[key])
        if self.default is not None:
            return CompletionResult(text=self.default)
        raise KeyError(f"no scripted reply for prompt {key}")


def prompt_sha256(rendered: str) -> str:
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()


_QUOTE_CHARS = "\"'`“”‘’"


def parse_label(raw: str, labels: Iterable[str]) -> str | None:
    """Exact-match label extraction; None when nothing matches.

    The reply is stripped of surrounding whitespace and quotes and
    lowercased; it must then equal one of the labels lowercased. No fuzzy
    matching: a reply the label set does not contain is a failure.
    """
    cleaned = raw.strip().strip(_QUOTE_CHARS).strip().lower()
    lookup = {}
    for label in labels:
        lookup.setdefault(label.lower(), label)
    return lookup.get(cleaned)


@dataclass(frozen=True)
class SampleTelemetry:
    """Cost and outcome counters for one classified sample."""

    strategy: str
    bypassed: bool
    parse_failed: bool
    prompt_chars: int | None = None
    classes_in_prompt: int | None = None
    shots: int | None = None
    retries: int = 0
    raw_reply: str | None = None

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "bypassed": self.bypassed,
            "parse_failed": self.parse_failed,
            "prompt_chars": self.prompt_chars,
            "classes_in_prompt": self.classes_in_prompt,
            "shots": self.shots,
            "retries": self.retries,
            "raw_reply": self.raw_reply,
        }


def classify_with_llm(
    outcome: PromptOutcome,
    label_space: LabelSpace,
    backend: PromptBackend,
    true_label: str | None = None,
) -> tuple[str | None, SampleTelemetry]:
    """Resolve one prompt outcome to a label prediction plus telemetry.

    Bypasses return their class without touching the backend. Prompts are
    completed and parsed; an unparseable reply yields prediction None with
    ``parse_failed`` set.
    """
    if isinstance(outcome, Bypass):
        return outcome.label, SampleTelemetry(
            strategy="cicle", bypassed=True, parse_failed=False
        )
    result = backend.complete_prompt(outcome, true_label)
    parsed = parse_label(result.text, label_space.labels)
    telemetry = SampleTelemetry(
        strategy=outcome.strategy,
        bypassed=False,
        parse_failed=parsed is None,
        prompt_chars=outcome.n_chars,
        classes_in_prompt=outcome.n_classes,
        shots=outcome.n_shots,
        retries=result.retries,
        raw_reply=result.text,
    )
    return parsed, telemetry


class TranscriptWriter:
    """Append-only JSON-lines log of every prompt round trip."""

    def __init__(self, path: str):
        self._fh = open(path, "w", encoding="utf-8")

    def log_prompt(self, spec: PromptSpec, reply: str | None, parsed: str | None,
                   retries: int = 0, latency: float = 0.0) -> None:
        self._write(
            {
                "strategy": spec.strategy,
                "bypassed": False,
                "prompt_sha256": prompt_sha256(spec.rendered),
                "prompt_chars": spec.n_chars,
                "n_shots": spec.n_shots,
                "n_classes": spec.n_classes,
                "reply": reply,
                "parsed": parsed,
                "retries": retries,
                "latency_ms": round(latency * 1000.0, 3),
            }
        )

    def log_bypass(self, bypass: Bypass) -> None:
        self._write(
            {
                "strategy": "cicle",
                "bypassed": True,
                "label": bypass.label,
                "probability": bypass.probability,
            }
        )

    def _write(self, row: dict) -> None:
        self._fh.write(json.dumps(row) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TranscriptWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
