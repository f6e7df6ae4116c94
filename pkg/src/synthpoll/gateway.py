"""Completion dispatch, response parsing, and batch execution.

Backends are pluggable: a deterministic offline stub that replays
configured per-question distributions, and a minimal JSON-over-HTTP
adapter for remote models. Free-text answers are parsed onto the
question's categorical scale; anything that does not match stays in the
results as an unparseable outcome rather than being retried or dropped.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BackendUnavailable, RateLimited
from .ingest import CategoricalDistribution
from .profiles import PromptBundle, Question

#: response word limit the prompts instruct models to respect
DEFAULT_MAX_WORDS = 4

ENDPOINT_ENV = "SYNTHPOLL_ENDPOINT"
CREDENTIAL_ENV = "SYNTHPOLL_API_KEY"


def prompt_fingerprint(rendered: str) -> str:
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionRequest:
    bundle: PromptBundle
    model_id: str = "stub"
    temperature: float = 0.0
    max_output_words: int = DEFAULT_MAX_WORDS

    def __post_init__(self):
        if self.max_output_words < 1:
            raise ValueError("max_output_words must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class RawResponse:
    text: str
    latency: float
    backend_id: str
    request_fingerprint: str


@dataclass(frozen=True)
class CategoryOutcome:
    question_id: str
    category: str | None  # None when unparseable
    word_count: int
    over_limit: bool
    fingerprint: str = ""
    error: str | None = None

    @property
    def unparseable(self) -> bool:
        return self.category is None


@dataclass(frozen=True)
class StubSpec:
    """Per-question answer distributions the stub replays deterministically."""

    per_question: dict[str, CategoricalDistribution]
    seed: int


def load_stub_spec(path: str | Path) -> StubSpec:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    per_question = {
        qid: CategoricalDistribution(
            variable=qid, mass=entry["mass"], support_count=entry.get("support_count", 0)
        )
        for qid, entry in doc["per_question"].items()
    }
    return StubSpec(per_question=per_question, seed=int(doc["seed"]))


def validate_stub_spec(spec: StubSpec, questions: list[Question]) -> None:
    by_id = {q.id: q for q in questions}
    for qid, dist in spec.per_question.items():
        if qid not in by_id:
            raise ValueError(f"stub spec covers unknown question {qid!r}")
        extra = set(dist.mass) - set(by_id[qid].scale)
        if extra:
            raise ValueError(f"{qid}: stub categories {sorted(extra)} outside the scale")


class StubBackend:
    """Seeded offline backend replaying the configured distributions.

    Each draw is seeded from (spec seed, prompt fingerprint, occurrence
    nonce), so repeated identical prompts get independent draws while the
    full response multiset stays determined by the request sequence, not
    by completion order under concurrency.
    """

    backend_id = "stub"

    def __init__(self, spec: StubSpec, questions: list[Question] | None = None):
        if questions is not None:
            validate_stub_spec(spec, questions)
        self.spec = spec
        self._lock = threading.Lock()
        self._seen: dict[str, int] = {}

    def _draw_seed(self, fingerprint: str, nonce: int) -> int:
        digest = hashlib.sha256(
            f"{self.spec.seed}:{fingerprint}:{nonce}".encode("utf-8")
        ).digest()
        return int.from_bytes(digest[:8], "big")

    def complete_raw(self, request: CompletionRequest, nonce: int | None = None) -> str:
        question_id = request.bundle.question.id
        if question_id not in self.spec.per_question:
            raise ValueError(f"stub spec has no distribution for {question_id!r}")
        fingerprint = prompt_fingerprint(request.bundle.rendered)
        if nonce is None:
            with self._lock:
                nonce = self._seen.get(fingerprint, 0)
                self._seen[fingerprint] = nonce + 1
        dist = self.spec.per_question[question_id]
        categories = list(dist.mass)
        probs = np.array([dist.mass[c] for c in categories], dtype=float)
        probs = probs / probs.sum()
        rng = np.random.default_rng(self._draw_seed(fingerprint, nonce))
        return categories[int(rng.choice(len(categories), p=probs))]


class HttpBackend:
    """Minimal JSON-over-HTTP adapter: prompt in, completion text out.

    Endpoint and credential come from the environment unless passed
    explicitly; the credential is attached as a bearer header and never
    logged or echoed into audit events.
    """

    backend_id = "remote"

    def __init__(
        self,
        endpoint: str | None = None,
        credential: str | None = None,
        timeout: float = 30.0,
        opener=None,
    ):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        self._credential = credential or os.environ.get(CREDENTIAL_ENV, "")
        self.timeout = timeout
        self._opener = opener or urllib.request.urlopen
        if not self.endpoint:
            raise ValueError(f"no endpoint configured ({ENDPOINT_ENV} unset)")

    def complete_raw(self, request: CompletionRequest, nonce: int | None = None) -> str:
        payload = json.dumps(
            {
                "model": request.model_id,
                "prompt": request.bundle.rendered,
                "temperature": request.temperature,
                "max_words": request.max_output_words,
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self._credential:
            headers["Authorization"] = f"Bearer {self._credential}"
        req = urllib.request.Request(
            self.endpoint, data=payload, headers=headers, method="POST"
        )
        with self._opener(req, timeout=self.timeout) as response:
            body = json.loads(response.read().decode("utf-8"))
        return body["text"]


def _is_rate_limit(error: Exception) -> bool:
    return isinstance(error, urllib.error.HTTPError) and error.code == 429


def complete(
    request: CompletionRequest,
    backend,
    max_attempts: int = 3,
    backoff: float = 0.5,
    sleeper=time.sleep,
    audit=None,
    nonce: int | None = None,
) -> RawResponse:
    """Dispatch one request with retry and audit logging.

    Failures are retried with exponential backoff up to max_attempts;
    exactly one audit entry is appended per call, covering success or the
    final failure.
    """
    fingerprint = prompt_fingerprint(request.bundle.rendered)
    last_error: Exception | None = None
    rate_limited = False
    start = time.perf_counter()
    for attempt in range(max_attempts):
        try:
            text = backend.complete_raw(request, nonce=nonce)
        except Exception as error:  # noqa: BLE001 - any backend failure retries
            last_error = error
            rate_limited = _is_rate_limit(error)
            if attempt < max_attempts - 1:
                sleeper(backoff * (2**attempt))
            continue
        response = RawResponse(
            text=text,
            latency=time.perf_counter() - start,
            backend_id=backend.backend_id,
            request_fingerprint=fingerprint,
        )
        if audit is not None:
            audit.append(
                stage="gateway",
                actor=backend.backend_id,
                event={
                    "fingerprint": fingerprint,
                    "question_id": request.bundle.question.id,
                    "status": "ok",
                    "attempts": attempt + 1,
                },
            )
        return response
    if audit is not None:
        audit.append(
            stage="gateway",
            actor=backend.backend_id,
            event={
                "fingerprint": fingerprint,
                "question_id": request.bundle.question.id,
                "status": "rate_limited" if rate_limited else "unavailable",
                "attempts": max_attempts,
            },
        )
    if rate_limited:
        raise RateLimited(
            f"backend {backend.backend_id} throttled after {max_attempts} attempts"
        ) from last_error
    raise BackendUnavailable(
        f"backend {backend.backend_id} failed after {max_attempts} attempts: {last_error}"
    ) from last_error


def parse_response(raw: RawResponse, question: Question, max_words: int) -> CategoryOutcome:
    """Map free text onto the scale by case-insensitive longest match.

    The longest matching category wins so nested labels resolve to the
    most specific one. Never raises: non-matching text yields an
    unparseable outcome for downstream treatment.
    """
    lowered = raw.text.lower()
    match: str | None = None
    for category in question.scale:
        if category.lower() in lowered:
            if match is None or len(category) > len(match):
                match = category
    word_count = len(raw.text.split())
    return CategoryOutcome(
        question_id=question.id,
        category=match,
        word_count=word_count,
        over_limit=word_count > max_words,
        fingerprint=raw.request_fingerprint,
    )


def run_batch(
    bundles: list[PromptBundle],
    backend,
    concurrency: int = 1,
    model_id: str = "stub",
    temperature: float = 0.0,
    max_words: int = DEFAULT_MAX_WORDS,
    max_attempts: int = 3,
    backoff: float = 0.5,
    sleeper=time.sleep,
    audit=None,
) -> list[CategoryOutcome]:
    """Dispatch bundles with bounded concurrency, preserving input order.

    A failed item becomes an unparseable outcome carrying the error
    annotation; one bad request never aborts the batch. Stub draw nonces
    are assigned from input order so concurrent runs stay reproducible.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    requests = [
        CompletionRequest(
            bundle=bundle,
            model_id=model_id,
            temperature=temperature,
            max_output_words=max_words,
        )
        for bundle in bundles
    ]
    occurrences: dict[str, int] = {}
    nonces = []
    for bundle in bundles:
        fingerprint = prompt_fingerprint(bundle.rendered)
        nonce = occurrences.get(fingerprint, 0)
        occurrences[fingerprint] = nonce + 1
        nonces.append(nonce)

    def run_one(index: int) -> CategoryOutcome:
        request = requests[index]
        try:
            raw = complete(
                request,
                backend,
                max_attempts=max_attempts,
                backoff=backoff,
                sleeper=sleeper,
                audit=audit,
                nonce=nonces[index],
            )
        except (BackendUnavailable, RateLimited) as error:
            return CategoryOutcome(
                question_id=request.bundle.question.id,
                category=None,
                word_count=0,
                over_limit=False,
                fingerprint=prompt_fingerprint(request.bundle.rendered),
                error=str(error),
            )
        return parse_response(raw, request.bundle.question, max_words)

    if not requests:
        return []
    if concurrency == 1:
        return [run_one(i) for i in range(len(requests))]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(run_one, range(len(requests))))


# --- outcome persistence --------------------------------------------------------


def outcome_to_json(outcome: CategoryOutcome) -> dict:
    return {
        "question_id": outcome.question_id,
        "category": outcome.category,
        "word_count": outcome.word_count,
        "over_limit": outcome.over_limit,
        "fingerprint": outcome.fingerprint,
        "error": outcome.error,
    }


def outcome_from_json(doc: dict) -> CategoryOutcome:
    return CategoryOutcome(
        question_id=doc["question_id"],
        category=doc["category"],
        word_count=doc["word_count"],
        over_limit=doc["over_limit"],
        fingerprint=doc.get("fingerprint", ""),
        error=doc.get("error"),
    )


def write_outcomes(outcomes: list[CategoryOutcome], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome_to_json(outcome), sort_keys=True) + "\n")


def read_outcomes(path: str | Path) -> list[CategoryOutcome]:
    outcomes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                outcomes.append(outcome_from_json(json.loads(line)))
    return outcomes
