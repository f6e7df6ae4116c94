import urllib.error

import pytest

from synthpoll.errors import BackendUnavailable, RateLimited
from synthpoll.gateway import (
    CategoryOutcome,
    CompletionRequest,
    HttpBackend,
    RawResponse,
    StubBackend,
    StubSpec,
    complete,
    parse_response,
    prompt_fingerprint,
    run_batch,
    validate_stub_spec,
)
from synthpoll.governance import AuditLog
from synthpoll.ingest import CategoricalDistribution
from synthpoll.profiles import Profile, PromptBundle, Question

from oracles import oracle_l1

SCALE = ("strongly disagree", "tend to disagree", "neither agree nor disagree",
         "tend to agree", "strongly agree")


def question(qid="q1", scale=SCALE):
    return Question(id=qid, text="Question text", scale=scale)


def bundle(qid="q1", rendered="prompt text", scale=SCALE):
    return PromptBundle(
        profile=Profile(assignment={"age": "20 – 29"}),
        question=question(qid, scale),
        rendered=rendered,
    )


def stub(per_question, seed=11):
    spec = StubSpec(
        per_question={
            qid: CategoricalDistribution(qid, mass, 0) for qid, mass in per_question.items()
        },
        seed=seed,
    )
    return StubBackend(spec)


def raw(text):
    return RawResponse(text=text, latency=0.0, backend_id="stub",
                       request_fingerprint=prompt_fingerprint(text))


class FlakyBackend:
    """Scripted failure sequence, then a fixed response."""

    backend_id = "flaky"

    def __init__(self, failures):
        self.failures = list(failures)
        self.calls = 0

    def complete_raw(self, request, nonce=None):
        self.calls += 1
        if self.failures:
            raise self.failures.pop(0)
        return "tend to agree"


def http_error(code):
    return urllib.error.HTTPError("http://x", code, "err", {}, None)


class TestStubBackend:
    def test_degenerate_distribution(self):
        backend = stub({"q1": {"agree": 1.0}})
        request = CompletionRequest(bundle=bundle(scale=("agree", "disagree")))
        assert backend.complete_raw(request) == "agree"

    def test_seeded_determinism_across_instances(self):
        per_question = {"q1": {"a": 0.4, "b": 0.6}}
        first = stub(per_question, seed=5)
        second = stub(per_question, seed=5)
        request = CompletionRequest(bundle=bundle(scale=("a", "b")))
        sequence_one = [first.complete_raw(request) for _ in range(20)]
        sequence_two = [second.complete_raw(request) for _ in range(20)]
        assert sequence_one == sequence_two

    def test_different_seeds_differ(self):
        per_question = {"q1": {"a": 0.5, "b": 0.5}}
        request = CompletionRequest(bundle=bundle(scale=("a", "b")))
        first = stub(per_question, seed=1)
        second = stub(per_question, seed=2)
        one = [first.complete_raw(request) for _ in range(30)]
        two = [second.complete_raw(request) for _ in range(30)]
        assert one != two

    def test_spec_validation_against_scale(self):
        spec = StubSpec(
            per_question={"q1": CategoricalDistribution("q1", {"banana": 1.0}, 0)}, seed=0
        )
        with pytest.raises(ValueError):
            validate_stub_spec(spec, [question("q1")])


class TestComplete:
    def test_retries_then_unavailable(self):
        backend = FlakyBackend([http_error(500), http_error(500), http_error(500)])
        with pytest.raises(BackendUnavailable):
            complete(CompletionRequest(bundle=bundle()), backend, max_attempts=3,
                     sleeper=lambda _: None)
        assert backend.calls == 3

    def test_recovers_within_budget(self):
        backend = FlakyBackend([http_error(500)])
        response = complete(CompletionRequest(bundle=bundle()), backend,
                            max_attempts=3, sleeper=lambda _: None)
        assert response.text == "tend to agree"

    def test_rate_limited_flagged(self):
        backend = FlakyBackend([http_error(429)] * 3)
        with pytest.raises(RateLimited):
            complete(CompletionRequest(bundle=bundle()), backend, max_attempts=3,
                     sleeper=lambda _: None)

    def test_backoff_is_exponential(self):
        delays = []
        backend = FlakyBackend([http_error(500)] * 2)
        complete(CompletionRequest(bundle=bundle()), backend, max_attempts=3,
                 backoff=0.5, sleeper=delays.append)
        assert delays == [0.5, 1.0]

    def test_fingerprint_matches_rendered_prompt(self):
        backend = stub({"q1": {"tend to agree": 1.0}})
        request = CompletionRequest(bundle=bundle(rendered="specific prompt"))
        response = complete(request, backend, sleeper=lambda _: None)
        assert response.request_fingerprint == prompt_fingerprint("specific prompt")

    def test_audit_entry_per_call_including_failures(self):
        audit = AuditLog()
        backend = stub({"q1": {"tend to agree": 1.0}})
        complete(CompletionRequest(bundle=bundle()), backend, audit=audit,
                 sleeper=lambda _: None)
        failing = FlakyBackend([http_error(500)] * 3)
        with pytest.raises(BackendUnavailable):
            complete(CompletionRequest(bundle=bundle()), failing, audit=audit,
                     max_attempts=3, sleeper=lambda _: None)
        assert len(audit) == 2
        assert audit.entries[0].event["status"] == "ok"
        assert audit.entries[1].event["status"] == "unavailable"
        assert audit.verify()


class TestParseResponse:
    def test_longest_match_wins(self):
        outcome = parse_response(raw("Tend to agree"), question(), max_words=4)
        assert outcome.category == "tend to agree"
        assert outcome.word_count == 3
        assert outcome.over_limit is False

    def test_over_limit_flagged(self):
        text = "I strongly believe society must act now on emissions"
        outcome = parse_response(raw(text), question(), max_words=4)
        assert outcome.over_limit is True
        assert outcome.word_count == 9

    def test_unparseable_value_not_error(self):
        outcome = parse_response(raw("banana"), question(), max_words=4)
        assert outcome.category is None
        assert outcome.unparseable

    def test_case_insensitive(self):
        outcome = parse_response(raw("STRONGLY AGREE"), question(), max_words=4)
        assert outcome.category == "strongly agree"

    def test_nested_labels_resolve_to_most_specific(self):
        outcome = parse_response(raw("well, tend to agree overall"), question(), max_words=10)
        assert outcome.category == "tend to agree"


class TestRunBatch:
    def test_order_preserved_under_concurrency(self):
        backend = stub({"q1": {"a": 0.5, "b": 0.5}})
        bundles = [bundle(rendered=f"prompt {i}", scale=("a", "b")) for i in range(100)]
        sequential = run_batch(bundles, backend, concurrency=1)
        concurrent = run_batch(bundles, stub({"q1": {"a": 0.5, "b": 0.5}}), concurrency=8)
        assert sequential == concurrent
        assert len(sequential) == 100

    def test_empty_batch(self):
        assert run_batch([], stub({"q1": {"a": 1.0}})) == []

    def test_histogram_converges_to_stub_distribution(self):
        mass = {"tend to agree": 0.6, "strongly agree": 0.4}
        backend = stub({"q1": mass}, seed=23)
        bundles = [bundle(scale=tuple(mass))] * 10_000
        outcomes = run_batch(bundles, backend, concurrency=4)
        counts = {"tend to agree": 0, "strongly agree": 0}
        for outcome in outcomes:
            counts[outcome.category] += 1
        observed = {k: v / 10_000 for k, v in counts.items()}
        assert oracle_l1(observed, mass) <= 0.05

    def test_identical_bundles_draw_independently(self):
        backend = stub({"q1": {"a": 0.5, "b": 0.5}})
        outcomes = run_batch([bundle(scale=("a", "b"))] * 50, backend)
        assert len({o.category for o in outcomes}) == 2

    def test_failed_item_becomes_annotated_unparseable(self):
        class FailOnSecond:
            backend_id = "partial"

            def complete_raw(self, request, nonce=None):
                if "1" in request.bundle.rendered:
                    raise http_error(500)
                return "a"

        bundles = [bundle(rendered="p0", scale=("a", "b")),
                   bundle(rendered="p1", scale=("a", "b")),
                   bundle(rendered="p2", scale=("a", "b"))]
        outcomes = run_batch(bundles, FailOnSecond(), max_attempts=2,
                             sleeper=lambda _: None)
        assert [o.category for o in outcomes] == ["a", None, "a"]
        assert outcomes[1].error is not None

    def test_audit_completeness(self):
        audit = AuditLog()
        backend = stub({"q1": {"a": 1.0}})
        bundles = [bundle(rendered=f"p{i}", scale=("a", "b")) for i in range(25)]
        run_batch(bundles, backend, concurrency=5, audit=audit)
        assert len(audit) == 25
        assert audit.verify()

    def test_stub_multiset_stable_across_concurrency(self):
        mass = {"a": 0.3, "b": 0.7}
        bundles = [bundle(scale=("a", "b"))] * 200
        one = run_batch(bundles, stub(mass_spec := {"q1": mass}, seed=9), concurrency=1)
        eight = run_batch(bundles, stub(mass_spec, seed=9), concurrency=8)
        assert one == eight  # nonces come from input order, not completion order


class TestHttpBackend:
    def test_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("SYNTHPOLL_ENDPOINT", raising=False)
        with pytest.raises(ValueError):
            HttpBackend()

    def test_posts_prompt_and_reads_text(self):
        captured = {}

        class FakeResponse:
            def __enter__(self):
                return self

            def __exit__(self, *args):
                return False

            def read(self):
                return b'{"text": "tend to agree"}'

        def opener(request, timeout):
            captured["url"] = request.full_url
            captured["body"] = request.data
            captured["headers"] = dict(request.headers)
            return FakeResponse()

        backend = HttpBackend(endpoint="http://localhost:9/complete",
                              credential="secret-token", opener=opener)
        text = backend.complete_raw(CompletionRequest(bundle=bundle()))
        assert text == "tend to agree"
        assert captured["url"] == "http://localhost:9/complete"
        assert b"prompt text" in captured["body"]
        assert captured["headers"]["Authorization"] == "Bearer secret-token"


class TestCategoryOutcome:
    def test_over_limit_consistency(self):
        outcome = CategoryOutcome(question_id="q", category="a", word_count=5,
                                  over_limit=True)
        assert outcome.over_limit == (outcome.word_count > 4)
