"""Gateway tests: mock/remote backends, prompts, translation, validation, sentiment."""

import random
import re

import pytest
from hypothesis import given, strategies as st

from branchlab.inference import (
    BackendResult,
    BackendUnavailable,
    HallucinationSuspected,
    IdentityTranslator,
    InferenceRequest,
    InferenceResponse,
    InferenceTimeout,
    MockBackend,
    MOCK_INTENT_KEYWORDS,
    MOCK_REPLY_TEMPLATES,
    OversizeResponse,
    PromptTemplate,
    RemoteBackend,
    SessionSnapshot,
    TranslatorUnavailable,
    Valid,
    ValidationPolicy,
    build_prompt,
    canonical_response_bytes,
    infer,
    load_lexicon,
    sentiment,
    translate,
    validate,
)
from branchlab.roles import AgentRole, ServiceNeed


class TestInfer:
    def test_mock_is_stateless(self):
        backend = MockBackend()
        request = InferenceRequest(prompt_text="what is my balance", request_id="r1")
        a = infer(request, backend)
        b = infer(request, backend)
        assert canonical_response_bytes(a) == canonical_response_bytes(b)

    def test_balance_keyword_maps_to_lookup(self):
        backend = MockBackend()
        response = infer(InferenceRequest(prompt_text="balance please", request_id="r1"), backend)
        assert response.intent is ServiceNeed.INFORMATION_LOOKUP

    def test_keyword_table_is_the_oracle(self):
        backend = MockBackend()
        for need, keywords in MOCK_INTENT_KEYWORDS.items():
            for kw in keywords:
                got = backend.classify_intent(f"Could you {kw} for me?")
                # transaction keywords win over lookup keywords by table order
                if need is ServiceNeed.INFORMATION_LOOKUP and any(
                    t in kw for t in MOCK_INTENT_KEYWORDS[ServiceNeed.TRANSACTION_REQUEST]
                ):
                    continue
                assert got is need, kw
        assert backend.classify_intent("hello there") is ServiceNeed.GENERAL_INQUIRY

    def test_backend_consulted_once_on_success(self):
        calls = []

        class Recording:
            name = "mock"

            def complete(self, request):
                calls.append(request.request_id)
                return BackendResult(text="ok", intent=ServiceNeed.GENERAL_INQUIRY)

        infer(InferenceRequest(prompt_text="hi", request_id="r1"), Recording())
        assert calls == ["r1"]

    def test_single_retry_then_fail(self):
        calls = []

        class Flaky:
            name = "remote"

            def complete(self, request):
                calls.append(1)
                raise BackendUnavailable("down")

        with pytest.raises(BackendUnavailable):
            infer(InferenceRequest(prompt_text="hi", request_id="r1"), Flaky())
        assert len(calls) == 2  # one retry, no storm

    def test_retry_succeeds_second_time(self):
        calls = []

        class FlakyOnce:
            name = "remote"

            def complete(self, request):
                calls.append(1)
                if len(calls) == 1:
                    raise BackendUnavailable("down")
                return BackendResult(text="ok", intent=None)

        assert infer(InferenceRequest(prompt_text="hi", request_id="r1"), FlakyOnce()).text == "ok"

    def test_oversize_response_rejected(self):
        class Chatty:
            name = "mock"

            def complete(self, request):
                return BackendResult(text="x" * 3000, intent=None)

        with pytest.raises(OversizeResponse):
            infer(InferenceRequest(prompt_text="hi", request_id="r1"), Chatty())

    def test_request_invariants(self):
        with pytest.raises(ValueError):
            InferenceRequest(prompt_text="", request_id="r1")
        with pytest.raises(ValueError):
            InferenceRequest(prompt_text="hi", request_id="")

    def test_mock_echoes_fact_amount(self):
        backend = MockBackend()
        response = infer(
            InferenceRequest(
                prompt_text="Known customer facts:\n- balance: $120.00\ncustomer: my balance?",
                request_id="r1",
            ),
            backend,
        )
        assert "$120.00" in response.text

    def test_hallucinating_mock_cites_unknown_amount(self):
        backend = MockBackend(hallucinate_amounts=True)
        response = infer(InferenceRequest(prompt_text="balance?", request_id="r1"), backend)
        assert "$999,999.99" in response.text


class TestRemoteBackend:
    def _backend_with(self, post):
        backend = RemoteBackend("http://backend.invalid")
        backend._session = type("S", (), {"post": staticmethod(post)})()
        return backend

    def test_unreachable_raises_unavailable(self):
        import requests

        def post(url, json=None, timeout=None):
            raise requests.ConnectionError("refused")

        with pytest.raises(BackendUnavailable):
            self._backend_with(post).complete(
                InferenceRequest(prompt_text="hi", request_id="r1")
            )

    def test_timeout_raises(self):
        import requests

        def post(url, json=None, timeout=None):
            raise requests.Timeout("slow")

        with pytest.raises(InferenceTimeout):
            self._backend_with(post).complete(
                InferenceRequest(prompt_text="hi", request_id="r1")
            )

    def test_parses_text_and_intent(self):
        class Resp:
            status_code = 200

            @staticmethod
            def json():
                return {"text": "hello", "intent": "GeneralInquiry"}

        def post(url, json=None, timeout=None):
            assert json["prompt"] == "hi"
            return Resp()

        result = self._backend_with(post).complete(
            InferenceRequest(prompt_text="hi", request_id="r1")
        )
        assert (result.text, result.intent) == ("hello", ServiceNeed.GENERAL_INQUIRY)

    def test_http_error_is_unavailable(self):
        class Resp:
            status_code = 503

            @staticmethod
            def json():
                return {}

        with pytest.raises(BackendUnavailable):
            self._backend_with(lambda *a, **k: Resp()).complete(
                InferenceRequest(prompt_text="hi", request_id="r1")
            )


class TestBuildPrompt:
    def test_empty_transcript_is_preamble_plus_utterance(self):
        prompt = build_prompt(SessionSnapshot(), "hello", AgentRole.CUSTOMER_SERVICE)
        lines = prompt.splitlines()
        assert lines[0].startswith("You are a friendly branch customer service agent")
        assert lines[-2] == "customer: hello"
        assert lines[-1] == "agent:"
        assert "Conversation so far:" not in prompt

    def test_window_keeps_last_k_turns(self):
        transcript = tuple(("customer", f"turn {i}") for i in range(10))
        prompt = build_prompt(
            SessionSnapshot(transcript=transcript), "now", AgentRole.CUSTOMER_SERVICE
        )
        included = [i for i in range(10) if f"turn {i}" in prompt]
        assert included == [4, 5, 6, 7, 8, 9]

    def test_window_size_configurable(self):
        transcript = tuple(("customer", f"turn {i}") for i in range(10))
        prompt = build_prompt(
            SessionSnapshot(transcript=transcript),
            "now",
            AgentRole.CUSTOMER_SERVICE,
            PromptTemplate(window_turns=2),
        )
        assert "turn 7" not in prompt and "turn 8" in prompt and "turn 9" in prompt

    def test_deterministic(self):
        snapshot = SessionSnapshot(
            customer_name="Ana", facts=(("balance", "$5.00"),), transcript=(("agent", "hi"),)
        )
        args = (snapshot, "q", AgentRole.FINANCIAL_ADVISOR)
        assert build_prompt(*args) == build_prompt(*args)

    def test_facts_rendered(self):
        prompt = build_prompt(
            SessionSnapshot(facts=(("balance", "$10.00"),)), "q", AgentRole.FINANCIAL_ADVISOR
        )
        assert "- balance: $10.00" in prompt


class TestTranslate:
    def test_same_locale_identity(self):
        assert translate("hola", "es", "es") == "hola"

    def test_identity_translator_any_pair(self):
        assert translate("hola", "es", "en", IdentityTranslator()) == "hola"

    def test_pipeline_call_order(self):
        calls = []

        class RecordingTranslator:
            def translate(self, text, from_locale, to_locale):
                calls.append(("translate", from_locale, to_locale))
                return text.upper()

        class RecordingBackend:
            name = "mock"

            def complete(self, request):
                calls.append(("infer",))
                return BackendResult(text="reply", intent=ServiceNeed.GENERAL_INQUIRY)

        translator = RecordingTranslator()
        text_en = translate("hola", "es", "en", translator)
        response = infer(InferenceRequest(prompt_text=text_en, request_id="r1"), RecordingBackend())
        translate(response.text, "en", "es", translator)
        assert calls == [("translate", "es", "en"), ("infer",), ("translate", "en", "es")]

    def test_unavailable_translator_raises_for_caller_fallback(self):
        class Broken:
            def translate(self, text, from_locale, to_locale):
                raise TranslatorUnavailable("no model")

        with pytest.raises(TranslatorUnavailable):
            translate("hola", "es", "en", Broken())


def response(text, intent=ServiceNeed.GENERAL_INQUIRY):
    return InferenceResponse(text=text, intent=intent, backend="mock", latency_ms=0.0)


CS_POLICY = ValidationPolicy(allowed_intents=frozenset({ServiceNeed.GENERAL_INQUIRY}))
FA_POLICY = ValidationPolicy(
    allowed_intents=frozenset(
        {ServiceNeed.GENERAL_INQUIRY, ServiceNeed.TRANSACTION_REQUEST, ServiceNeed.INFORMATION_LOOKUP}
    )
)


class TestValidate:
    def test_disallowed_intent(self):
        verdict = validate(response("hi", ServiceNeed.TRANSACTION_REQUEST), CS_POLICY, [])
        assert isinstance(verdict, HallucinationSuspected)
        assert "intent" in verdict.reason

    def test_unknown_intent_never_allowed(self):
        assert isinstance(validate(response("hi", None), FA_POLICY, []), HallucinationSuspected)

    def test_grounded_amount_valid(self):
        verdict = validate(
            response("your balance is $120.00", ServiceNeed.INFORMATION_LOOKUP),
            FA_POLICY,
            ["$120.00"],
        )
        assert isinstance(verdict, Valid)

    def test_ungrounded_amount_suspected(self):
        verdict = validate(
            response("you owe $999.99", ServiceNeed.INFORMATION_LOOKUP), FA_POLICY, ["$120.00"]
        )
        assert isinstance(verdict, HallucinationSuspected)
        assert "fact_echo" in verdict.reason

    def test_oversize_suspected(self):
        policy = ValidationPolicy(allowed_intents=frozenset({ServiceNeed.GENERAL_INQUIRY}), max_len=10)
        assert isinstance(validate(response("x" * 11), policy, []), HallucinationSuspected)

    @given(
        st.lists(st.sampled_from(["$1.00", "$22.50", "$333.33", "$4,000.00"]), max_size=3),
        st.lists(st.sampled_from(["$1.00", "$22.50", "$333.33", "$4,000.00", "other fact"]), max_size=5),
    )
    def test_monotone_in_facts(self, amounts, facts):
        """Adding facts never turns Valid into HallucinationSuspected."""
        text = "amounts: " + " and ".join(amounts)
        resp = response(text)
        before = validate(resp, CS_POLICY, facts)
        after = validate(resp, CS_POLICY, facts + ["$1.00", "$22.50", "$333.33", "$4,000.00"])
        if isinstance(before, Valid):
            assert isinstance(after, Valid)


class TestSentiment:
    def test_empty_neutral(self):
        assert sentiment("") == 0

    def test_positive_phrase(self):
        assert sentiment("great helpful thanks") == 1

    def test_negative_phrase(self):
        assert sentiment("slow terrible wait") == -1

    def test_balanced_neutral(self):
        assert sentiment("great terrible") == 0

    def test_lexicon_count_oracle(self):
        lexicon = load_lexicon()
        rng = random.Random(3)
        words = list(lexicon) + ["the", "a", "branch", "teller"]
        for _ in range(50):
            sample = [rng.choice(words) for _ in range(rng.randint(0, 12))]
            score = sum(lexicon.get(w, 0) for w in sample)
            expected = (score > 0) - (score < 0)
            assert sentiment(" ".join(sample)) == expected

    def test_lexicon_is_well_formed(self):
        lexicon = load_lexicon()
        assert len(lexicon) >= 40
        assert set(lexicon.values()) == {1, -1}
        assert all(re.fullmatch(r"[a-z']+", w) for w in lexicon)
