import json
import logging
import warnings

import httpx
import numpy as np
import pytest

from layoutforge.core import DEFAULT_TAXONOMY, BackgroundAssets, Layout, make_layout
from layoutforge.llm_bridge import (
    ChatClient,
    ClampWarning,
    ConstraintViolation,
    EndpointConfig,
    LLMError,
    LLMRefiner,
    MarkupError,
    PromptTemplate,
    RetriesExhausted,
    TransportError,
    estimate_via_llm,
    layout_to_markup,
    markup_to_layout,
    refine_via_llm,
    split_response,
)
from layoutforge.principles import PRINCIPLE_SENTENCES
from layoutforge.refine import RefineConfig, refine_via_backend

from conftest import random_layout

ASSETS = BackgroundAssets(np.zeros((100, 100, 3), np.uint8), np.zeros((100, 100)))
GOOD = make_layout([("underlay", 0.1, 0.1, 0.8, 0.3), ("text", 0.1, 0.15, 0.5, 0.1)])
OVERLAP = make_layout([("underlay", 0.1, 0.1, 0.8, 0.3), ("text", 0.1, 0.15, 0.5, 0.1),
                       ("text", 0.1, 0.15, 0.5, 0.1)])


class Endpoint:
    """Scripted chat-completions server; records every request body."""

    def __init__(self, *replies):
        self.replies = list(replies)
        self.requests = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(json.loads(request.content))
        reply = self.replies[min(len(self.requests), len(self.replies)) - 1]
        if isinstance(reply, Exception):
            raise reply
        if isinstance(reply, int):
            return httpx.Response(reply, json={"error": "boom"})
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": reply}}]})


def client(endpoint, **kw):
    cfg = EndpointConfig(base_url="http://mock/v1", api_key="sk-secret", model="m", **kw)
    return ChatClient(cfg, transport=httpx.MockTransport(endpoint))


class TestMarkup:
    def test_empty(self):
        assert layout_to_markup(Layout((), 100, 100)) == '<layout canvas_w="100" canvas_h="100"></layout>'

    def test_single(self):
        lay = make_layout([("text", 0.1, 0.2, 0.3, 0.05)], canvas=(513, 750))
        assert layout_to_markup(lay) == ('<layout canvas_w="513" canvas_h="750">'
                                         '<el class="text" l="0.1000" t="0.2000" w="0.3000" h="0.0500"/>'
                                         '</layout>')

    def test_round_trip_seeds(self):
        for seed in range(1000):
            lay = random_layout(np.random.default_rng(seed), 8).quantized()
            assert markup_to_layout(layout_to_markup(lay)) == lay

    def test_embedded_in_prose(self):
        text = f"Sure! Here it is:\n{layout_to_markup(GOOD)}\nHope this helps."
        assert markup_to_layout(text) == GOOD

    def test_attribute_order_and_whitespace(self):
        text = """<layout canvas_h='100'  canvas_w="100">
            <el h="0.1" w="0.5" t="0.15" l="0.1" class="text" />
        </layout>"""
        assert markup_to_layout(text) == make_layout([("text", 0.1, 0.15, 0.5, 0.1)])

    def test_no_layout(self):
        with pytest.raises(MarkupError, match="no layout found"):
            markup_to_layout("I cannot help with that.")

    def test_beyond_clamp_band_rejected(self):
        tag = '<el class="text" l="1.01" t="0.1" w="0.05" h="0.1"/>'
        with pytest.raises(MarkupError) as info:
            markup_to_layout(f'<layout canvas_w="10" canvas_h="10">{tag}</layout>')
        assert tag in str(info.value)

    def test_clamp_band_warns(self):
        text = ('<layout canvas_w="10" canvas_h="10">'
                '<el class="text" l="0.96" t="-0.01" w="0.05" h="0.1"/></layout>')
        with pytest.warns(ClampWarning):
            lay = markup_to_layout(text)
        assert lay[0].l == pytest.approx(0.95) and lay[0].t == 0.0

    def test_unknown_class(self):
        with pytest.raises(MarkupError, match="unknown"):
            markup_to_layout('<layout canvas_w="10" canvas_h="10"><el class="banner" l="0" t="0" w="1" h="1"/></layout>')

    def test_split_response(self):
        ecot, block = split_response(f"{PRINCIPLE_SENTENCES[1]} [(1, 2)]\n{layout_to_markup(GOOD)}")
        assert ecot == f"{PRINCIPLE_SENTENCES[1]} [(1, 2)]"
        assert markup_to_layout(block) == GOOD


class TestTemplates:
    @pytest.mark.parametrize("name", ["estimate", "refine"])
    def test_packaged(self, name):
        t = PromptTemplate.load(name)
        text = t.render(category_list="text", constraint="none", layout_markup="<layout/>", ecot_slot="x")
        assert "{" not in text
        assert len(t.hash) == 16 and t.hash == PromptTemplate.load(name).hash

    def test_missing_slot(self):
        with pytest.raises(KeyError):
            PromptTemplate.load("refine").render(category_list="text")

    def test_unknown_slot(self):
        with pytest.raises(ValueError):
            PromptTemplate.from_text("pre\n---\nhello {nope}")

    def test_from_file(self, tmp_path):
        (tmp_path / "t.txt").write_text("system\n---\nlayout: {layout_markup}")
        t = PromptTemplate.load(str(tmp_path / "t.txt"))
        assert t.preamble == "system"


class TestEstimate:
    def test_echo_valid(self):
        ep = Endpoint(layout_to_markup(GOOD))
        assert estimate_via_llm(ASSETS, None, client(ep)) == GOOD
        body = ep.requests[0]
        assert body["model"] == "m"
        parts = body["messages"][1]["content"]
        assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")
        assert body["messages"][0]["role"] == "system"

    def test_retry_then_success(self):
        ep = Endpoint("garbage", layout_to_markup(GOOD))
        assert estimate_via_llm(ASSETS, None, client(ep)) == GOOD
        assert len(ep.requests) == 2
        assert "no layout found" in ep.requests[1]["messages"][-1]["content"]

    def test_retries_exhausted(self):
        ep = Endpoint("garbage")
        with pytest.raises(RetriesExhausted) as info:
            estimate_via_llm(ASSETS, None, client(ep, max_retries=2))
        assert len(ep.requests) == 3
        assert [a["attempt"] for a in info.value.attempts] == [1, 2, 3]
        assert all(a["error"] == "no layout found" and a["response"] == "garbage" for a in info.value.attempts)

    def test_constraint_violation(self):
        ep = Endpoint(layout_to_markup(GOOD))
        with pytest.raises(ConstraintViolation) as info:
            estimate_via_llm(ASSETS, {"text": 2, "logo": 1}, client(ep))
        assert info.value.missing == {"text": 1, "logo": 1}
        assert info.value.extra == {"underlay": 1}

    def test_constraint_satisfied(self):
        ep = Endpoint(layout_to_markup(GOOD))
        assert estimate_via_llm(ASSETS, {"text": 1, "underlay": 1}, client(ep)) == GOOD

    def test_canvas_mismatch_retried(self):
        wrong = make_layout([("text", 0.1, 0.1, 0.2, 0.2)], canvas=(50, 50))
        ep = Endpoint(layout_to_markup(wrong))
        with pytest.raises(RetriesExhausted):
            estimate_via_llm(ASSETS, None, client(ep))


class TestTransport:
    def test_connect_error(self):
        ep = Endpoint(httpx.ConnectError("refused"))
        with pytest.raises(TransportError) as info:
            estimate_via_llm(ASSETS, None, client(ep, transport_retries=2))
        assert info.value.attempts == 3 and "3 attempts" in str(info.value)

    def test_http_500_then_ok(self):
        ep = Endpoint(500, layout_to_markup(GOOD))
        assert estimate_via_llm(ASSETS, None, client(ep)) == GOOD

    def test_malformed_body(self):
        def handler(request):
            return httpx.Response(200, json={"unexpected": True})
        c = ChatClient(EndpointConfig(base_url="http://mock", transport_retries=0),
                       transport=httpx.MockTransport(handler))
        with pytest.raises(TransportError):
            c.complete([{"role": "user", "content": "hi"}])

    def test_no_endpoint(self):
        with pytest.raises(LLMError):
            ChatClient(EndpointConfig())

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("LAYOUTFORGE_LLM_BASE_URL", "http://x/v1")
        monkeypatch.setenv("LAYOUTFORGE_LLM_MODEL", "vlm")
        cfg = EndpointConfig.from_env(max_retries=5)
        assert (cfg.base_url, cfg.model, cfg.max_retries) == ("http://x/v1", "vlm", 5)

    def test_trace_redacts(self, caplog):
        ep = Endpoint(layout_to_markup(GOOD))
        with caplog.at_level(logging.INFO, logger="layoutforge.llm_bridge"):
            estimate_via_llm(ASSETS, None, client(ep, trace=True))
        assert "sk-secret" not in caplog.text
        assert "base64,<omitted>" in caplog.text


class TestRefineViaLLM:
    def test_fine_unchanged(self):
        ep = Endpoint(f"current layout is fine\n{layout_to_markup(GOOD)}")
        ecot, lay = refine_via_llm(ASSETS, GOOD, client(ep))
        assert ecot == "current layout is fine" and lay == GOOD
        prompt = ep.requests[0]["messages"][1]["content"][0]["text"]
        assert layout_to_markup(GOOD) in prompt

    def test_repair_parsed(self):
        fixed = make_layout([("underlay", 0.1, 0.1, 0.8, 0.3), ("text", 0.1, 0.15, 0.5, 0.1),
                             ("text", 0.1, 0.25, 0.5, 0.1)])
        reply = f"{PRINCIPLE_SENTENCES[1]} [(1, 2)]\n{layout_to_markup(fixed)}"
        ecot, lay = refine_via_llm(ASSETS, OVERLAP, client(Endpoint(reply)))
        assert ecot.startswith(PRINCIPLE_SENTENCES[1]) and lay == fixed

    def test_backend_accepts_valid(self):
        fixed = make_layout([("underlay", 0.1, 0.1, 0.8, 0.3), ("text", 0.1, 0.15, 0.5, 0.1),
                             ("text", 0.1, 0.25, 0.5, 0.1)])
        ep = Endpoint(f"{PRINCIPLE_SENTENCES[1]} [(1, 2)]\n{layout_to_markup(fixed)}")
        out, trace = refine_via_backend(OVERLAP, ASSETS, LLMRefiner(client(ep)), RefineConfig())
        assert out == fixed and trace.accepted_moves == 1 and not trace.rejections

    def test_backend_rejects_missing_block(self):
        ep = Endpoint("there is element overlap in the current poster")
        backend = LLMRefiner(client(ep, max_retries=2))
        out, trace = refine_via_backend(OVERLAP, ASSETS, backend, RefineConfig(iterations=2))
        assert out == OVERLAP
        assert len(trace.rejections) == 2
        assert len(backend.attempt_logs) == 2
        assert all(len(log) == 3 for log in backend.attempt_logs)
        assert len(ep.requests) == 6

    def test_backend_rejects_changed_multiset(self):
        ep = Endpoint(f"fine\n{layout_to_markup(GOOD)}")
        out, trace = refine_via_backend(OVERLAP, ASSETS, LLMRefiner(client(ep)), RefineConfig())
        assert out == OVERLAP and "constraint" in trace.rejections[0]["reason"]

    def test_image_is_visual_prompt(self):
        ep = Endpoint(f"current layout is fine\n{layout_to_markup(OVERLAP)}")
        visual = np.full((100, 100, 3), 7, np.uint8)
        refine_via_llm(ASSETS, OVERLAP, client(ep), visual_prompt=visual)
        url = ep.requests[0]["messages"][1]["content"][1]["image_url"]["url"]
        from layoutforge.llm_bridge import image_data_url
        assert url == image_data_url(visual)

    def test_no_warnings_on_clean_reply(self):
        ep = Endpoint(f"current layout is fine\n{layout_to_markup(GOOD)}")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            refine_via_llm(ASSETS, GOOD, client(ep), taxonomy=DEFAULT_TAXONOMY)
