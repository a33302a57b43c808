"""Estimator/refiner backends over an OpenAI-compatible chat-completions endpoint.

Layouts travel as a small HTML-like markup::

    <layout canvas_w="513" canvas_h="750">
      <el class="text" l="0.1988" t="0.1000" w="0.4000" h="0.0500"/>
    </layout>

Everything returned by this module is parsed from endpoint text; nothing is
synthesized locally when a response is unusable.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import string
import threading
import warnings
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import httpx
import numpy as np

from .core import DEFAULT_TAXONOMY, EPS_CLAMP, BackgroundAssets, Element, Layout, LayoutError, Taxonomy
from .principles import FINE_TEXT, PRINCIPLE_SENTENCES
from .refine import FIXED_POINT, MAX_MOVES, BackendOutputError, RefineConfig, RoundResult
from .render import encode_png, render_layout

logger = logging.getLogger(__name__)

CLAMP_BAND = 0.02

_LAYOUT_RE = re.compile(r"<layout\b([^>]*)>(.*?)</layout\s*>", re.DOTALL | re.IGNORECASE)
_EL_RE = re.compile(r"<el\b([^>]*?)/?>", re.DOTALL | re.IGNORECASE)
_ATTR_RE = re.compile(r"([A-Za-z_][\w-]*)\s*=\s*(?:\"([^\"]*)\"|'([^']*)')")


class MarkupError(LayoutError):
    pass


class ClampWarning(UserWarning):
    pass


class LLMError(RuntimeError):
    pass


class TransportError(LLMError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt{'s' * (attempts != 1)})")
        self.attempts = attempts


class RetriesExhausted(LLMError):
    def __init__(self, attempts: list[dict]):
        super().__init__(f"no usable response after {len(attempts)} attempts: "
                         f"{attempts[-1]['error'] if attempts else 'no attempts'}")
        self.attempts = attempts


class ConstraintViolation(LLMError):
    def __init__(self, missing: Mapping[str, int], extra: Mapping[str, int]):
        super().__init__(f"category constraint violated: missing {dict(missing)}, extra {dict(extra)}")
        self.missing = dict(missing)
        self.extra = dict(extra)


# --- markup -------------------------------------------------------------------

def layout_to_markup(layout: Layout) -> str:
    tags = "".join(
        f'<el class="{e.category.name}" l="{e.l:.4f}" t="{e.t:.4f}" w="{e.w:.4f}" h="{e.h:.4f}"/>'
        for e in layout.quantized()
    )
    return f'<layout canvas_w="{layout.canvas_w}" canvas_h="{layout.canvas_h}">{tags}</layout>'


def _attrs(text: str) -> dict[str, str]:
    return {m.group(1).lower(): m.group(2) if m.group(2) is not None else m.group(3)
            for m in _ATTR_RE.finditer(text)}


def _clamp_axis(start: float, size: float, tag: str, names: tuple[str, str]) -> tuple[float, float]:
    lo_name, size_name = names
    if size <= 0:
        raise MarkupError(f"non-positive {size_name} in {tag}")
    if size > 1 + EPS_CLAMP:
        if size > 1 + CLAMP_BAND:
            raise MarkupError(f"{size_name}={size} outside the canvas in {tag}")
        warnings.warn(f"clamped {size_name}={size} to 1 in {tag}", ClampWarning, stacklevel=3)
        size = 1.0
    if start < -EPS_CLAMP:
        if start < -CLAMP_BAND:
            raise MarkupError(f"{lo_name}={start} outside the canvas in {tag}")
        warnings.warn(f"clamped {lo_name}={start} to 0 in {tag}", ClampWarning, stacklevel=3)
        start = 0.0
    excess = start + size - 1
    if excess > EPS_CLAMP:
        if excess > CLAMP_BAND:
            raise MarkupError(f"{lo_name}+{size_name}={start + size:.4f} outside the canvas in {tag}")
        warnings.warn(f"shifted {lo_name}={start} to {1 - size:.4f} in {tag}", ClampWarning,
                      stacklevel=3)
        start = 1.0 - size
    return start, size


def markup_to_layout(text: str, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> Layout:
    """Parse the first ``<layout>`` block found in ``text``.

    Coordinates within ``CLAMP_BAND`` of the legal range are pulled back
    into the canvas with a :class:`ClampWarning`; anything further out is
    rejected.
    """
    m = _LAYOUT_RE.search(text)
    if m is None:
        raise MarkupError("no layout found")
    head = _attrs(m.group(1))
    try:
        cw, ch = int(head["canvas_w"]), int(head["canvas_h"])
    except (KeyError, ValueError) as exc:
        raise MarkupError(f"layout tag lacks a valid canvas size: <layout{m.group(1)}>") from exc
    elements = []
    for em in _EL_RE.finditer(m.group(2)):
        tag = em.group(0)
        attrs = _attrs(em.group(1))
        try:
            cat = taxonomy[attrs["class"]]
            l, t, w, h = (float(attrs[k]) for k in ("l", "t", "w", "h"))
        except KeyError as exc:
            raise MarkupError(f"missing or unknown attribute {exc} in {tag}") from exc
        except (ValueError, LayoutError) as exc:
            raise MarkupError(f"bad attribute in {tag}: {exc}") from exc
        if not all(np.isfinite([l, t, w, h])):
            raise MarkupError(f"non-finite coordinate in {tag}")
        l, w = _clamp_axis(l, w, tag, ("l", "w"))
        t, h = _clamp_axis(t, h, tag, ("t", "h"))
        elements.append(Element(cat, l, t, w, h))
    try:
        return Layout(tuple(elements), cw, ch)
    except LayoutError as exc:
        raise MarkupError(str(exc)) from exc


def split_response(text: str) -> tuple[str, str]:
    """``(evaluation text, markup)``: the evaluation is whatever precedes the layout block."""
    m = _LAYOUT_RE.search(text)
    if m is None:
        raise MarkupError("no layout found")
    return text[: m.start()].strip(), m.group(0)


def check_constraint(layout: Layout, constraint: Mapping[str, int] | None) -> None:
    if not constraint:
        return
    got = Counter(e.category.name for e in layout)
    want = Counter({k: v for k, v in constraint.items() if v})
    missing, extra = want - got, got - want
    if missing or extra:
        raise ConstraintViolation(missing, extra)


# --- prompts ------------------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    preamble: str
    instruction: str
    slots: tuple[str, ...] = ("category_list", "constraint", "layout_markup", "ecot_slot")

    def __post_init__(self):
        fields_used = {f for _, f, _, _ in string.Formatter().parse(self.instruction) if f}
        unknown = fields_used - set(self.slots)
        if unknown:
            raise ValueError(f"template uses unknown slots {sorted(unknown)}")

    @property
    def hash(self) -> str:
        return hashlib.sha256((self.preamble + "\0" + self.instruction).encode()).hexdigest()[:16]

    def render(self, **slots: str) -> str:
        missing = set(self.slots) - set(slots)
        if missing:
            raise KeyError(f"unresolved template slots: {sorted(missing)}")
        return self.instruction.format(**slots)

    @classmethod
    def from_text(cls, text: str) -> "PromptTemplate":
        preamble, sep, instruction = text.partition("\n---\n")
        if not sep:
            raise ValueError("template needs a '---' line between preamble and instruction")
        return cls(preamble.strip(), instruction.strip())

    @classmethod
    def load(cls, name: str) -> "PromptTemplate":
        if os.path.exists(name):
            with open(name) as fh:
                return cls.from_text(fh.read())
        return cls.from_text(resources.files("layoutforge").joinpath(f"templates/{name}.txt").read_text())


def describe_constraint(constraint: Mapping[str, int] | None) -> str:
    if not constraint:
        return "none; choose the elements yourself."
    return ", ".join(f"{n} x {c}" for c, n in sorted(constraint.items()) if n) + " (exactly)."


ECOT_INSTRUCTION = (
    f'write "{FINE_TEXT}" if no rule is broken, otherwise one sentence per broken rule such as "'
    + '", "'.join(PRINCIPLE_SENTENCES.values()) + '"'
)


# --- endpoint -----------------------------------------------------------------

@dataclass
class EndpointConfig:
    base_url: str = ""
    api_key: str = ""
    model: str = ""
    timeout: float = 60.0
    max_retries: int = 2
    transport_retries: int = 2
    concurrency: int = 4
    temperature: float = 0.0
    trace: bool = False

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        cfg = cls(
            base_url=os.environ.get("LAYOUTFORGE_LLM_BASE_URL", ""),
            api_key=os.environ.get("LAYOUTFORGE_LLM_API_KEY", ""),
            model=os.environ.get("LAYOUTFORGE_LLM_MODEL", ""),
        )
        for k, v in overrides.items():
            setattr(cfg, k, v)
        return cfg


_semaphores: dict[int, threading.BoundedSemaphore] = {}
_sem_lock = threading.Lock()


def _global_semaphore(n: int) -> threading.BoundedSemaphore:
    with _sem_lock:
        return _semaphores.setdefault(n, threading.BoundedSemaphore(n))


def image_data_url(image: np.ndarray) -> str:
    return "data:image/png;base64," + base64.b64encode(encode_png(image)).decode("ascii")


class ChatClient:
    """Minimal chat-completions client; pass ``transport`` to plug in a mock."""

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        if not config.base_url:
            raise LLMError("no endpoint configured (set LAYOUTFORGE_LLM_BASE_URL)")
        self.config = config
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._http = httpx.Client(base_url=config.base_url.rstrip("/"), headers=headers,
                                  timeout=config.timeout, transport=transport)
        self._sem = _global_semaphore(max(1, config.concurrency))

    def close(self) -> None:
        self._http.close()

    def _log(self, what: str, body) -> None:
        if not self.config.trace:
            return
        text = json.dumps(body)
        text = re.sub(r"data:image/png;base64,[A-Za-z0-9+/=]+", "data:image/png;base64,<omitted>", text)
        if self.config.api_key:
            text = text.replace(self.config.api_key, "***")
        logger.info("llm %s: %s", what, text)

    def complete(self, messages: list[dict]) -> str:
        body = {"model": self.config.model, "messages": messages,
                "temperature": self.config.temperature}
        self._log("request", body)
        last = None
        attempts = 0
        for attempts in range(1, self.config.transport_retries + 2):
            try:
                with self._sem:
                    resp = self._http.post("/chat/completions", json=body)
                resp.raise_for_status()
                data = resp.json()
                self._log("response", data)
                return data["choices"][0]["message"]["content"]
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                last = exc
                logger.warning("chat request attempt %d failed: %s", attempts, exc)
        raise TransportError(f"chat completion failed: {last}", attempts)


def _user_message(text: str, image: np.ndarray | None) -> dict:
    if image is None:
        return {"role": "user", "content": text}
    return {"role": "user", "content": [
        {"type": "text", "text": text},
        {"type": "image_url", "image_url": {"url": image_data_url(image)}},
    ]}


def _ask_with_retries(client: ChatClient, template: PromptTemplate, prompt: str,
                      image: np.ndarray | None, parse):
    messages = [{"role": "system", "content": template.preamble}, _user_message(prompt, image)]
    log: list[dict] = []
    for attempt in range(1, client.config.max_retries + 2):
        reply = client.complete(messages)
        try:
            return parse(reply)
        except LayoutError as exc:
            log.append({"attempt": attempt, "error": str(exc), "response": reply[:500]})
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": f"Your answer could not be used: {exc}. "
                                            "Reply again with a corrected layout block."},
            ]
    raise RetriesExhausted(log)


def estimate_via_llm(assets: BackgroundAssets, constraint: Mapping[str, int] | None,
                     client: ChatClient, template: PromptTemplate | None = None,
                     taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> Layout:
    """Coarse layout from the background image and an optional category multiset."""
    template = template or PromptTemplate.load("estimate")
    prompt = template.render(
        category_list=", ".join(taxonomy.names),
        constraint=describe_constraint(constraint),
        layout_markup=f"The canvas is {assets.width}x{assets.height} pixels.",
        ecot_slot="",
    )

    def parse(reply: str) -> Layout:
        layout = markup_to_layout(reply, taxonomy)
        if (layout.canvas_w, layout.canvas_h) != (assets.width, assets.height):
            raise MarkupError(f"canvas {layout.canvas_w}x{layout.canvas_h} does not match the image")
        check_constraint(layout, constraint)
        return layout

    return _ask_with_retries(client, template, prompt, assets.image, parse)


def refine_via_llm(assets: BackgroundAssets, layout: Layout, client: ChatClient,
                   template: PromptTemplate | None = None,
                   taxonomy: Taxonomy = DEFAULT_TAXONOMY,
                   visual_prompt: np.ndarray | None = None) -> tuple[str, Layout]:
    """One refinement round: ``(evaluation text, refined layout)``.

    The refined layout must keep the input's category multiset.
    """
    template = template or PromptTemplate.load("refine")
    visual = render_layout(assets, layout) if visual_prompt is None else visual_prompt
    constraint = Counter(e.category.name for e in layout)
    prompt = template.render(
        category_list=", ".join(taxonomy.names),
        constraint=describe_constraint(constraint),
        layout_markup=layout_to_markup(layout),
        ecot_slot=ECOT_INSTRUCTION,
    )

    def parse(reply: str) -> tuple[str, Layout]:
        evaluation, block = split_response(reply)
        refined = markup_to_layout(block, taxonomy)
        if (refined.canvas_w, refined.canvas_h) != (layout.canvas_w, layout.canvas_h):
            raise MarkupError("refined layout changed the canvas size")
        check_constraint(refined, constraint)
        return evaluation, refined

    return _ask_with_retries(client, template, prompt, visual, parse)


@dataclass
class LLMRefiner:
    """Refinement backend backed by :func:`refine_via_llm`; one session per sample."""

    client: ChatClient
    template: PromptTemplate | None = None
    taxonomy: Taxonomy = DEFAULT_TAXONOMY
    attempt_logs: list = field(default_factory=list)

    def refine_round(self, layout, assets, visual_prompt, cfg: RefineConfig, rng) -> RoundResult:
        if assets is None:
            raise BackendOutputError("the LLM refiner needs a background image")
        try:
            evaluation, refined = refine_via_llm(assets, layout, self.client, self.template,
                                                 self.taxonomy, visual_prompt)
        except RetriesExhausted as exc:
            self.attempt_logs.append(exc.attempts)
            raise BackendOutputError(str(exc)) from exc
        except ConstraintViolation as exc:
            raise BackendOutputError(str(exc)) from exc
        if refined == layout:
            return RoundResult(evaluation, refined, [], FIXED_POINT)
        # one proposal per round uses up the round's move budget
        return RoundResult(evaluation, refined, [refined], MAX_MOVES)
