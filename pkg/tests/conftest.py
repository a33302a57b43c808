import os

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from layoutforge.core import DEFAULT_TAXONOMY, BackgroundAssets, Element, Layout

settings.register_profile("fast", max_examples=20)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))

CATEGORIES = [DEFAULT_TAXONOMY[n] for n in ("text", "logo", "underlay", "embellishment")]


@st.composite
def elements(draw, categories=CATEGORIES):
    cat = draw(st.sampled_from(categories))
    w = draw(st.floats(0.01, 1.0))
    h = draw(st.floats(0.01, 1.0))
    l = draw(st.floats(0.0, 1.0 - w))
    t = draw(st.floats(0.0, 1.0 - h))
    return Element(cat, l, t, w, h)


@st.composite
def layouts(draw, min_size=0, max_size=10, categories=CATEGORIES):
    els = draw(st.lists(elements(categories), min_size=min_size, max_size=max_size))
    return Layout(tuple(els), 100, 100)


def random_layout(rng, k, canvas=(100, 100), categories=CATEGORIES, min_underlays=0):
    els = []
    for i in range(k):
        cat = DEFAULT_TAXONOMY["underlay"] if i < min_underlays else categories[rng.integers(len(categories))]
        w, h = rng.uniform(0.02, 0.6, size=2)
        els.append(Element(cat, rng.uniform(0, 1 - w), rng.uniform(0, 1 - h), w, h))
    return Layout(tuple(els), *canvas)


@pytest.fixture
def flat_assets():
    image = np.full((100, 100, 3), 128, dtype=np.uint8)
    return BackgroundAssets(image, np.zeros((100, 100)))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the acceptance summary, then assert."""

    def record(number, name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {name}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
