"""Synthetic posters: principle-clean layouts on generated backgrounds.

Used by the benchmark scripts and the test suite as a stand-in for real
annotated corpora. Each sample has a smooth gradient background with one
salient object (an ellipse); every element is stacked in the free band away
from the object and left-aligned to one or two column lines.

Two archetypes mirror the easy/hard split by element count:

* simple posters (4-8 elements): one or two wide panels, each backing two
  text lines, plus free-standing title/logo rows;
* complex posters (9-12 elements): mostly small badges, an underlay backing
  a single text each, laid out in two columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_TAXONOMY, BackgroundAssets, Element, Layout
from .principles import evaluate_principles

CANVAS = (80, 120)
TEXT = DEFAULT_TAXONOMY["text"]
UNDERLAY = DEFAULT_TAXONOMY["underlay"]
LOGO = DEFAULT_TAXONOMY["logo"]
EMBELLISHMENT = DEFAULT_TAXONOMY["embellishment"]


@dataclass(frozen=True)
class Sample:
    sample_id: str
    layout: Layout
    assets: BackgroundAssets


def make_background(rng: np.random.Generator, canvas=CANVAS, object_top: bool = True):
    """Gradient image with an elliptical object; saliency is 1 on the object."""
    w, h = canvas
    yy, xx = np.mgrid[0:h, 0:w]
    c0 = rng.uniform(40, 215, size=3)
    c1 = rng.uniform(40, 215, size=3)
    frac = (yy / max(h - 1, 1))[..., None]
    image = (1 - frac) * c0 + frac * c1
    cy = rng.uniform(0.12, 0.2) if object_top else rng.uniform(0.8, 0.88)
    cx = rng.uniform(0.3, 0.7)
    ry, rx = rng.uniform(0.07, 0.1), rng.uniform(0.15, 0.25)
    inside = ((xx + 0.5) / w - cx) ** 2 / rx ** 2 + ((yy + 0.5) / h - cy) ** 2 / ry ** 2 <= 1.0
    image[inside] = 255 - c0
    saliency = inside.astype(np.float64)
    return BackgroundAssets(np.round(image).astype(np.uint8), saliency), (cy - ry, cy + ry)


def _rows_simple(rng, k):
    """Row specs for a simple poster with exactly ``k`` elements."""
    rows = []
    n_panels = 1 if k < 7 else 2
    remaining = k - 3 * n_panels
    rows.append(("title",))
    remaining -= 1
    for _ in range(n_panels):
        rows.append(("panel",))
    while remaining > 0:
        rows.append((rng.choice(["text", "logo", "embellishment"]),))
        remaining -= 1
    order = [rows[0]] + list(rng.permutation(np.array(rows[1:], dtype=object)))
    return [tuple(r) for r in order]


def _build_column(rng, rows, x0, width, y0, y1):
    """Stack row specs vertically between y0 and y1; None if they do not fit."""
    heights = {"title": 0.07, "text": 0.045, "logo": 0.06, "embellishment": 0.04,
               "panel": 0.15, "badge": 0.075}
    gap = 0.02
    need = sum(heights[r[0]] for r in rows) + gap * (len(rows) - 1)
    if need > y1 - y0:
        return None
    y = y0 + rng.uniform(0, (y1 - y0) - need)
    els = []
    for (kind,) in rows:
        hh = heights[kind]
        if kind == "panel":
            pw = width * rng.uniform(0.85, 1.0)
            els.append(Element(UNDERLAY, x0, y, pw, hh))
            inner_w = pw - 0.04
            els.append(Element(TEXT, x0 + 0.01, y + 0.015, inner_w * rng.uniform(0.7, 1.0), 0.05))
            els.append(Element(TEXT, x0 + 0.01, y + 0.085, inner_w * rng.uniform(0.5, 0.9), 0.05))
        elif kind == "badge":
            bw = width * rng.uniform(0.6, 1.0)
            els.append(Element(UNDERLAY, x0, y, bw, hh))
            els.append(Element(TEXT, x0 + 0.01, y + 0.0125, bw - 0.02 - rng.uniform(0, 0.05), 0.05))
        elif kind == "title":
            els.append(Element(TEXT, x0, y, width * rng.uniform(0.75, 1.0), hh))
        elif kind == "text":
            els.append(Element(TEXT, x0, y, width * rng.uniform(0.4, 0.9), hh))
        elif kind == "logo":
            els.append(Element(LOGO, x0, y, rng.uniform(0.12, 0.2), hh))
        else:
            els.append(Element(EMBELLISHMENT, x0, y, width * rng.uniform(0.3, 0.6), hh))
        y += hh + gap
    return els


def make_layout(rng: np.random.Generator, k: int, free_band: tuple[float, float],
                canvas=CANVAS) -> Layout | None:
    y0, y1 = free_band
    if k <= 8:
        x0 = rng.uniform(0.06, 0.14)
        width = rng.uniform(0.7, 0.92 - x0)
        els = _build_column(rng, _rows_simple(rng, k), x0, min(width, 1 - x0 - 0.02), y0, y1)
    else:
        # two columns of badges; odd counts get a free title on the left
        n_badges = k // 2
        left_n = (n_badges + 1) // 2
        x0 = rng.uniform(0.04, 0.08)
        x1 = rng.uniform(0.52, 0.56)
        colw = 0.4
        left_rows = [("title",)] if k % 2 else []
        left_rows += [("badge",)] * left_n
        right_rows = [("badge",)] * (n_badges - left_n)
        left = _build_column(rng, left_rows, x0, colw, y0, y1)
        right = _build_column(rng, right_rows, x1, colw, y0, y1)
        els = None if left is None or right is None else left + right
    if els is None:
        return None
    return Layout(tuple(els), canvas[0], canvas[1]).quantized()


def make_sample(rng: np.random.Generator, k: int, sample_id: str,
                canvas=CANVAS, max_tries: int = 50) -> Sample:
    """A principle-clean ``k``-element poster (rejection sampling)."""
    for _ in range(max_tries):
        top = bool(rng.random() < 0.5)
        assets, (oy0, oy1) = make_background(rng, canvas, object_top=top)
        band = (oy1 + 0.03, 0.98) if top else (0.02, oy0 - 0.03)
        layout = make_layout(rng, k, band, canvas)
        if layout is None or len(layout) != k:
            continue
        if evaluate_principles(layout, assets).passed:
            return Sample(sample_id, layout, assets)
    raise RuntimeError(f"could not synthesize a clean {k}-element layout")


def make_corpus(n: int, seed: int = 0, k_range: tuple[int, int] = (4, 12),
                canvas=CANVAS) -> list[Sample]:
    rng = np.random.default_rng(seed)
    lo, hi = k_range
    return [make_sample(rng, int(rng.integers(lo, hi + 1)), f"syn{i:04d}", canvas)
            for i in range(n)]
