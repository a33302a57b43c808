"""Rule-based layout metrics and the composite violation score.

Graphic metrics (alignment, overlay, underlay effectiveness) depend only on
the layout; content metrics (readability, occlusion) also need the
background. ``None`` marks an undefined metric, e.g. underlay effectiveness
on a layout without underlays.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import ndimage

from .core import (
    DEFAULT_CONTAIN_TOL,
    BackgroundAssets,
    Element,
    Layout,
    LayoutError,
    contains,
    footprint,
    intersection_area,
    iou,
    split_roles,
)

SOBEL_NORM = 4.0
LUMA = np.array([0.299, 0.587, 0.114])

METRIC_NAMES = ("ali", "ove", "und_l", "und_s", "read", "occ")


@dataclass(frozen=True)
class CompositeWeights:
    ove: float = 1.0
    und: float = 1.0
    occ: float = 0.5
    ali: float = 0.5
    read: float = 0.25
    ali_cap: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"weight {f.name} must be non-negative")
        if self.ali_cap <= 0:
            raise ValueError("ali_cap must be positive")


@dataclass(frozen=True)
class MetricVector:
    ali: float
    ove: float
    und_l: float | None
    und_s: float | None
    read: float | None
    occ: float | None
    composite: float

    def to_dict(self) -> dict:
        return asdict(self)


# --- per-element helpers ----------------------------------------------------

def _axes(e: Element) -> tuple[float, ...]:
    return (e.l, e.cx, e.r, e.t, e.cy, e.b)


def nearest_axis_distances(layout: Layout) -> list[float]:
    """For each element, the smallest same-axis gap to any other element."""
    k = len(layout)
    if k <= 1:
        return [0.0] * k
    axes = np.array([_axes(e) for e in layout])  # (k, 6)
    gaps = np.abs(axes[:, None, :] - axes[None, :, :]).min(axis=2)
    np.fill_diagonal(gaps, np.inf)
    return gaps.min(axis=1).tolist()


def nearest_axis_match(layout: Layout, i: int) -> tuple[int, int, float]:
    """``(j, axis, gap)`` of the closest same-axis line to element ``i``.

    Ties resolve to the lowest ``j`` then the lowest axis index
    (left, center-x, right, top, center-y, bottom).
    """
    ai = _axes(layout[i])
    best = (-1, -1, math.inf)
    for j, other in enumerate(layout):
        if j == i:
            continue
        for a, (x, y) in enumerate(zip(ai, _axes(other))):
            gap = abs(x - y)
            if gap < best[2]:
                best = (j, a, gap)
    return best


# --- graphic metrics --------------------------------------------------------

def alignment(layout: Layout) -> float:
    k = len(layout)
    if k <= 1:
        return 0.0
    return float(sum(nearest_axis_distances(layout)) / k)


def overlay(layout: Layout) -> float:
    others = [e for e in layout if not e.is_underlay]
    if len(others) < 2:
        return 0.0
    vals = [iou(a, b) for a, b in combinations(others, 2)]
    return float(sum(vals) / len(vals))


def underlay_scores(layout: Layout, tol: float = DEFAULT_CONTAIN_TOL) -> list[tuple[float, int]]:
    """Per-underlay ``(loose, strict)`` scores in layout order."""
    under, other = split_roles(layout)
    scores = []
    for u in under:
        ue = layout[u]
        loose = 0.0
        strict = 0
        for j in other:
            e = layout[j]
            loose = max(loose, intersection_area(ue, e) / e.area)
            if contains(ue, e, tol):
                strict = 1
        # tolerance-contained elements can poke out slightly; strict implies loose 1
        if strict:
            loose = 1.0
        scores.append((min(loose, 1.0), strict))
    return scores


def underlay_effectiveness(layout: Layout,
                           tol: float = DEFAULT_CONTAIN_TOL) -> tuple[float | None, float | None]:
    scores = underlay_scores(layout, tol)
    if not scores:
        return None, None
    n = len(scores)
    return sum(s[0] for s in scores) / n, sum(s[1] for s in scores) / n


# --- content metrics --------------------------------------------------------

def grayscale(image: np.ndarray) -> np.ndarray:
    """Luminance in [0, 1] using BT.601 weights."""
    return (np.asarray(image, dtype=np.float64) @ LUMA) / 255.0


def gradient_magnitude(image: np.ndarray) -> np.ndarray:
    """Clamped, normalized 3x3 Sobel magnitude in [0, 1] (edge-replicated border)."""
    gray = grayscale(image)
    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    return np.minimum(1.0, np.hypot(gx, gy) / SOBEL_NORM)


def readability(layout: Layout, assets: BackgroundAssets,
                gradient: np.ndarray | None = None) -> float | None:
    assets.check_layout(layout)
    texts = [e for e in layout if e.is_text]
    if not texts:
        return None
    g = gradient_magnitude(assets.image) if gradient is None else gradient
    vals = [float(g[footprint(e, assets.width, assets.height)].mean()) for e in texts]
    return sum(vals) / len(vals)


def union_mask(layout: Layout, width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for e in layout:
        mask[footprint(e, width, height)] = True
    return mask


def occlusion(layout: Layout, assets: BackgroundAssets) -> float | None:
    if assets.saliency is None:
        raise LayoutError("saliency required")
    assets.check_layout(layout)
    if len(layout) == 0:
        return None
    mask = union_mask(layout, assets.width, assets.height)
    return float(assets.saliency[mask].mean())


def element_saliency(e: Element, assets: BackgroundAssets) -> float:
    return float(assets.saliency[footprint(e, assets.width, assets.height)].mean())


# --- composite ----------------------------------------------------------------

def composite_score(m: MetricVector | dict, weights: CompositeWeights = CompositeWeights()) -> float:
    get = m.get if isinstance(m, dict) else (lambda name: getattr(m, name))
    und_s = get("und_s")
    read = get("read")
    occ = get("occ")
    return (
        weights.ove * get("ove")
        + weights.und * (1.0 - (1.0 if und_s is None else und_s))
        + weights.occ * (0.0 if occ is None else occ)
        + weights.ali * min(1.0, get("ali") / weights.ali_cap)
        + weights.read * (0.0 if read is None else read)
    )


def evaluate_layout(layout: Layout, assets: BackgroundAssets | None = None,
                    weights: CompositeWeights = CompositeWeights(),
                    tol: float = DEFAULT_CONTAIN_TOL,
                    gradient: np.ndarray | None = None) -> MetricVector:
    """All six metrics plus the composite.

    Content metrics are undefined when the corresponding asset is missing.
    ``gradient`` lets callers reuse a precomputed Sobel map across candidates.
    """
    und_l, und_s = underlay_effectiveness(layout, tol)
    read = occ = None
    if assets is not None:
        read = readability(layout, assets, gradient)
        if assets.saliency is not None:
            occ = occlusion(layout, assets)
    values = dict(ali=alignment(layout), ove=overlay(layout), und_l=und_l, und_s=und_s,
                  read=read, occ=occ)
    return MetricVector(**values, composite=composite_score(values, weights))


def corpus_means(vectors: Sequence[MetricVector]) -> tuple[dict, dict]:
    """Means over defined values, and the number of undefined samples skipped per metric."""
    means, skipped = {}, {}
    for name in METRIC_NAMES + ("composite",):
        vals = [getattr(v, name) for v in vectors if getattr(v, name) is not None]
        means[name] = float(np.mean(vals)) if vals else None
        skipped[name] = len(vectors) - len(vals)
    return means, skipped
