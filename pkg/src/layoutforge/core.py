"""Layout data model, canonical JSON schema and rectangle geometry.

All geometry is stored normalized to the canvas: ``l`` and ``w`` are fractions
of the canvas width, ``t`` and ``h`` fractions of its height. Pixel
conversion only happens at rasterization boundaries (see :func:`footprint`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

EPS_CLAMP = 1e-6
PRECISION = 4
DEFAULT_CONTAIN_TOL = 0.005


class LayoutError(ValueError):
    """Raised when a layout or element violates its invariants."""


@dataclass(frozen=True)
class ElementCategory:
    name: str
    is_underlay: bool = False
    is_text: bool = False

    def __post_init__(self):
        if not self.name:
            raise LayoutError("category name must be non-empty")
        if self.is_underlay and self.is_text:
            raise LayoutError(f"category {self.name!r} cannot be both underlay and text")


class Taxonomy:
    """Closed set of element categories for one dataset."""

    def __init__(self, categories: Iterable[ElementCategory]):
        self._by_name: dict[str, ElementCategory] = {}
        for cat in categories:
            if cat.name in self._by_name:
                raise LayoutError(f"duplicate category {cat.name!r}")
            self._by_name[cat.name] = cat

    def __getitem__(self, name: str) -> ElementCategory:
        try:
            return self._by_name[name]
        except KeyError:
            raise LayoutError(f"unknown category {name!r}") from None

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self._by_name.values())

    def __len__(self) -> int:
        return len(self._by_name)

    @property
    def names(self) -> list[str]:
        return list(self._by_name)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {
            c.name: {"is_underlay": c.is_underlay, "is_text": c.is_text} for c in self
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping]) -> "Taxonomy":
        return cls(
            ElementCategory(
                name,
                is_underlay=bool(flags.get("is_underlay", False)),
                is_text=bool(flags.get("is_text", False)),
            )
            for name, flags in data.items()
        )


# PKU/CGL-style poster taxonomy plus the extra Crello-style roles.
DEFAULT_TAXONOMY = Taxonomy(
    [
        ElementCategory("text", is_text=True),
        ElementCategory("logo"),
        ElementCategory("underlay", is_underlay=True),
        ElementCategory("embellishment"),
        ElementCategory("image"),
    ]
)


@dataclass(frozen=True)
class Element:
    category: ElementCategory
    l: float
    t: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("l", "t", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise LayoutError(f"element {name}={v!r} is not finite")
            # numpy scalars would leak into JSON and reprs
            object.__setattr__(self, name, float(v))
        if self.w <= 0 or self.h <= 0:
            raise LayoutError(f"element size must be positive, got w={self.w}, h={self.h}")
        if self.l < -EPS_CLAMP or self.t < -EPS_CLAMP:
            raise LayoutError(f"element origin outside canvas: l={self.l}, t={self.t}")
        if self.l + self.w > 1 + EPS_CLAMP or self.t + self.h > 1 + EPS_CLAMP:
            raise LayoutError(
                f"element extends past canvas: l+w={self.l + self.w}, t+h={self.t + self.h}"
            )

    @property
    def r(self) -> float:
        return self.l + self.w

    @property
    def b(self) -> float:
        return self.t + self.h

    @property
    def cx(self) -> float:
        return self.l + self.w / 2

    @property
    def cy(self) -> float:
        return self.t + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def is_underlay(self) -> bool:
        return self.category.is_underlay

    @property
    def is_text(self) -> bool:
        return self.category.is_text

    def box(self) -> tuple[float, float, float, float]:
        return (self.l, self.t, self.w, self.h)

    def moved(self, l: float | None = None, t: float | None = None,
              w: float | None = None, h: float | None = None) -> "Element":
        """Copy with new geometry, clamped into the canvas."""
        nw = min(max(self.w if w is None else w, 10 ** -PRECISION), 1.0)
        nh = min(max(self.h if h is None else h, 10 ** -PRECISION), 1.0)
        nl = min(max(self.l if l is None else l, 0.0), 1.0 - nw)
        nt = min(max(self.t if t is None else t, 0.0), 1.0 - nh)
        return replace(self, l=nl, t=nt, w=nw, h=nh)


def quantize_element(e: Element, ndigits: int = PRECISION) -> Element:
    """Round geometry to ``ndigits`` decimals while keeping the element in-canvas."""
    step = 10.0 ** -ndigits
    w = max(round(e.w, ndigits), step)
    h = max(round(e.h, ndigits), step)
    l = max(round(e.l, ndigits), 0.0)
    t = max(round(e.t, ndigits), 0.0)
    if l + w > 1 + EPS_CLAMP:
        w = round(1.0 - l, ndigits)
    if t + h > 1 + EPS_CLAMP:
        h = round(1.0 - t, ndigits)
    return Element(e.category, l, t, w, h)


@dataclass(frozen=True)
class Layout:
    elements: tuple[Element, ...] = ()
    canvas_w: int = 1
    canvas_h: int = 1

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.canvas_w <= 0 or self.canvas_h <= 0:
            raise LayoutError(f"canvas must be positive, got {self.canvas_w}x{self.canvas_h}")

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i: int) -> Element:
        return self.elements[i]

    @property
    def k(self) -> int:
        return len(self.elements)

    def with_element(self, index: int, element: Element) -> "Layout":
        els = list(self.elements)
        els[index] = element
        return replace(self, elements=tuple(els))

    def quantized(self, ndigits: int = PRECISION) -> "Layout":
        return replace(self, elements=tuple(quantize_element(e, ndigits) for e in self.elements))

    def to_dict(self) -> dict:
        return {
            "canvas": {"w": self.canvas_w, "h": self.canvas_h},
            "elements": [
                {
                    "category": e.category.name,
                    "l": round(e.l, PRECISION),
                    "t": round(e.t, PRECISION),
                    "w": round(e.w, PRECISION),
                    "h": round(e.h, PRECISION),
                }
                for e in self.quantized().elements
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: Mapping, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "Layout":
        try:
            canvas = data["canvas"]
            elements = [
                Element(
                    taxonomy[el["category"]],
                    float(el["l"]), float(el["t"]), float(el["w"]), float(el["h"]),
                )
                for el in data["elements"]
            ]
            return cls(tuple(elements), int(canvas["w"]), int(canvas["h"]))
        except (KeyError, TypeError) as exc:
            raise LayoutError(f"malformed layout record: {exc!r}") from exc

    @classmethod
    def from_json(cls, text: str, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "Layout":
        return cls.from_dict(json.loads(text), taxonomy)


def load_layout(path: str | Path, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> Layout:
    return Layout.from_json(Path(path).read_text(), taxonomy)


def save_layout(layout: Layout, path: str | Path) -> None:
    Path(path).write_text(json.dumps(layout.to_dict(), indent=2) + "\n")


@dataclass(frozen=True, eq=False)
class BackgroundAssets:
    """Background image (H x W x 3 uint8) and optional saliency (H x W in [0, 1])."""

    image: np.ndarray
    saliency: np.ndarray | None = field(default=None)

    def __post_init__(self):
        image = np.asarray(self.image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise LayoutError(f"image must be H x W x 3, got shape {image.shape}")
        image = image.astype(np.uint8, copy=True)
        image.setflags(write=False)
        object.__setattr__(self, "image", image)
        if self.saliency is not None:
            sal = np.asarray(self.saliency, dtype=np.float64).copy()
            if sal.shape != image.shape[:2]:
                raise LayoutError(
                    f"saliency shape {sal.shape} != image shape {image.shape[:2]}"
                )
            if sal.size and (sal.min() < 0 or sal.max() > 1):
                raise LayoutError("saliency values must lie in [0, 1]")
            sal.setflags(write=False)
            object.__setattr__(self, "saliency", sal)

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    def check_layout(self, layout: Layout) -> None:
        if (layout.canvas_w, layout.canvas_h) != (self.width, self.height):
            raise LayoutError(
                f"asset dimensions mismatch: layout canvas {layout.canvas_w}x{layout.canvas_h}, "
                f"image {self.width}x{self.height}"
            )

    @classmethod
    def from_files(cls, image_path: str | Path,
                   saliency_path: str | Path | None = None) -> "BackgroundAssets":
        from PIL import Image

        with Image.open(image_path) as im:
            image = np.asarray(im.convert("RGB"))
        saliency = None
        if saliency_path is not None:
            with Image.open(saliency_path) as im:
                saliency = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        return cls(image, saliency)


# --- geometry ---------------------------------------------------------------

def intersection_area(a: Element, b: Element) -> float:
    dx = min(a.r, b.r) - max(a.l, b.l)
    dy = min(a.b, b.b) - max(a.t, b.t)
    if dx <= 0 or dy <= 0:
        return 0.0
    return dx * dy


def iou(a: Element, b: Element) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def contains(outer: Element, inner: Element, tol: float = DEFAULT_CONTAIN_TOL) -> bool:
    return (
        inner.l >= outer.l - tol
        and inner.t >= outer.t - tol
        and inner.r <= outer.r + tol
        and inner.b <= outer.b + tol
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def footprint(e: Element, width: int, height: int) -> tuple[slice, slice]:
    """Pixel footprint as (row slice, column slice).

    Half-open ``[round(l*W), round((l+w)*W))``; never empty, so every element
    covers at least one pixel.
    """
    x0 = min(_round_half_up(e.l * width), width - 1)
    x1 = max(min(_round_half_up(e.r * width), width), x0 + 1)
    y0 = min(_round_half_up(e.t * height), height - 1)
    y1 = max(min(_round_half_up(e.b * height), height), y0 + 1)
    return slice(y0, y1), slice(x0, x1)


def area(e: Element) -> float:
    return e.area


def split_roles(layout: Layout) -> tuple[list[int], list[int]]:
    """Indices of (underlay, non-underlay) elements."""
    under = [i for i, e in enumerate(layout) if e.is_underlay]
    other = [i for i, e in enumerate(layout) if not e.is_underlay]
    return under, other


def make_layout(boxes: Sequence[tuple], canvas: tuple[int, int] = (100, 100),
                taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> Layout:
    """Build a layout from ``(category, l, t, w, h)`` tuples; handy in tests and scripts."""
    return Layout(
        tuple(Element(taxonomy[c], l, t, w, h) for c, l, t, w, h in boxes),
        canvas[0], canvas[1],
    )
