"""Convert external annotations into canonical layout JSON.

Two input families are understood:

``box_list``
    PKU/CGL-style files with a canvas size and pixel boxes, e.g.
    ``{"width": 513, "height": 750, "boxes": [{"label": "text", "bbox": [x, y, w, h]}]}``.
``crello_like``
    Layered design metadata with one record per element and (by default)
    already-normalized geometry, e.g.
    ``{"canvas_width": 1080, "canvas_height": 1080, "elements": [{"type": "textElement",
    "left": 0.1, "top": 0.2, "width": 0.5, "height": 0.1, "font": ...}]}``.
    Attributes other than geometry and type are dropped.

Field names differ between dataset releases, so each format is driven by an
adapter dict (see ``ADAPTERS``) that callers may override.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import DEFAULT_TAXONOMY, Element, Layout, LayoutError, Taxonomy, load_layout, save_layout

logger = logging.getLogger(__name__)

ADAPTERS = {
    "box_list": {
        "canvas_w": "width",
        "canvas_h": "height",
        "items": "boxes",
        "category": "label",
        "bbox": "bbox",
        "bbox_format": "xywh",  # or "xyxy"
        "normalized": False,
    },
    "crello_like": {
        "canvas_w": "canvas_width",
        "canvas_h": "canvas_height",
        "items": "elements",
        "category": "type",
        "left": "left",
        "top": "top",
        "width": "width",
        "height": "height",
        "normalized": True,
    },
}


class TaxonomyMap:
    """Canonical categories plus the raw-label -> canonical-name mapping.

    File format::

        {"categories": {"text": {"is_text": true}, "underlay": {"is_underlay": true}},
         "map": {"textElement": "text", "svgElement": "underlay"}}

    Canonical names map to themselves implicitly.
    """

    def __init__(self, taxonomy: Taxonomy, mapping: Mapping[str, str]):
        self.taxonomy = taxonomy
        self.mapping = {n: n for n in taxonomy.names}
        self.mapping.update(mapping)
        bad = {v for v in self.mapping.values() if v not in taxonomy}
        if bad:
            raise LayoutError(f"taxonomy map targets unknown categories {sorted(bad)}")

    def resolve(self, raw: str) -> str | None:
        return self.mapping.get(raw)

    @classmethod
    def from_dict(cls, data: Mapping) -> "TaxonomyMap":
        return cls(Taxonomy.from_dict(data["categories"]), data.get("map", {}))

    @classmethod
    def load(cls, path: str | Path) -> "TaxonomyMap":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _clip_box(x0: float, y0: float, x1: float, y1: float):
    x0, y0 = max(x0, 0.0), max(y0, 0.0)
    x1, y1 = min(x1, 1.0), min(y1, 1.0)
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1 - x0, y1 - y0


def convert_record(data: Mapping, fmt: str, taxmap: TaxonomyMap,
                   adapter: Mapping | None = None) -> tuple[Layout, int]:
    """One raw annotation to a canonical layout; also returns the number of degenerate boxes dropped.

    Raises ``LayoutError`` with reason ``unmapped category`` when a raw label
    is not covered by the taxonomy map.
    """
    ad = {**ADAPTERS[fmt], **(adapter or {})}
    cw, ch = int(data[ad["canvas_w"]]), int(data[ad["canvas_h"]])
    if cw <= 0 or ch <= 0:
        raise LayoutError(f"invalid canvas {cw}x{ch}")
    elements = []
    dropped = 0
    for item in data[ad["items"]]:
        raw = str(item[ad["category"]])
        name = taxmap.resolve(raw)
        if name is None:
            raise LayoutError(f"unmapped category {raw!r}")
        if fmt == "box_list":
            a, b, c, d = (float(v) for v in item[ad["bbox"]])
            x0, y0 = a, b
            x1, y1 = (c, d) if ad["bbox_format"] == "xyxy" else (a + c, b + d)
        else:
            x0, y0 = float(item[ad["left"]]), float(item[ad["top"]])
            x1, y1 = x0 + float(item[ad["width"]]), y0 + float(item[ad["height"]])
        if not ad["normalized"]:
            x0, x1, y0, y1 = x0 / cw, x1 / cw, y0 / ch, y1 / ch
        box = _clip_box(x0, y0, x1, y1)
        if box is None:
            dropped += 1
            continue
        elements.append(Element(taxmap.taxonomy[name], *box))
    return Layout(tuple(elements), cw, ch).quantized(), dropped


def convert_dataset(in_dir: str | Path, out_dir: str | Path, fmt: str, taxmap: TaxonomyMap,
                    adapter: Mapping | None = None) -> dict:
    """Convert every ``*.json`` under ``in_dir``; write layouts and ``manifest.json`` to ``out_dir``.

    Bad files are recorded in the manifest and do not stop the run.
    """
    if fmt not in ADAPTERS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(ADAPTERS)}")
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(in_dir.rglob("*.json"))
    converted, skipped, errors = [], [], []
    histogram: Counter = Counter()
    degenerate = 0
    for path in files:
        sample_id = path.relative_to(in_dir).with_suffix("").as_posix().replace("/", "__")
        try:
            data = json.loads(path.read_text())
            layout, dropped = convert_record(data, fmt, taxmap, adapter)
        except LayoutError as exc:
            reason = str(exc)
            if reason.startswith("unmapped category"):
                skipped.append({"id": sample_id, "reason": reason})
            else:
                errors.append({"file": str(path), "error": reason})
            continue
        except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
            errors.append({"file": str(path), "error": f"{type(exc).__name__}: {exc}"})
            continue
        degenerate += dropped
        histogram.update(e.category.name for e in layout)
        save_layout(layout, out_dir / f"{sample_id}.json")
        converted.append(sample_id)
    manifest = {
        "format": fmt,
        "count": len(converted),
        "ids": converted,
        "skipped": skipped,
        "errors": errors,
        "degenerate_boxes_dropped": degenerate,
        "category_histogram": dict(sorted(histogram.items())),
        "taxonomy": taxmap.taxonomy.to_dict(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def split_by_difficulty(corpus: Iterable, threshold: int = 8, size=len) -> tuple[list, list]:
    """Partition on element count: ``k <= threshold`` is easy, larger is hard.

    ``size`` maps an item to its element count (``len`` for plain layouts).
    """
    easy, hard = [], []
    for item in corpus:
        (easy if size(item) <= threshold else hard).append(item)
    return easy, hard


def load_corpus(path: str | Path, taxonomy: Taxonomy | None = None) -> list[tuple[str, Layout]]:
    """``(id, layout)`` pairs from one canonical JSON file or a directory of them."""
    taxonomy = taxonomy or DEFAULT_TAXONOMY
    path = Path(path)
    files: Sequence[Path] = [path] if path.is_file() else sorted(
        p for p in path.glob("*.json") if p.name != "manifest.json"
    )
    return [(p.stem, load_layout(p, taxonomy)) for p in files]
