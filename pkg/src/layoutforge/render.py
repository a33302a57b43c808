"""Draw layouts onto their background to form the refiner's visual prompt."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import BackgroundAssets, Layout, footprint

PALETTE = {
    "text": (230, 25, 75),
    "logo": (60, 180, 75),
    "underlay": (0, 130, 200),
    "embellishment": (245, 130, 48),
    "image": (145, 30, 180),
}

# 3x5 bitmap digits, rows top to bottom.
_DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}


@dataclass(frozen=True)
class RenderStyle:
    alpha: float = 0.35
    border: int = 2
    labels: bool = True
    divider: int = 4
    divider_color: tuple[int, int, int] = (255, 255, 255)

    def to_dict(self) -> dict:
        return asdict(self)


def category_color(name: str) -> tuple[int, int, int]:
    if name in PALETTE:
        return PALETTE[name]
    digest = hashlib.sha256(name.encode()).digest()
    return (digest[0], digest[1], digest[2])


def _draw_label(canvas: np.ndarray, text: str, y: int, x: int, color, clip) -> None:
    rows, cols = clip
    for n, ch in enumerate(text):
        glyph = _DIGITS[ch]
        for gy, row in enumerate(glyph):
            for gx, bit in enumerate(row):
                py, px = y + gy, x + n * 4 + gx
                if bit == "1" and rows.start <= py < rows.stop and cols.start <= px < cols.stop:
                    canvas[py, px] = color


def render_layout(assets: BackgroundAssets, layout: Layout,
                  style: RenderStyle = RenderStyle()) -> np.ndarray:
    """Background copy with translucent fills, opaque borders and index labels.

    Labels carry the element's index in the layout (the same indices the
    evaluation text names) and use the border color, inside the box.
    """
    assets.check_layout(layout)
    out = assets.image.astype(np.float64)
    for idx, e in enumerate(layout):
        rows, cols = footprint(e, assets.width, assets.height)
        color = np.array(category_color(e.category.name), dtype=np.float64)
        region = out[rows, cols]
        out[rows, cols] = np.floor(style.alpha * color + (1 - style.alpha) * region + 0.5)
        b = style.border
        if b > 0:
            out[rows.start:rows.start + b, cols] = color
            out[max(rows.stop - b, rows.start):rows.stop, cols] = color
            out[rows, cols.start:cols.start + b] = color
            out[rows, max(cols.stop - b, cols.start):cols.stop] = color
        if style.labels:
            _draw_label(out, str(idx), rows.start + b + 1, cols.start + b + 1, color, (rows, cols))
    return out.astype(np.uint8)


def render_comparison(assets: BackgroundAssets, before: Layout, after: Layout,
                      style: RenderStyle = RenderStyle()) -> np.ndarray:
    left = render_layout(assets, before, style)
    right = render_layout(assets, after, style)
    divider = np.empty((left.shape[0], style.divider, 3), dtype=np.uint8)
    divider[:] = style.divider_color
    return np.concatenate([left, divider, right], axis=1)


def save_png(image: np.ndarray, path: str | Path) -> None:
    from PIL import Image

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")


def encode_png(image: np.ndarray) -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()
