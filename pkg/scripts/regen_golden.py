"""Rewrite the golden files under tests/golden/.

Only run this after a deliberate change to perturbation or rendering; the
test suite byte-compares against whatever is committed.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from layoutforge.core import BackgroundAssets, make_layout
from layoutforge.perturb import PerturbConfig, perturb_layout
from layoutforge.refine import RefineConfig, refine
from layoutforge.render import render_comparison, render_layout, save_png

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"

PERTURB_GT = make_layout([
    ("underlay", 0.1, 0.1, 0.8, 0.3),
    ("text", 0.1, 0.15, 0.5, 0.1),
    ("logo", 0.1, 0.6, 0.2, 0.2),
])
RENDER_LAYOUT = make_layout([
    ("underlay", 0.125, 0.125, 0.75, 0.375),
    ("text", 0.1875, 0.1875, 0.5, 0.125),
], canvas=(64, 64))
COMPARISON_GT = make_layout([
    ("underlay", 0.125, 0.125, 0.75, 0.375),
    ("text", 0.125, 0.1875, 0.5, 0.125),
    ("logo", 0.125, 0.625, 0.25, 0.25),
], canvas=(64, 64))


def background(size=64):
    """Deterministic gradient with a dark disc; no RNG involved."""
    y, x = np.mgrid[0:size, 0:size]
    img = np.stack([x * 4, y * 4, np.full_like(x, 160)], axis=-1).astype(np.uint8)
    disc = (x - 44) ** 2 + (y - 44) ** 2 < 100
    img[disc] = (30, 30, 30)
    return BackgroundAssets(img, disc.astype(float))


def comparison_pair():
    """(before, after) for the comparison golden: seed-1 shift perturbation, then builtin refine."""
    before = perturb_layout(COMPARISON_GT, PerturbConfig(seed=1, op_weights={"shift": 1.0}))
    after, _ = refine(before, background(), RefineConfig())
    return before, after


def main():
    argparse.ArgumentParser(description=__doc__).parse_args()
    GOLDEN.mkdir(parents=True, exist_ok=True)
    out = perturb_layout(PERTURB_GT, PerturbConfig(seed=0))
    (GOLDEN / "perturb_s0.json").write_text(json.dumps(out.to_dict(), indent=2) + "\n")
    assets = background()
    save_png(render_layout(assets, RENDER_LAYOUT), GOLDEN / "render_64.png")
    before, after = comparison_pair()
    save_png(render_comparison(assets, before, after), GOLDEN / "comparison_64.png")
    print(f"wrote goldens to {GOLDEN}")


if __name__ == "__main__":
    main()
