"""Single-element perturbation of ground-truth layouts and refinement-data curation.

A refinement training record pairs an input layout with its ground truth.
The input is either a coarse model output or a perturbed copy of the ground
truth, picked per image by comparing ``p ~ U(0, 1)`` with a threshold.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import BackgroundAssets, Layout, LayoutError
from .principles import EvaluationReport, PrincipleThresholds, evaluate_principles

logger = logging.getLogger(__name__)

OPERATORS = ("shift", "resize", "swap", "misalign")
MODEL_OUTPUT = "model_output"
PERTURBED = "perturbed"


@dataclass(frozen=True)
class PerturbConfig:
    seed: int = 0
    max_shift: float = 0.25
    scale_range: tuple[float, float] = (0.5, 1.5)
    op_weights: Mapping[str, float] = field(
        default_factory=lambda: {op: 1.0 for op in OPERATORS}
    )

    def __post_init__(self):
        if not 0 < self.max_shift <= 1:
            raise ValueError("max_shift must lie in (0, 1]")
        lo, hi = self.scale_range
        if lo <= 0 or hi < lo:
            raise ValueError("scale_range must satisfy 0 < min <= max")
        unknown = set(self.op_weights) - set(OPERATORS)
        if unknown:
            raise ValueError(f"unknown perturbation operators: {sorted(unknown)}")
        w = [self.op_weights.get(op, 0.0) for op in OPERATORS]
        if min(w) < 0 or sum(w) == 0:
            raise ValueError("op_weights must be non-negative and not all zero")

    def probabilities(self) -> np.ndarray:
        w = np.array([self.op_weights.get(op, 0.0) for op in OPERATORS], dtype=float)
        return w / w.sum()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "max_shift": self.max_shift,
            "scale_range": list(self.scale_range),
            "op_weights": {op: float(self.op_weights.get(op, 0.0)) for op in OPERATORS},
        }


def perturb_layout(gt: Layout, cfg: PerturbConfig = PerturbConfig(),
                   rng: np.random.Generator | None = None) -> Layout:
    """Corrupt exactly one uniformly chosen element of ``gt``.

    ``swap`` moves the chosen element to the origin of another element (the
    other element stays put), so at most one element ever differs.
    """
    if len(gt) == 0:
        raise LayoutError("cannot perturb empty layout")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    idx = int(rng.integers(len(gt)))
    op = OPERATORS[int(rng.choice(len(OPERATORS), p=cfg.probabilities()))]
    e = gt[idx]
    s = cfg.max_shift
    if op == "shift":
        dx, dy = rng.uniform(-s, s, size=2)
        new = e.moved(l=e.l + dx, t=e.t + dy)
    elif op == "resize":
        fw, fh = rng.uniform(*cfg.scale_range, size=2)
        new = e.moved(w=e.w * fw, h=e.h * fh)
    elif op == "swap":
        if len(gt) == 1:
            return gt
        other = int(rng.integers(len(gt) - 1))
        other += other >= idx
        new = e.moved(l=gt[other].l, t=gt[other].t)
    else:
        jitter = rng.uniform(-s / 5, s / 5)
        if rng.random() < 0.5:
            new = e.moved(l=e.l + jitter)
        else:
            new = e.moved(t=e.t + jitter)
    logger.debug("perturb %s element %d: %s -> %s", op, idx, e.box(), new.box())
    return gt.with_element(idx, new)


@dataclass(frozen=True)
class CurationRecord:
    image_id: str
    input_layout: Layout
    input_source: str
    gt_layout: Layout
    evaluation_gt: EvaluationReport

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "input_source": self.input_source,
            "input_layout": self.input_layout.to_dict(),
            "gt_layout": self.gt_layout.to_dict(),
            "evaluation_gt": self.evaluation_gt.to_dict(),
        }


def mix_inputs(ce_outputs: Mapping[str, Layout], gts: Mapping[str, Layout],
               epsilon: float = 0.5, cfg: PerturbConfig = PerturbConfig(),
               rng: np.random.Generator | None = None,
               assets: Mapping[str, BackgroundAssets] | None = None,
               thresholds: PrincipleThresholds = PrincipleThresholds()) -> list[CurationRecord]:
    """Choose the refiner input per image: model output if ``p > epsilon``, else a perturbed GT.

    Images are visited in sorted id order from a single RNG stream, so the
    result is a deterministic function of the seed. A tie ``p == epsilon``
    (including ``p == 0`` at ``epsilon == 0``) selects the perturbed GT.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    assets = assets or {}
    records = []
    for image_id in sorted(gts):
        gt = gts[image_id]
        p = rng.random()
        if p > epsilon:
            if image_id not in ce_outputs:
                logger.warning("no model output for %s; skipping", image_id)
                continue
            chosen, source = ce_outputs[image_id], MODEL_OUTPUT
        else:
            if len(gt) == 0:
                logger.warning("empty ground truth for %s; skipping", image_id)
                continue
            chosen, source = perturb_layout(gt, cfg, rng), PERTURBED
        report = evaluate_principles(chosen, assets.get(image_id), thresholds)
        records.append(CurationRecord(image_id, chosen, source, gt, report))
    return records


def curate_fr_dataset(records: list[CurationRecord], out_path: str | Path,
                      assets: Mapping[str, BackgroundAssets] | None = None,
                      thresholds: PrincipleThresholds = PrincipleThresholds(),
                      prune_gt: bool = True, run_info: Mapping | None = None) -> dict:
    """Write records as JSONL plus ``<out>.manifest.json``; return the manifest.

    With ``prune_gt`` a record is dropped when its ground truth fails any
    principle, since the supervision target must itself be clean.
    """
    out_path = Path(out_path)
    assets = assets or {}
    kept, dropped = [], []
    for rec in records:
        if prune_gt and not evaluate_principles(rec.gt_layout, assets.get(rec.image_id),
                                                thresholds).passed:
            dropped.append(rec.image_id)
            continue
        kept.append(rec)
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in kept]
    manifest = {
        "output": str(out_path),
        "total": len(records),
        "kept": len(kept),
        "dropped": len(dropped),
        "dropped_ids": dropped,
        "sources": {
            s: sum(r.input_source == s for r in kept) for s in (MODEL_OUTPUT, PERTURBED)
        },
        "prune_gt": prune_gt,
        "thresholds": thresholds.to_dict(),
        **dict(run_info or {}),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text("".join(line + "\n" for line in lines))
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write curated dataset to {exc.filename or out_path}: {exc}") from exc
    return manifest
