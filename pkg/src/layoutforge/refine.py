"""Evaluate-then-repair refinement.

The driver runs ``iterations`` outer rounds. Each round renders the current
layout onto the background, asks a backend for ``(evaluation, layout)`` and
keeps the result only if it validates. The built-in backend is a
deterministic local search: every move targets the first failed principle and
is accepted only if it strictly lowers the composite score.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from .core import BackgroundAssets, Element, Layout, LayoutError, contains, iou
from .metrics import (
    CompositeWeights,
    MetricVector,
    element_saliency,
    evaluate_layout,
    gradient_magnitude,
    nearest_axis_match,
)
from .principles import (
    EvaluationReport,
    PrincipleThresholds,
    PrincipleVerdict,
    evaluate_principles,
)
from .render import render_layout

logger = logging.getLogger(__name__)

FIXED_POINT = "fixed_point"
MAX_MOVES = "max_moves"
ALL_PASS = "all_principles_pass"


@dataclass(frozen=True)
class RefineConfig:
    max_moves: int = 50
    iterations: int = 1
    thresholds: PrincipleThresholds = PrincipleThresholds()
    weights: CompositeWeights = CompositeWeights()
    seed: int = 17
    grid: int = 9
    # external backends only: reject proposals that raise the composite
    require_improvement: bool = True

    def __post_init__(self):
        if self.max_moves < 1:
            raise ValueError("max_moves must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.grid < 1:
            raise ValueError("grid must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_moves": self.max_moves,
            "iterations": self.iterations,
            "thresholds": self.thresholds.to_dict(),
            "weights": vars(self.weights).copy(),
            "seed": self.seed,
            "grid": self.grid,
            "require_improvement": self.require_improvement,
        }


@dataclass(frozen=True)
class TraceState:
    round: int
    report: EvaluationReport
    metrics: MetricVector
    layout: Layout

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "report": self.report.to_dict(),
            "metrics": self.metrics.to_dict(),
            "layout": self.layout.to_dict(),
        }


@dataclass
class RefineTrace:
    rounds: list[TraceState] = field(default_factory=list)
    states: list[TraceState] = field(default_factory=list)
    accepted_moves: int = 0
    terminated_by: str = FIXED_POINT
    rejections: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rounds": [s.to_dict() for s in self.rounds],
            "states": [s.to_dict() for s in self.states],
            "accepted_moves": self.accepted_moves,
            "terminated_by": self.terminated_by,
            "rejections": self.rejections,
        }


class Scorer:
    """Composite scoring bound to one background; caches the Sobel map."""

    def __init__(self, assets: BackgroundAssets | None, cfg: RefineConfig):
        self.assets = assets
        self.cfg = cfg
        self.gradient = None if assets is None else gradient_magnitude(assets.image)

    def metrics(self, layout: Layout) -> MetricVector:
        return evaluate_layout(layout, self.assets, self.cfg.weights,
                               self.cfg.thresholds.contain_tol, self.gradient)

    def score(self, layout: Layout) -> float:
        return self.metrics(layout).composite

    def report(self, layout: Layout) -> EvaluationReport:
        return evaluate_principles(layout, self.assets, self.cfg.thresholds)


# --- candidate moves ------------------------------------------------------------

def _translate(e: Element, dx: float = 0.0, dy: float = 0.0) -> Element | None:
    l, t = e.l + dx, e.t + dy
    if l < 0 or t < 0 or l + e.w > 1 or t + e.h > 1:
        return None
    return replace(e, l=l, t=t)


def _separate(a: Element, b: Element, direction: str, threshold: float) -> Element | None:
    """Move ``a`` along ``direction`` by the smallest distance giving iou(a, b) <= threshold."""
    full = {
        "left": a.r - b.l,
        "right": b.r - a.l,
        "up": a.b - b.t,
        "down": b.b - a.t,
    }[direction]
    sign = -1.0 if direction in ("left", "up") else 1.0
    horizontal = direction in ("left", "right")

    def shifted(d: float) -> Element | None:
        return _translate(a, sign * d, 0.0) if horizontal else _translate(a, 0.0, sign * d)

    end = shifted(full)
    if end is None:
        return None
    # float rounding can leave a sliver of overlap at the touching position
    for _ in range(4):
        if iou(end, b) <= threshold:
            break
        full += 1e-9
        end = shifted(full)
        if end is None:
            return None
    else:
        return None
    if threshold <= 0:
        return end
    lo, hi = 0.0, full
    for _ in range(50):
        mid = (lo + hi) / 2
        cand = shifted(mid)
        if cand is not None and iou(cand, b) <= threshold:
            hi = mid
        else:
            lo = mid
    return shifted(hi)


def _overlap_moves(layout: Layout, verdict: PrincipleVerdict, cfg: RefineConfig):
    worst = max(verdict.offenders, key=lambda p: (iou(layout[p[0]], layout[p[1]]), -p[0], -p[1]))
    i, j = worst
    for mover, anchor in ((i, j), (j, i)):
        for direction in ("left", "right", "up", "down"):
            moved = _separate(layout[mover], layout[anchor], direction, cfg.thresholds.overlap)
            if moved is not None:
                yield mover, layout.with_element(mover, moved)


def _center_distance(a: Element, b: Element) -> float:
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def _underlay_moves(layout: Layout, verdict: PrincipleVerdict, cfg: RefineConfig):
    others = [j for j, e in enumerate(layout) if not e.is_underlay]
    for u in verdict.offenders:
        ue = layout[u]
        nearest = sorted(others, key=lambda j: (_center_distance(ue, layout[j]), j))
        for j in nearest[:3]:
            e = layout[j]
            # pull the element into the underlay, shrinking it if it cannot fit
            w, h = min(e.w, ue.w), min(e.h, ue.h)
            l = min(max(e.l, ue.l), ue.r - w)
            t = min(max(e.t, ue.t), ue.b - h)
            moved = e.moved(l=l, t=t, w=w, h=h)
            if contains(ue, moved, cfg.thresholds.contain_tol):
                yield j, layout.with_element(j, moved)
            # or slide the underlay over the element
            if ue.w >= e.w and ue.h >= e.h:
                ul = min(max(ue.l, e.r - ue.w), e.l)
                ut = min(max(ue.t, e.b - ue.h), e.t)
                slid = ue.moved(l=ul, t=ut)
                if contains(slid, e, cfg.thresholds.contain_tol):
                    yield u, layout.with_element(u, slid)


def _saliency_moves(layout: Layout, verdict: PrincipleVerdict, assets: BackgroundAssets,
                    cfg: RefineConfig):
    n = cfg.grid
    for i in verdict.offenders:
        e = layout[i]
        ts = np.linspace(0.0, 1.0 - e.h, n)
        ls = np.linspace(0.0, 1.0 - e.w, n)
        cells = [replace(e, l=float(l), t=float(t)) for t in ts for l in ls]
        best = min(cells, key=lambda c: element_saliency(c, assets))
        if best != e:
            yield i, layout.with_element(i, best)
        # cells on the element's own row or column keep one alignment axis intact
        in_line = [replace(e, t=float(t)) for t in ts] + [replace(e, l=float(l)) for l in ls]
        for cand in in_line:
            if cand != e and element_saliency(cand, assets) <= cfg.thresholds.saliency:
                yield i, layout.with_element(i, cand)


def snap_to_neighbor(layout: Layout, i: int) -> Element:
    """Translate element ``i`` so its closest axis lies exactly on the neighbor's line."""
    j, axis, _ = nearest_axis_match(layout, i)
    e, o = layout[i], layout[j]
    if axis == 0:
        return e.moved(l=o.l)
    if axis == 1:
        return e.moved(l=o.cx - e.w / 2)
    if axis == 2:
        return e.moved(l=o.r - e.w)
    if axis == 3:
        return e.moved(t=o.t)
    if axis == 4:
        return e.moved(t=o.cy - e.h / 2)
    return e.moved(t=o.b - e.h)


def _align_moves(layout: Layout, verdict: PrincipleVerdict, cfg: RefineConfig):
    for i in verdict.offenders:
        snapped = snap_to_neighbor(layout, i)
        if snapped != layout[i]:
            yield i, layout.with_element(i, snapped)


def candidate_moves(layout: Layout, report: EvaluationReport,
                    assets: BackgroundAssets | None, cfg: RefineConfig) -> list[tuple[int, Layout]]:
    """``(moved element index, candidate layout)`` pairs for the first failed principle."""
    failed = report.failed
    if not failed:
        return []
    v = failed[0]
    if v.principle_id == 1:
        moves = _overlap_moves(layout, v, cfg)
    elif v.principle_id == 2:
        moves = _underlay_moves(layout, v, cfg)
    elif v.principle_id == 3:
        moves = _saliency_moves(layout, v, assets, cfg)
    else:
        moves = _align_moves(layout, v, cfg)
    return list(moves)


def repair_step(layout: Layout, report: EvaluationReport, assets: BackgroundAssets | None,
                cfg: RefineConfig, rng: np.random.Generator,
                scorer: Scorer | None = None) -> Layout:
    """One accept-if-better move against the first failed principle.

    Among the candidate moves the lowest composite wins; ties go to the lowest
    moved-element index, then to the seeded RNG. The winner is returned only
    if it strictly improves on ``layout``.
    """
    if report.passed:
        return layout
    scorer = scorer or Scorer(assets, cfg)
    base = scorer.score(layout)
    scored = [(scorer.score(cand), idx, cand) for idx, cand in candidate_moves(layout, report, assets, cfg)]
    scored = [s for s in scored if s[0] < base]
    if not scored:
        return layout
    best_score = min(s[0] for s in scored)
    tied = [s for s in scored if s[0] == best_score]
    low = min(s[1] for s in tied)
    tied = [s for s in tied if s[1] == low]
    pick = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
    return pick[2]


# --- backends ---------------------------------------------------------------------

@dataclass
class RoundResult:
    evaluation: str
    layout: Any
    states: list[Layout] = field(default_factory=list)
    terminated_by: str = FIXED_POINT


class Refiner(Protocol):
    def refine_round(self, layout: Layout, assets: BackgroundAssets | None,
                     visual_prompt: np.ndarray | None, cfg: RefineConfig,
                     rng: np.random.Generator) -> RoundResult: ...


class BackendOutputError(LayoutError):
    """A backend produced an unusable proposal; the round is rejected."""


class BuiltinRefiner:
    """Local search; ignores the visual prompt and recomputes reports itself."""

    def refine_round(self, layout, assets, visual_prompt, cfg, rng) -> RoundResult:
        scorer = Scorer(assets, cfg)
        report = scorer.report(layout)
        evaluation = report.text
        states = []
        current = layout
        terminated = FIXED_POINT
        for _ in range(cfg.max_moves):
            if report.passed:
                terminated = ALL_PASS
                break
            nxt = repair_step(current, report, assets, cfg, rng, scorer)
            if nxt == current:
                terminated = FIXED_POINT
                break
            current = nxt
            states.append(current)
            report = scorer.report(current)
        else:
            terminated = ALL_PASS if report.passed else MAX_MOVES
        return RoundResult(evaluation, current, states, terminated)


def _validate(proposal: Any, reference: Layout) -> Layout:
    if isinstance(proposal, Layout):
        layout = proposal
    elif isinstance(proposal, Mapping):
        layout = Layout.from_dict(proposal)
    else:
        raise BackendOutputError(f"backend returned {type(proposal).__name__}, not a layout")
    if (layout.canvas_w, layout.canvas_h) != (reference.canvas_w, reference.canvas_h):
        raise BackendOutputError("backend changed the canvas size")
    return layout


def refine_via_backend(layout: Layout, assets: BackgroundAssets | None, backend: Refiner,
                       cfg: RefineConfig = RefineConfig(),
                       rng: np.random.Generator | None = None) -> tuple[Layout, RefineTrace]:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    scorer = Scorer(assets, cfg)

    def snapshot(r: int, lay: Layout) -> TraceState:
        return TraceState(r, scorer.report(lay), scorer.metrics(lay), lay)

    start = snapshot(0, layout)
    trace = RefineTrace(rounds=[start], states=[start])
    trace.terminated_by = ALL_PASS if start.report.passed else FIXED_POINT
    current = start
    for r in range(1, cfg.iterations + 1):
        if current.report.passed:
            trace.terminated_by = ALL_PASS
            current = replace(current, round=r)
            trace.rounds.append(current)
            continue
        visual = render_layout(assets, current.layout) if assets is not None else None
        try:
            result = backend.refine_round(current.layout, assets, visual, cfg, rng)
            proposal = _validate(result.layout, layout)
        except LayoutError as exc:
            logger.info("round %d rejected: %s", r, exc)
            trace.rejections.append({"round": r, "reason": str(exc)})
            trace.rounds.append(replace(current, round=r))
            continue
        states = result.states or ([proposal] if proposal != current.layout else [])
        if states and states[-1] != proposal:
            states = [*states, proposal]
        accepted = current
        for lay in states:
            snap = snapshot(r, lay)
            if snap.metrics.composite > accepted.metrics.composite and cfg.require_improvement:
                trace.rejections.append({
                    "round": r,
                    "reason": f"composite increased {accepted.metrics.composite:.6f} "
                              f"-> {snap.metrics.composite:.6f}",
                })
                break
            accepted = snap
            trace.states.append(snap)
            trace.accepted_moves += 1
        current = accepted
        trace.rounds.append(current)
        trace.terminated_by = ALL_PASS if current.report.passed else result.terminated_by
    return current.layout, trace


def refine(layout: Layout, assets: BackgroundAssets | None = None,
           cfg: RefineConfig = RefineConfig(),
           rng: np.random.Generator | None = None) -> tuple[Layout, RefineTrace]:
    return refine_via_backend(layout, assets, BuiltinRefiner(), cfg, rng)


def best_of_k(candidates: Sequence[Layout], assets: BackgroundAssets | None = None,
              weights: CompositeWeights = CompositeWeights()) -> tuple[int, Layout, MetricVector]:
    """Lowest-composite candidate; ties go to the lowest index."""
    if not candidates:
        raise ValueError("best_of_k needs at least one candidate")
    dims = {(c.canvas_w, c.canvas_h) for c in candidates}
    if len(dims) > 1:
        raise LayoutError("candidates must share canvas dimensions")
    gradient = None if assets is None else gradient_magnitude(assets.image)
    vectors = [evaluate_layout(c, assets, weights, gradient=gradient) for c in candidates]
    idx = min(range(len(candidates)), key=lambda i: (vectors[i].composite, i))
    return idx, candidates[idx], vectors[idx]
