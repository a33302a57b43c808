"""Design-principle checks and the evaluation text that precedes a refinement.

Four principles, checked in order:

1. no overlap between non-underlay boxes (IoU above ``overlap`` fails),
2. every underlay strictly contains at least one non-underlay box,
3. no box sits on salient background (mean saliency above ``saliency`` fails),
4. every box has a same-axis neighbor within ``align``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from .core import DEFAULT_CONTAIN_TOL, BackgroundAssets, Layout, iou, split_roles
from .metrics import element_saliency, nearest_axis_distances, underlay_scores

FINE_TEXT = "current layout is fine"

PRINCIPLE_SENTENCES = {
    1: "there is element overlap in the current poster",
    2: "an underlay does not cover any element",
    3: "an element covers the object in the background",
    4: "elements are not aligned with each other",
}


@dataclass(frozen=True)
class PrincipleThresholds:
    overlap: float = 0.0
    saliency: float = 0.5
    align: float = 0.02
    contain_tol: float = DEFAULT_CONTAIN_TOL

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PrincipleVerdict:
    principle_id: int
    passed: bool
    offenders: tuple = ()
    measure: float = 0.0
    skipped: bool = False

    def __post_init__(self):
        if self.principle_id not in PRINCIPLE_SENTENCES:
            raise ValueError(f"principle_id must be 1..4, got {self.principle_id}")
        if self.passed and self.offenders:
            raise ValueError("a passed verdict cannot have offenders")

    def to_dict(self) -> dict:
        return {
            "principle_id": self.principle_id,
            "passed": self.passed,
            "offenders": [list(o) if isinstance(o, tuple) else o for o in self.offenders],
            "measure": self.measure,
            "skipped": self.skipped,
        }


def _format_offender(o) -> str:
    if isinstance(o, tuple):
        return "(" + ", ".join(str(i) for i in o) + ")"
    return str(o)


def ecot_text(verdicts: Sequence[PrincipleVerdict]) -> str:
    """Canonical evaluation text; a pure function of the verdicts."""
    parts = [
        f"{PRINCIPLE_SENTENCES[v.principle_id]} "
        f"[{', '.join(_format_offender(o) for o in v.offenders)}]"
        for v in sorted(verdicts, key=lambda v: v.principle_id)
        if not v.passed
    ]
    return "; ".join(parts) if parts else FINE_TEXT


@dataclass(frozen=True)
class EvaluationReport:
    verdicts: tuple[PrincipleVerdict, ...]
    text: str = field(init=False, default="")
    thresholds: PrincipleThresholds = PrincipleThresholds()

    def __post_init__(self):
        verdicts = tuple(sorted(self.verdicts, key=lambda v: v.principle_id))
        if [v.principle_id for v in verdicts] != [1, 2, 3, 4]:
            raise ValueError("a report needs exactly one verdict per principle 1..4")
        object.__setattr__(self, "verdicts", verdicts)
        object.__setattr__(self, "text", ecot_text(verdicts))

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def failed(self) -> list[PrincipleVerdict]:
        return [v for v in self.verdicts if not v.passed]

    def verdict(self, principle_id: int) -> PrincipleVerdict:
        return self.verdicts[principle_id - 1]

    def to_dict(self) -> dict:
        return {
            "verdicts": [v.to_dict() for v in self.verdicts],
            "text": self.text,
            "thresholds": self.thresholds.to_dict(),
        }


def check_overlap(layout: Layout, th: PrincipleThresholds) -> PrincipleVerdict:
    _, other = split_roles(layout)
    worst = 0.0
    offenders = []
    for i, j in combinations(other, 2):
        v = iou(layout[i], layout[j])
        worst = max(worst, v)
        if v > th.overlap:
            offenders.append((i, j))
    return PrincipleVerdict(1, not offenders, tuple(offenders), worst)


def check_underlay(layout: Layout, th: PrincipleThresholds) -> PrincipleVerdict:
    under, _ = split_roles(layout)
    scores = underlay_scores(layout, th.contain_tol)
    offenders = tuple(u for u, (_, strict) in zip(under, scores) if strict == 0)
    measure = sum(s for _, s in scores) / len(scores) if scores else 1.0
    return PrincipleVerdict(2, not offenders, offenders, measure)


def check_saliency(layout: Layout, assets: BackgroundAssets | None,
                   th: PrincipleThresholds) -> PrincipleVerdict:
    if assets is None or assets.saliency is None:
        return PrincipleVerdict(3, True, (), 0.0, skipped=True)
    assets.check_layout(layout)
    vals = [element_saliency(e, assets) for e in layout]
    offenders = tuple(i for i, v in enumerate(vals) if v > th.saliency)
    return PrincipleVerdict(3, not offenders, offenders, max(vals, default=0.0))


def check_alignment(layout: Layout, th: PrincipleThresholds) -> PrincipleVerdict:
    if len(layout) < 2:
        return PrincipleVerdict(4, True, (), 0.0)
    d = nearest_axis_distances(layout)
    offenders = tuple(i for i, v in enumerate(d) if v > th.align)
    return PrincipleVerdict(4, not offenders, offenders, max(d))


def evaluate_principles(layout: Layout, assets: BackgroundAssets | None = None,
                        thresholds: PrincipleThresholds = PrincipleThresholds()) -> EvaluationReport:
    verdicts = (
        check_overlap(layout, thresholds),
        check_underlay(layout, thresholds),
        check_saliency(layout, assets, thresholds),
        check_alignment(layout, thresholds),
    )
    return EvaluationReport(verdicts, thresholds=thresholds)


def prune_by_principles(corpus: Iterable[tuple[Layout, BackgroundAssets | None]],
                        thresholds: PrincipleThresholds = PrincipleThresholds()):
    """Split a corpus into principle-clean items and ``(item, report)`` rejects.

    Order is preserved in both outputs.
    """
    kept, removed = [], []
    for layout, assets in corpus:
        report = evaluate_principles(layout, assets, thresholds)
        if report.passed:
            kept.append((layout, assets))
        else:
            removed.append(((layout, assets), report))
    return kept, removed
