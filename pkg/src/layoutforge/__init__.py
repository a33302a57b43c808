"""Layout evaluation, principle checking and iterative refinement for graphic layouts."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DEFAULT_TAXONOMY,
    BackgroundAssets,
    Element,
    ElementCategory,
    Layout,
    LayoutError,
    Taxonomy,
    contains,
    intersection_area,
    iou,
)
from .metrics import CompositeWeights, MetricVector, composite_score, evaluate_layout  # noqa: E402
from .principles import EvaluationReport, PrincipleThresholds, evaluate_principles  # noqa: E402
from .refine import RefineConfig, best_of_k, refine, refine_via_backend  # noqa: E402

__all__ = [
    "DEFAULT_TAXONOMY", "BackgroundAssets", "Element", "ElementCategory", "Layout",
    "LayoutError", "Taxonomy", "contains", "intersection_area", "iou",
    "CompositeWeights", "MetricVector", "composite_score", "evaluate_layout",
    "EvaluationReport", "PrincipleThresholds", "evaluate_principles",
    "RefineConfig", "best_of_k", "refine", "refine_via_backend",
]
