import numpy as np
import pytest
from hypothesis import given

from layoutforge.core import BackgroundAssets, make_layout
from layoutforge.principles import (
    FINE_TEXT,
    PRINCIPLE_SENTENCES,
    EvaluationReport,
    PrincipleThresholds,
    PrincipleVerdict,
    ecot_text,
    evaluate_principles,
    prune_by_principles,
)

from conftest import layouts, random_layout

SPEC_EXAMPLE = [("underlay", 0.1, 0.1, 0.8, 0.8), ("text", 0.2, 0.2, 0.2, 0.2), ("text", 0.2, 0.5, 0.2, 0.2)]
# same scene with the underlay sharing the texts' left edge
CLEAN = [("underlay", 0.2, 0.1, 0.6, 0.8), ("text", 0.2, 0.2, 0.2, 0.2), ("text", 0.2, 0.5, 0.2, 0.2)]


def zero_assets():
    return BackgroundAssets(np.zeros((100, 100, 3), np.uint8), np.zeros((100, 100)))


def test_empty_layout_passes():
    r = evaluate_principles(make_layout([]))
    assert r.passed and r.text == FINE_TEXT


def test_identical_texts_overlap():
    r = evaluate_principles(make_layout([("text", 0.1, 0.1, 0.2, 0.2)] * 2))
    assert not r.verdict(1).passed
    assert r.verdict(1).offenders == ((0, 1),)
    assert r.text.startswith("there is element overlap in the current poster")
    assert r.text == "there is element overlap in the current poster [(0, 1)]"


def test_unaligned_underlay_flags_alignment():
    # the underlay's nearest same-axis gap is 0.1, above the 0.02 default
    r = evaluate_principles(make_layout(SPEC_EXAMPLE), zero_assets())
    assert [v.principle_id for v in r.failed] == [4]
    assert r.verdict(4).offenders == (0,)
    assert r.text == "elements are not aligned with each other [0]"


def test_clean_example():
    r = evaluate_principles(make_layout(CLEAN), zero_assets())
    assert r.passed
    assert r.text == FINE_TEXT
    assert not r.verdict(3).skipped


def test_saliency_skipped_without_map():
    r = evaluate_principles(make_layout(CLEAN))
    assert r.verdict(3).skipped and r.verdict(3).passed


def test_multiple_failures_join_in_order():
    lay = make_layout([("text", 0.1, 0.1, 0.2, 0.2)] * 2 + [("underlay", 0.5, 0.5, 0.1, 0.1)])
    assert evaluate_principles(lay).text == (
        "there is element overlap in the current poster [(0, 1)]; "
        "an underlay does not cover any element [2]; "
        "elements are not aligned with each other [2]"
    )


def test_sentences_are_canonical():
    assert PRINCIPLE_SENTENCES == {
        1: "there is element overlap in the current poster",
        2: "an underlay does not cover any element",
        3: "an element covers the object in the background",
        4: "elements are not aligned with each other",
    }


def test_thresholds_loosen_verdicts():
    lay = make_layout([("text", 0.1, 0.1, 0.2, 0.2), ("text", 0.25, 0.1, 0.2, 0.2)])
    assert not evaluate_principles(lay).verdict(1).passed
    assert evaluate_principles(lay, thresholds=PrincipleThresholds(overlap=0.5)).verdict(1).passed


def test_report_needs_four_verdicts():
    with pytest.raises(ValueError):
        EvaluationReport((PrincipleVerdict(1, True, (), 0.0),))


def violators():
    """Three layouts, each breaking exactly one principle (1, 2 and 3)."""
    overlap = CLEAN[:2] + [("text", 0.2, 0.3, 0.2, 0.2)]
    stray_underlay = CLEAN + [("underlay", 0.1, 0.85, 0.3, 0.05)]
    sal = np.zeros((100, 100))
    sal[20:40, 20:40] = 1.0
    salient = BackgroundAssets(np.zeros((100, 100, 3), np.uint8), sal)
    return [(make_layout(overlap), zero_assets(), 1),
            (make_layout(stray_underlay), zero_assets(), 2),
            (make_layout(CLEAN), salient, 3)]


def test_each_violator_breaks_exactly_one():
    for lay, assets, pid in violators():
        r = evaluate_principles(lay, assets)
        assert [v.principle_id for v in r.failed] == [pid]


def test_prune_mixed_corpus():
    clean = [(make_layout(CLEAN), zero_assets()) for _ in range(7)]
    bad = violators()
    corpus = clean[:3] + [(l, a) for l, a, _ in bad] + clean[3:]
    kept, removed = prune_by_principles(corpus)
    assert len(kept) == 7 and len(removed) == 3
    assert [r.failed[0].principle_id for _, r in removed] == [1, 2, 3]


def test_prune_all_clean_and_single_bad():
    kept, removed = prune_by_principles([(make_layout(CLEAN), None)] * 4)
    assert len(kept) == 4 and removed == []
    kept, removed = prune_by_principles([(make_layout([("text", 0.1, 0.1, 0.2, 0.2)] * 2), None)])
    assert kept == [] and removed[0][1].failed[0].principle_id == 1


def test_prune_idempotent():
    rng = np.random.default_rng(5)
    corpus = [(random_layout(rng, int(rng.integers(1, 4))), None) for _ in range(200)]
    kept, _ = prune_by_principles(corpus)
    kept2, removed2 = prune_by_principles(kept)
    assert removed2 == [] and kept2 == kept


@given(layouts(max_size=8))
def test_text_fine_iff_all_pass(lay):
    r = evaluate_principles(lay)
    assert (r.text == FINE_TEXT) == r.passed
    assert r.text == ecot_text(r.verdicts)


@given(layouts(max_size=8))
def test_deterministic(lay):
    a, b = evaluate_principles(lay), evaluate_principles(lay)
    assert a.text.encode() == b.text.encode()
    assert a.to_dict() == b.to_dict()
