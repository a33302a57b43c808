import json

import pytest

from layoutforge.core import DEFAULT_TAXONOMY, LayoutError, make_layout, save_layout
from layoutforge.ingest import TaxonomyMap, convert_dataset, convert_record, load_corpus, split_by_difficulty

TAXMAP = TaxonomyMap(DEFAULT_TAXONOMY, {"textElement": "text", "svgElement": "underlay",
                                        "imageElement": "image", "deco": "embellishment"})


def box_record(boxes, w=513, h=750):
    return {"width": w, "height": h, "boxes": [{"label": l, "bbox": b} for l, b in boxes]}


def test_box_list_normalizes():
    lay, dropped = convert_record(box_record([("text", [102, 75, 200, 150])]), "box_list", TAXMAP)
    assert dropped == 0
    assert (lay.canvas_w, lay.canvas_h) == (513, 750)
    assert lay[0].l == 0.1988
    assert lay[0].t == 0.1 and lay[0].h == 0.2
    assert lay[0].w == round(200 / 513, 4)


def test_box_list_xyxy_adapter():
    rec = box_record([("logo", [0, 0, 513, 375])])
    lay, _ = convert_record(rec, "box_list", TAXMAP, {"bbox_format": "xyxy"})
    assert lay[0].box() == (0.0, 0.0, 1.0, 0.5)


def test_crello_like_drops_attributes():
    rec = {"canvas_width": 1080, "canvas_height": 1080,
           "elements": [{"type": "textElement", "left": 0.1, "top": 0.2, "width": 0.5,
                         "height": 0.1, "font": "Serif", "color": "#fff"},
                        {"type": "svgElement", "left": 0.05, "top": 0.15, "width": 0.6, "height": 0.2}]}
    lay, _ = convert_record(rec, "crello_like", TAXMAP)
    assert [e.category.name for e in lay] == ["text", "underlay"]


def test_degenerate_and_overhanging_boxes():
    rec = box_record([("text", [10, 10, 0, 5]), ("text", [500, 700, 100, 100])])
    lay, dropped = convert_record(rec, "box_list", TAXMAP)
    assert dropped == 1
    assert lay[0].r <= 1.0 and lay[0].b <= 1.0


def test_unmapped_category():
    with pytest.raises(LayoutError, match="unmapped category"):
        convert_record(box_record([("sticker", [0, 0, 5, 5])]), "box_list", TAXMAP)


def test_dataset(tmp_path):
    src = tmp_path / "raw"
    (src / "sub").mkdir(parents=True)
    (src / "a.json").write_text(json.dumps(box_record([("text", [102, 75, 200, 150])])))
    (src / "sub" / "b.json").write_text(json.dumps(box_record([("sticker", [0, 0, 5, 5])])))
    (src / "c.json").write_text("{not json")
    m = convert_dataset(src, tmp_path / "out", "box_list", TAXMAP)
    assert m["count"] == 1 and m["ids"] == ["a"]
    assert m["skipped"] == [{"id": "sub__b", "reason": "unmapped category 'sticker'"}]
    assert len(m["errors"]) == 1 and "c.json" in m["errors"][0]["file"]
    assert m["category_histogram"] == {"text": 1}
    corpus = load_corpus(tmp_path / "out")
    assert [sid for sid, _ in corpus] == ["a"]


def test_empty_dir(tmp_path):
    (tmp_path / "raw").mkdir()
    m = convert_dataset(tmp_path / "raw", tmp_path / "out", "crello_like", TAXMAP)
    assert m["count"] == 0 and m["ids"] == []
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["count"] == 0


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        convert_dataset(tmp_path, tmp_path / "o", "coco", TAXMAP)


def test_taxonomy_map_file(tmp_path):
    path = tmp_path / "tax.json"
    path.write_text(json.dumps({"categories": {"headline": {"is_text": True}, "panel": {"is_underlay": True}},
                                "map": {"title": "headline"}}))
    tm = TaxonomyMap.load(path)
    assert tm.resolve("title") == "headline" and tm.resolve("panel") == "panel"
    with pytest.raises(LayoutError):
        TaxonomyMap(DEFAULT_TAXONOMY, {"x": "nonexistent"})


def test_split_boundaries():
    def lay(k):
        return make_layout([("text", 0.01 * i, 0.0, 0.01, 0.01) for i in range(k)])
    easy, hard = split_by_difficulty([lay(8), lay(9), lay(0), lay(12), lay(3)])
    assert [len(x) for x in easy] == [8, 0, 3]
    assert [len(x) for x in hard] == [9, 12]


def test_load_single_file(tmp_path):
    save_layout(make_layout([("text", 0.1, 0.1, 0.2, 0.2)]), tmp_path / "x.json")
    assert load_corpus(tmp_path / "x.json")[0][0] == "x"
