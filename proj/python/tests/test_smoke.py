import json

import pytest

import ussg


def test_text_metrics():
    assert ussg.tokenize("The Thyroid, left.") == ["the", "thyroid", "left"]
    assert ussg.lcs_length(["a", "b", "c"], ["a", "c"]) == 2
    p, r, f = ussg.rouge_l("the cat sat", "the cat sat")
    assert f == pytest.approx(1.0)
    assert ussg.meteor("a b c", "x y z") == 0.0
    assert ussg.iou([0, 0, 10, 10], [0, 0, 10, 10]) == pytest.approx(1.0)


def test_cross_section_and_flip():
    left = ussg.cross_section(0.5, 0.0, "left")
    names = {b["cls"] for b in left["images"][0]["boxes"]}
    assert {"CCA", "IJV", "CR", "TH", "VB"} <= names
    canon = ussg.canonical_dataset(json.dumps(left))
    assert canon == ussg.canonical_dataset(canon)
    flipped = json.loads(ussg.augment_flip(canon))
    assert len(flipped["images"]) == 2


def test_dataset_errors_carry_code():
    with pytest.raises(ussg.UssgError) as info:
        ussg.canonical_dataset("{")
    assert info.value.args[0] == "SYNTAX"


def test_self_evaluation_is_perfect():
    ds = json.dumps(ussg.cross_section(0.5, 0.1, "right"))
    report = ussg.evaluate(ds, ds)
    assert all(v == pytest.approx(1.0) for v in report["detection"]["map"])


def test_oracle_and_scanner():
    g = ussg.oracle_guidance(0.1, 0.0, "left", "TH")
    assert g["direction"] == "cranial" and not g["already_visible"]
    s = ussg.Scanner()
    sid = s.create(0.1, 0.0, "left")
    s.move(sid)
    audit = s.query(sid, "where is the thyroid?", task="guide")
    assert audit["audit"]["match"] is True
    for m in range(g["steps"]):
        frame = s.move(sid, direction="cranial")
    assert any(b["category"] == "TH" for b in frame["boxes"])
    assert s.close(sid)
    with pytest.raises(ussg.UssgError):
        s.frame(sid)
