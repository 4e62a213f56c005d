import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from trafficwatch.dataset_prep import (
    AnnotationItem,
    Label,
    augment_variants,
    hflip,
    largest_remainder,
    letterbox_transform,
    read_items,
    split_dataset,
    write_items,
)
from trafficwatch.errors import BadRatios, InvalidValue
from trafficwatch.ingest import BoundingBox as B, ObjectClass as C


def item(w=640, h=640, boxes=((100, 100, 50, 40),), image_id="img"):
    return AnnotationItem(image_id, w, h, tuple(Label(C.CAR, B(*b)) for b in boxes))


def test_letterbox_identity():
    it = item()
    lb = letterbox_transform(it)
    assert (lb.scale, lb.pad_x, lb.pad_y) == (1.0, 0.0, 0.0)
    assert lb.item.labels == it.labels


def test_letterbox_wide_image():
    lb = letterbox_transform(item(1280, 720, [(100, 100, 200, 50)]))
    assert (lb.scale, lb.pad_x, lb.pad_y) == (0.5, 0.0, 140.0)
    b = lb.item.labels[0].box
    assert (b.x, b.y, b.w, b.h) == (50, 190, 100, 25)
    assert (lb.item.image_w, lb.item.image_h) == (640, 640)


def test_flip_formula_and_centered_box():
    b = hflip(item(boxes=[(100, 10, 50, 20)])).labels[0].box
    assert b.x == 490
    centered = hflip(item(boxes=[(295, 10, 50, 20)])).labels[0].box
    assert centered.x == 295


def test_double_flip_is_identity():
    it = item(boxes=[(0, 0, 10, 10), (630, 5, 10, 10), (123.5, 7, 44.25, 9)])
    assert hflip(hflip(it)) == it


def test_out_of_canvas_label_rejected():
    with pytest.raises(InvalidValue):
        item(boxes=[(630, 0, 20, 10)])


boxes = st.tuples(st.floats(0, 0.9), st.floats(0, 0.9), st.floats(0.01, 1), st.floats(0.01, 1))


def scaled(w, h, frac_boxes):
    out = []
    for fx, fy, fw, fh in frac_boxes:
        x, y = fx * w, fy * h
        out.append((x, y, max(1e-3, min(fw * w, w - x)), max(1e-3, min(fh * h, h - y))))
    return [b for b in out if b[0] + b[2] <= w and b[1] + b[3] <= h]


@settings(max_examples=200)
@given(st.integers(16, 4000), st.integers(16, 4000), st.lists(boxes, max_size=6))
def test_letterbox_properties(w, h, frac_boxes):
    it = item(w, h, scaled(w, h, frac_boxes))
    lb = letterbox_transform(it)
    for before, after in zip(it.labels, lb.item.labels):
        a, b = before.box, after.box
        assert b.fits(640, 640)
        assert b.w / b.h == pytest.approx(a.w / a.h, rel=1e-9)
        assert b.w * b.h == pytest.approx(a.w * a.h * lb.scale ** 2, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(16, 2000), st.integers(16, 2000), st.lists(boxes, max_size=6), st.integers(0, 2**31))
def test_augment_outputs_valid_and_deterministic(w, h, frac_boxes, seed):
    it = item(w, h, scaled(w, h, frac_boxes))
    variants = augment_variants(it, 10, seed)
    assert len(variants) == 10 and variants[0] == it
    assert variants == augment_variants(it, 10, seed)
    for v in variants[1:]:
        assert v.source_id == it.image_id
        assert (v.image_w, v.image_h) == (w, h)
        assert len(v.labels) <= len(it.labels)
        for lab in v.labels:
            assert lab.box.fits(w, h) and lab.box.w > 0 and lab.box.h > 0
    assert len({v.image_id for v in variants}) == 10


def test_three_hundred_sources_split_2400_300_300():
    sources = [item(image_id=f"src{i:03d}") for i in range(300)]
    items = [v for s in sources for v in augment_variants(s, 10, seed=1)]
    assert len(items) == 3000
    m = split_dataset(items, (0.8, 0.1, 0.1), seed=42)
    assert (len(m.train), len(m.validation), len(m.test)) == (2400, 300, 300)
    assert m == split_dataset(items, (0.8, 0.1, 0.1), seed=42)
    assert m != split_dataset(items, (0.8, 0.1, 0.1), seed=43)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 5), st.integers(0, 10**6))
def test_split_no_leakage(n_sources, n_variants, seed):
    rng = random.Random(seed)
    items = [v for i in range(n_sources)
             for v in augment_variants(item(image_id=f"s{i}"), rng.randint(1, n_variants), seed)]
    m = split_dataset(items, seed=seed)
    parts = [m.train, m.validation, m.test]
    ids = [i for p in parts for i in p]
    assert sorted(ids) == sorted(it.image_id for it in items)
    assert len(ids) == len(set(ids))
    where = {}
    for k, part in enumerate(parts):
        for iid in part:
            where[iid] = k
    by_group = {}
    for it in items:
        by_group.setdefault(it.group, set()).add(where[it.image_id])
    assert all(len(s) == 1 for s in by_group.values())


@given(st.integers(0, 5000), st.sampled_from([(0.8, 0.1, 0.1), (0.7, 0.2, 0.1), (1 / 3, 1 / 3, 1 / 3), (0.5, 0.5, 0.0)]))
def test_largest_remainder_sizes(total, ratios):
    sizes = largest_remainder(total, ratios)
    assert sum(sizes) == total
    assert all(abs(s - total * r) < 1 + 1e-9 for s, r in zip(sizes, ratios))


def test_bad_ratios():
    with pytest.raises(BadRatios):
        split_dataset([item()], (0.5, 0.3, 0.1))
    with pytest.raises(BadRatios):
        split_dataset([item()], (0.5, 0.5))


def test_jsonl_roundtrip(tmp_path):
    p = tmp_path / "a.jsonl"
    items = augment_variants(item(1280, 720, [(100, 100, 200, 50)]), 3, seed=5)
    write_items(p, items)
    assert read_items(p) == items
    assert json.loads(p.read_text().splitlines()[1])["source_id"] == "img"
