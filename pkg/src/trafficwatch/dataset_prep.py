"""Annotation geometry for detector datasets: letterboxing, augmentation, splits.

Only box coordinates are transformed; pixels are never touched.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .errors import BadRatios, InvalidValue, MalformedRecord
from .ingest import BoundingBox, ObjectClass, parse_box

DEFAULT_TARGET = 640
DEFAULT_VARIANTS = 10
DEFAULT_RATIOS = (0.8, 0.1, 0.1)
SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class Label:
    cls: ObjectClass
    box: BoundingBox


@dataclass(frozen=True)
class AnnotationItem:
    image_id: str
    image_w: float
    image_h: float
    labels: Tuple[Label, ...] = ()
    source_id: Optional[str] = None

    def __post_init__(self):
        if not (self.image_w > 0 and self.image_h > 0):
            raise InvalidValue(f"{self.image_id}: image size must be positive")
        for i, lab in enumerate(self.labels):
            if not lab.box.fits(self.image_w, self.image_h):
                raise InvalidValue(f"{self.image_id}: label {i} exceeds {self.image_w}x{self.image_h}")

    @property
    def group(self) -> str:
        return self.source_id if self.source_id is not None else self.image_id

    def to_dict(self) -> dict:
        d = {
            "image_id": self.image_id,
            "image_w": self.image_w,
            "image_h": self.image_h,
            "labels": [{"class": lab.cls.value, "box": lab.box.to_dict()} for lab in self.labels],
        }
        if self.source_id is not None:
            d["source_id"] = self.source_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationItem":
        try:
            labels = tuple(Label(ObjectClass.parse(lab["class"]), parse_box(lab["box"]))
                           for lab in d.get("labels", []))
            return cls(str(d["image_id"]), d["image_w"], d["image_h"], labels, d.get("source_id"))
        except (KeyError, TypeError) as exc:
            raise MalformedRecord(f"bad annotation item ({exc})") from None


def read_items(path) -> List[AnnotationItem]:
    items = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                items.append(AnnotationItem.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from None
            except (MalformedRecord, InvalidValue) as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
    return items


def write_items(path, items: Sequence[AnnotationItem]) -> None:
    with open(path, "w") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), separators=(",", ":")) + "\n")


def _fit(start: float, size: float, limit: float) -> float:
    """Largest size <= ``size`` with ``start + size <= limit`` in float arithmetic."""
    size = min(size, limit - start)
    while start + size > limit:
        size = math.nextafter(size, 0.0)
    return size


def _clip_box(x1: float, y1: float, x2: float, y2: float, w: float, h: float) -> Optional[BoundingBox]:
    x1, x2 = max(0.0, min(x1, w)), max(0.0, min(x2, w))
    y1, y2 = max(0.0, min(y1, h)), max(0.0, min(y2, h))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    bw, bh = _fit(x1, x2 - x1, w), _fit(y1, y2 - y1, h)
    if bw <= 0 or bh <= 0:
        return None
    return BoundingBox(x1, y1, bw, bh)


class Letterbox(NamedTuple):
    item: AnnotationItem
    scale: float
    pad_x: float
    pad_y: float


def letterbox_transform(item: AnnotationItem, target: int = DEFAULT_TARGET) -> Letterbox:
    """Aspect-preserving resize onto a centered ``target`` x ``target`` canvas."""
    scale = target / max(item.image_w, item.image_h)
    pad_x = (target - item.image_w * scale) / 2
    pad_y = (target - item.image_h * scale) / 2
    labels = []
    for lab in item.labels:
        b = lab.box
        x, y = b.x * scale + pad_x, b.y * scale + pad_y
        w, h = b.w * scale, b.h * scale
        # absorb float overshoot at the canvas edge
        w, h = _fit(x, w, target), _fit(y, h, target)
        labels.append(Label(lab.cls, BoundingBox(x, y, w, h)))
    out = replace(item, image_w=target, image_h=target, labels=tuple(labels))
    return Letterbox(out, scale, pad_x, pad_y)


def hflip(item: AnnotationItem) -> AnnotationItem:
    W = item.image_w
    labels = []
    for lab in item.labels:
        b = lab.box
        x = max(W - b.x - b.w, 0)
        labels.append(Label(lab.cls, BoundingBox(x, b.y, _fit(x, b.w, W), b.h)))
    return replace(item, labels=tuple(labels))


def _affine(item: AnnotationItem, scale: float, tx: float, ty: float) -> AnnotationItem:
    """Scale about the image center then translate; clip, drop empty boxes."""
    W, H = item.image_w, item.image_h
    cx, cy = W / 2, H / 2
    labels = []
    for lab in item.labels:
        b = lab.box
        x1 = cx + (b.x - cx) * scale + tx
        y1 = cy + (b.y - cy) * scale + ty
        x2 = cx + (b.x + b.w - cx) * scale + tx
        y2 = cy + (b.y + b.h - cy) * scale + ty
        box = _clip_box(x1, y1, x2, y2, W, H)
        if box is not None:
            labels.append(Label(lab.cls, box))
    return replace(item, labels=tuple(labels))


def augment_variant(item: AnnotationItem, seed: int, index: int) -> AnnotationItem:
    rng = random.Random(f"{seed}:{item.image_id}:{index}")
    flip = rng.random() < 0.5
    scale = rng.uniform(0.9, 1.1) if rng.random() < 0.5 else 1.0
    if rng.random() < 0.5:
        tx = rng.uniform(-0.05, 0.05) * item.image_w
        ty = rng.uniform(-0.05, 0.05) * item.image_h
    else:
        tx = ty = 0.0
    if not flip and scale == 1.0 and tx == 0.0 and ty == 0.0:
        flip = True
    out = hflip(item) if flip else item
    if scale != 1.0 or tx or ty:
        out = _affine(out, scale, tx, ty)
    return replace(out, image_id=f"{item.image_id}__v{index}", source_id=item.group)


def augment_variants(item: AnnotationItem, n_variants: int = DEFAULT_VARIANTS, seed: int = 0
                     ) -> List[AnnotationItem]:
    """Variant 0 is the item itself; the rest are seeded flip/scale/translate compositions."""
    if n_variants < 1:
        raise ValueError("n_variants must be >= 1")
    return [item] + [augment_variant(item, seed, i) for i in range(1, n_variants)]


@dataclass(frozen=True)
class SplitManifest:
    train: Tuple[str, ...]
    validation: Tuple[str, ...]
    test: Tuple[str, ...]
    seed: int
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS

    def to_dict(self) -> dict:
        return {"train": list(self.train), "validation": list(self.validation),
                "test": list(self.test), "seed": self.seed, "ratios": list(self.ratios)}


def largest_remainder(total: int, ratios: Sequence[float]) -> List[int]:
    quotas = [total * r for r in ratios]
    sizes = [int(q) for q in quotas]
    short = total - sum(sizes)
    # biggest fractional part first, earlier split on ties
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def split_dataset(items: Sequence[AnnotationItem], ratios: Sequence[float] = DEFAULT_RATIOS,
                  seed: int = 0) -> SplitManifest:
    """Seeded, group-aware partition: every variant lands with its source image."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"need three non-negative ratios summing to 1, got {ratios}")
    groups: Dict[str, List[str]] = {}
    for item in items:
        groups.setdefault(item.group, []).append(item.image_id)
    keys = sorted(groups)
    random.Random(seed).shuffle(keys)
    sizes = largest_remainder(len(keys), ratios)
    parts = []
    start = 0
    for size in sizes:
        parts.append(tuple(iid for k in keys[start:start + size] for iid in groups[k]))
        start += size
    return SplitManifest(parts[0], parts[1], parts[2], seed, ratios)
