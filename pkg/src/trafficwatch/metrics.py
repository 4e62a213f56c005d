"""Detection evaluation: IoU matching, PR curves, AP, mAP50 and mAP50-95.

Conventions follow COCO: per-image greedy matching in confidence order,
predictions pooled across images per class, 101-point interpolated AP over
recall in {0.00, 0.01, ..., 1.00}. The headline precision/recall pair is
taken at the confidence cut that maximizes F1 on the pooled curve.
"""
from __future__ import annotations

import bisect
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import EmptyDataset, InvalidValue, MalformedRecord, NoGroundTruth
from .ingest import BoundingBox, ObjectClass, parse_box

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = tuple(i / 100 for i in range(101))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


@dataclass(frozen=True)
class GroundTruthBox:
    cls: ObjectClass
    box: BoundingBox


@dataclass(frozen=True)
class Prediction:
    cls: ObjectClass
    confidence: float
    box: BoundingBox


@dataclass
class LabeledImage:
    image_id: str
    ground_truth: List[GroundTruthBox] = field(default_factory=list)
    predictions: List[Prediction] = field(default_factory=list)


def match_detections(predictions: Sequence, ground_truths: Sequence, iou_min: float) -> List[bool]:
    """Greedy TP/FP flags for one class in one image.

    ``predictions`` must already be in descending confidence order. Each
    prediction claims the unmatched ground truth with the highest IoU at or
    above ``iou_min``; equal IoUs go to the lower ground-truth index.
    Items may be boxes or objects with a ``box`` attribute.
    """
    pboxes = [getattr(p, "box", p) for p in predictions]
    gboxes = [getattr(g, "box", g) for g in ground_truths]
    taken = [False] * len(gboxes)
    flags = []
    for pb in pboxes:
        best, best_iou = -1, iou_min
        for j, gb in enumerate(gboxes):
            if taken[j]:
                continue
            v = iou(pb, gb)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
        flags.append(best >= 0)
    return flags


def pr_curve(flags: Sequence[bool], num_gt: int) -> List[Tuple[float, float]]:
    if num_gt == 0:
        if flags:
            raise NoGroundTruth("predictions present for a class with no ground truth")
        return []
    points = []
    tp = 0
    for k, f in enumerate(flags, start=1):
        tp += bool(f)
        points.append((tp / num_gt, tp / k))
    return points


def average_precision(points: Sequence[Tuple[float, float]]) -> float:
    """101-point interpolated AP on the monotone precision envelope."""
    if not points:
        return 0.0
    recalls = [r for r, _ in points]
    envelope = [p for _, p in points]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for r in RECALL_GRID:
        i = bisect.bisect_left(recalls, r)
        if i < len(recalls):
            total += envelope[i]
    return total / len(RECALL_GRID)


def _ranked_flags(dataset: Sequence[LabeledImage], cls: ObjectClass, iou_min: float
                  ) -> Tuple[List[Tuple[float, int, int]], List[bool], int]:
    """Per-class flags pooled over images, sorted by confidence desc.

    Ties keep image order, then prediction order within the image.
    """
    keyed = []
    num_gt = 0
    for img_idx, img in enumerate(dataset):
        gts = [g for g in img.ground_truth if g.cls == cls]
        num_gt += len(gts)
        preds = [(i, p) for i, p in enumerate(img.predictions) if p.cls == cls]
        preds.sort(key=lambda ip: (-ip[1].confidence, ip[0]))
        flags = match_detections([p for _, p in preds], gts, iou_min)
        for (i, p), f in zip(preds, flags):
            keyed.append(((-p.confidence, img_idx, i), f))
    keyed.sort(key=lambda kf: kf[0])
    return [k for k, _ in keyed], [f for _, f in keyed], num_gt


def classes_in(dataset: Sequence[LabeledImage]) -> Tuple[List[ObjectClass], List[ObjectClass]]:
    """(classes with ground truth, classes with predictions only)."""
    gt = {g.cls for img in dataset for g in img.ground_truth}
    pred = {p.cls for img in dataset for p in img.predictions}
    order = list(ObjectClass)
    return [c for c in order if c in gt], [c for c in order if c in pred - gt]


def threshold_points(keys, flags: Sequence[bool], num_gt: int) -> List[Tuple[float, float]]:
    """PR points at distinct confidence cuts only.

    A run of equal confidences is one threshold, so the curve has a point at
    the end of each run. This keeps AP independent of how ties are ordered.
    """
    points = pr_curve(flags, num_gt)
    return [pt for k, pt in enumerate(points)
            if k + 1 == len(points) or keys[k + 1][0] != keys[k][0]]


def class_ap(dataset: Sequence[LabeledImage], cls: ObjectClass, iou_min: float) -> float:
    keys, flags, num_gt = _ranked_flags(dataset, cls, iou_min)
    return average_precision(threshold_points(keys, flags, num_gt))


def map_range(dataset: Sequence[LabeledImage], thresholds: Sequence[float] = IOU_THRESHOLDS
              ) -> Tuple[float, float]:
    """(mAP at IoU 0.50, mean over classes of AP averaged across ``thresholds``)."""
    if not dataset:
        raise EmptyDataset("dataset has no images")
    present, _ = classes_in(dataset)
    if not present:
        raise EmptyDataset("dataset has no ground-truth boxes")
    ap50 = []
    ap_range = []
    for cls in present:
        aps = [class_ap(dataset, cls, t) for t in thresholds]
        ap50.append(class_ap(dataset, cls, 0.5))
        ap_range.append(sum(aps) / len(aps))
    return sum(ap50) / len(ap50), sum(ap_range) / len(ap_range)


@dataclass(frozen=True)
class OperatingPoint:
    precision: float
    recall: float
    f1: float
    threshold: Optional[float]


def _best_cut(confs: Sequence[float], flags: Sequence[bool], num_gt: int) -> OperatingPoint:
    best = OperatingPoint(0.0, 0.0, 0.0, None)
    tp = 0
    for k, f in enumerate(flags, start=1):
        tp += bool(f)
        # a cut can only fall between distinct confidences
        if k < len(flags) and confs[k] == confs[k - 1]:
            continue
        p, r = tp / k, tp / num_gt
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        if f1 > best.f1:
            best = OperatingPoint(p, r, f1, confs[k - 1])
    return best


def headline_pr(dataset: Sequence[LabeledImage], iou_min: float = 0.5) -> OperatingPoint:
    """Precision and recall at the max-F1 confidence cut of the pooled curve."""
    if not dataset:
        raise EmptyDataset("dataset has no images")
    present, _ = classes_in(dataset)
    if not present:
        raise EmptyDataset("dataset has no ground-truth boxes")
    keyed = []
    num_gt = 0
    for cls in present:
        keys, flags, n = _ranked_flags(dataset, cls, iou_min)
        num_gt += n
        keyed.extend(zip(keys, flags))
    keyed.sort(key=lambda kf: kf[0][0])
    confs = [-k[0] for k, _ in keyed]
    return _best_cut(confs, [f for _, f in keyed], num_gt)


def _pr_at(keys, flags, num_gt: int, threshold: Optional[float]) -> Tuple[float, float]:
    if threshold is None:
        return 0.0, 0.0
    kept = [f for k, f in zip(keys, flags) if -k[0] >= threshold]
    tp = sum(kept)
    precision = tp / len(kept) if kept else 0.0
    return precision, tp / num_gt


@dataclass
class ClassReport:
    precision: float
    recall: float
    ap50: float
    ap50_95: float
    num_gt: int
    num_pred: int


@dataclass
class EvalReport:
    model: str
    precision: float
    recall: float
    map50: float
    map50_95: float
    threshold: Optional[float]
    per_class: Dict[str, ClassReport]
    excluded_classes: List[str]
    num_images: int

    COLUMNS = ("Precision", "Recall", "mAP50", "mAP50-95")

    def row(self) -> Dict[str, float]:
        return dict(zip(self.COLUMNS, (self.precision, self.recall, self.map50, self.map50_95)))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            **self.row(),
            "confidence_threshold": self.threshold,
            "num_images": self.num_images,
            "per_class": {c: vars(r) for c, r in self.per_class.items()},
            "excluded_classes": self.excluded_classes,
        }


def evaluate_dataset(dataset: Sequence[LabeledImage], model: str = "model") -> EvalReport:
    if not dataset:
        raise EmptyDataset("dataset has no images")
    present, excluded = classes_in(dataset)
    if not present:
        raise EmptyDataset("dataset has no ground-truth boxes")
    op = headline_pr(dataset)
    per_class: Dict[str, ClassReport] = {}
    for cls in present:
        keys, flags, num_gt = _ranked_flags(dataset, cls, 0.5)
        p, r = _pr_at(keys, flags, num_gt, op.threshold)
        aps = [class_ap(dataset, cls, t) for t in IOU_THRESHOLDS]
        per_class[cls.value] = ClassReport(p, r, aps[0], sum(aps) / len(aps), num_gt, len(flags))
    map50 = sum(c.ap50 for c in per_class.values()) / len(per_class)
    map50_95 = sum(c.ap50_95 for c in per_class.values()) / len(per_class)
    return EvalReport(model, op.precision, op.recall, map50, map50_95, op.threshold,
                      per_class, [c.value for c in excluded], len(dataset))


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table with one row per model."""
    name_w = max([len("Model")] + [len(r.model) for r in reports])
    header = f"{'Model':<{name_w}}  " + "  ".join(f"{c:>9}" for c in EvalReport.COLUMNS)
    lines = [header, "-" * len(header)]
    for r in reports:
        vals = "  ".join(f"{v:>9.4f}" for v in r.row().values())
        lines.append(f"{r.model:<{name_w}}  {vals}")
    return "\n".join(lines)


# --- annotation files ------------------------------------------------------

def _read_jsonl(path) -> List[Tuple[int, dict]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from None
    return out


def load_dataset(gt_path, pred_path) -> List[LabeledImage]:
    """Join a ground-truth annotation file with a prediction file by image_id."""
    images: Dict[str, LabeledImage] = {}
    dims: Dict[str, Tuple[int, int]] = {}
    for lineno, rec in _read_jsonl(gt_path):
        try:
            image_id = str(rec["image_id"])
            if image_id in images:
                raise MalformedRecord(f"{gt_path}:{lineno}: duplicate image_id {image_id!r}")
            w, h = rec.get("image_w"), rec.get("image_h")
            gts = []
            for j, lab in enumerate(rec.get("labels", [])):
                box = parse_box(lab["box"], f"labels[{j}].box")
                if w is not None and h is not None and not box.fits(w, h):
                    raise InvalidValue(f"labels[{j}] exceeds image bounds")
                gts.append(GroundTruthBox(ObjectClass.parse(lab["class"]), box))
        except (KeyError, TypeError) as exc:
            raise MalformedRecord(f"{gt_path}:{lineno}: bad annotation ({exc})") from None
        except (InvalidValue, MalformedRecord) as exc:
            raise type(exc)(f"{gt_path}:{lineno}: {exc}") from None
        images[image_id] = LabeledImage(image_id, gts)
        if w is not None and h is not None:
            dims[image_id] = (w, h)
    if not images:
        raise EmptyDataset(f"{gt_path}: no ground-truth images")
    for lineno, rec in _read_jsonl(pred_path):
        try:
            image_id = str(rec["image_id"])
            if image_id not in images:
                raise MalformedRecord(f"{pred_path}:{lineno}: image_id {image_id!r} not in ground truth")
            for j, d in enumerate(rec.get("detections", [])):
                conf = d["confidence"]
                if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not 0 <= conf <= 1:
                    raise InvalidValue(f"detections[{j}].confidence must be in [0, 1]")
                box = parse_box(d["box"], f"detections[{j}].box")
                images[image_id].predictions.append(Prediction(ObjectClass.parse(d["class"]), float(conf), box))
        except (KeyError, TypeError) as exc:
            raise MalformedRecord(f"{pred_path}:{lineno}: bad prediction ({exc})") from None
        except (InvalidValue, MalformedRecord) as exc:
            msg = str(exc)
            raise type(exc)(msg if msg.startswith(str(pred_path)) else f"{pred_path}:{lineno}: {msg}") from None
    return list(images.values())


def curves_for_plot(dataset: Sequence[LabeledImage], iou_min: float = 0.5
                    ) -> Dict[str, List[Tuple[float, float]]]:
    present, _ = classes_in(dataset)
    out = {}
    for cls in present:
        keys, flags, n = _ranked_flags(dataset, cls, iou_min)
        out[cls.value] = threshold_points(keys, flags, n)
    return out
