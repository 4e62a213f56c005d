"""Parsing, validation and camera attribution of detection frames.

Frames arrive as one JSON object per line::

    {"camera_id": "cam-01", "timestamp_ms": 0, "image_w": 640, "image_h": 640,
     "detections": [{"class": "car", "confidence": 0.9,
                     "box": {"x": 10, "y": 20, "w": 40, "h": 30}}]}

Coordinates are absolute pixels with a top-left origin.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from numbers import Real
from typing import Any, Dict, List, Mapping, Optional, Union

from .errors import (
    BoxOutOfBounds,
    InvalidValue,
    MalformedRecord,
    StaleFrame,
    UnknownCamera,
)


class ObjectClass(str, Enum):
    CAR = "car"
    MOTORCYCLE = "motorcycle"
    TRUCK = "truck"
    BUS = "bus"
    VAN = "van"
    OTHER = "other"
    ACCIDENT = "accident"
    SUDDEN_STOP = "sudden_stop"
    CONGESTION = "congestion"

    @property
    def is_vehicle(self) -> bool:
        return self in VEHICLE_CLASSES

    @property
    def is_anomaly(self) -> bool:
        return self in ANOMALY_CLASSES

    @classmethod
    def parse(cls, value: Any) -> "ObjectClass":
        if not isinstance(value, str):
            raise InvalidValue(f"class must be a string, got {value!r}")
        try:
            return cls(value)
        except ValueError:
            raise InvalidValue(f"unknown class {value!r}") from None


VEHICLE_CLASSES = frozenset(
    {
        ObjectClass.CAR,
        ObjectClass.MOTORCYCLE,
        ObjectClass.TRUCK,
        ObjectClass.BUS,
        ObjectClass.VAN,
        ObjectClass.OTHER,
    }
)
ANOMALY_CLASSES = frozenset(
    {ObjectClass.ACCIDENT, ObjectClass.SUDDEN_STOP, ObjectClass.CONGESTION}
)

Number = Union[int, float]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in absolute pixels, top-left origin."""

    x: Number
    y: Number
    w: Number
    h: Number

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InvalidValue(f"box size must be positive, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise InvalidValue(f"box origin must be non-negative, got x={self.x} y={self.y}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def fits(self, image_w: Number, image_h: Number) -> bool:
        return self.x + self.w <= image_w and self.y + self.h <= image_h

    def to_dict(self) -> Dict[str, Number]:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class Detection:
    cls: ObjectClass
    confidence: float
    box: BoundingBox

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidValue(f"confidence must be in [0, 1], got {self.confidence}")

    def to_dict(self) -> Dict[str, Any]:
        return {"class": self.cls.value, "confidence": self.confidence, "box": self.box.to_dict()}


@dataclass(frozen=True)
class DetectionFrame:
    camera_id: str
    timestamp_ms: int
    image_w: int
    image_h: int
    detections: tuple = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "camera_id": self.camera_id,
            "timestamp_ms": self.timestamp_ms,
            "image_w": self.image_w,
            "image_h": self.image_h,
            "detections": [d.to_dict() for d in self.detections],
        }


def _require(obj: Mapping, key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise MalformedRecord(f"{where}: expected an object")
    if key not in obj:
        raise MalformedRecord(f"{where}: missing field {key!r}")
    return obj[key]


def _number(value: Any, name: str) -> Number:
    # bool is an int subclass; reject it explicitly
    if isinstance(value, bool) or not isinstance(value, Real):
        raise MalformedRecord(f"{name} must be a number, got {value!r}")
    return value


def _integer(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedRecord(f"{name} must be an integer, got {value!r}")
    return value


def parse_box(obj: Any, where: str = "box") -> BoundingBox:
    vals = [_number(_require(obj, k, where), f"{where}.{k}") for k in ("x", "y", "w", "h")]
    return BoundingBox(*vals)


def parse_detection(obj: Any, where: str = "detection") -> Detection:
    cls = ObjectClass.parse(_require(obj, "class", where))
    conf = _number(_require(obj, "confidence", where), f"{where}.confidence")
    box = parse_box(_require(obj, "box", where), f"{where}.box")
    return Detection(cls, conf, box)


def frame_from_dict(obj: Any) -> DetectionFrame:
    camera_id = _require(obj, "camera_id", "frame")
    if not isinstance(camera_id, str):
        raise MalformedRecord(f"camera_id must be a string, got {camera_id!r}")
    ts = _integer(_require(obj, "timestamp_ms", "frame"), "timestamp_ms")
    image_w = _integer(_require(obj, "image_w", "frame"), "image_w")
    image_h = _integer(_require(obj, "image_h", "frame"), "image_h")
    if image_w <= 0 or image_h <= 0:
        raise InvalidValue(f"image size must be positive, got {image_w}x{image_h}")
    raw = _require(obj, "detections", "frame")
    if not isinstance(raw, list):
        raise MalformedRecord("detections must be an array")
    dets = tuple(parse_detection(d, f"detections[{i}]") for i, d in enumerate(raw))
    return DetectionFrame(camera_id, ts, image_w, image_h, dets)


def parse_frame(line: Union[bytes, str]) -> DetectionFrame:
    """Parse one JSONL record into a frame.

    Raises MalformedRecord for syntax or shape problems and InvalidValue for
    well-formed records carrying out-of-range values.
    """
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedRecord(f"not valid JSON: {exc}") from None
    return frame_from_dict(obj)


def serialize_frame(frame: DetectionFrame) -> str:
    return json.dumps(frame.to_dict(), separators=(",", ":"))


def validate_frame(frame: DetectionFrame) -> DetectionFrame:
    for i, det in enumerate(frame.detections):
        if not det.box.fits(frame.image_w, frame.image_h):
            b = det.box
            raise BoxOutOfBounds(
                i,
                f"detection {i}: box ({b.x},{b.y},{b.w},{b.h}) exceeds "
                f"{frame.image_w}x{frame.image_h} image",
            )
    return frame


class MonotonicGuard:
    """Tracks the last accepted timestamp per camera and rejects older frames.

    Equal timestamps are accepted (non-decreasing order).
    """

    def __init__(self):
        self._last: Dict[str, int] = {}

    def check(self, frame: DetectionFrame) -> DetectionFrame:
        last = self._last.get(frame.camera_id)
        if last is not None and frame.timestamp_ms < last:
            raise StaleFrame(
                f"camera {frame.camera_id}: timestamp {frame.timestamp_ms} < last accepted {last}"
            )
        self._last[frame.camera_id] = frame.timestamp_ms
        return frame

    def last(self, camera_id: str) -> Optional[int]:
        return self._last.get(camera_id)


class CameraRegistry:
    """camera_id -> segment_id. Several cameras may watch one segment."""

    def __init__(self, mapping: Mapping[str, str]):
        for cam, seg in mapping.items():
            if not isinstance(cam, str) or not isinstance(seg, str):
                raise InvalidValue(f"registry entries must be strings: {cam!r} -> {seg!r}")
        self._map = dict(mapping)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "CameraRegistry":
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise MalformedRecord(f"{path}: camera registry must be a JSON object")
        return cls(data)

    def cameras_of(self, segment_id: str) -> List[str]:
        return sorted(c for c, s in self._map.items() if s == segment_id)

    def __contains__(self, camera_id: str) -> bool:
        return camera_id in self._map

    def __len__(self) -> int:
        return len(self._map)

    def items(self):
        return self._map.items()


def resolve_segment(camera_id: str, registry: CameraRegistry) -> str:
    try:
        return registry._map[camera_id]
    except KeyError:
        raise UnknownCamera(f"camera {camera_id!r} is not registered") from None
