"""Per-segment vehicle counts, sliding-median smoothing and anomaly debounce."""
from __future__ import annotations

import statistics
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

from .errors import EmptyWindow, StaleUpdate
from .ingest import ANOMALY_CLASSES, VEHICLE_CLASSES, Detection, DetectionFrame, ObjectClass

DEFAULT_CONF_THRESHOLD = 0.5
DEFAULT_WINDOW = 5
DEFAULT_K = 3
DEFAULT_N = 5


@dataclass(frozen=True)
class ClassCounts:
    counts: Dict[ObjectClass, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, cls: ObjectClass) -> int:
        return self.counts.get(cls, 0)


def count_vehicles(frame: DetectionFrame, conf_threshold: float = DEFAULT_CONF_THRESHOLD) -> ClassCounts:
    """Instantaneous occupancy: vehicle-class detections at or above the threshold."""
    counts = {c: 0 for c in sorted(VEHICLE_CLASSES, key=lambda c: c.value)}
    for det in frame.detections:
        if det.cls in VEHICLE_CLASSES and det.confidence >= conf_threshold:
            counts[det.cls] += 1
    return ClassCounts(counts)


class CountWindow:
    """Ring of the last ``capacity`` (timestamp_ms, total) pairs for one segment."""

    def __init__(self, segment_id: str, capacity: int = DEFAULT_WINDOW):
        if capacity < 1:
            raise ValueError("window capacity must be >= 1")
        self.segment_id = segment_id
        self.capacity = capacity
        self._entries: deque = deque(maxlen=capacity)

    def push(self, ts: int, total: int) -> None:
        if self._entries and ts <= self._entries[-1][0]:
            raise StaleUpdate(
                f"segment {self.segment_id}: window timestamp {ts} not after {self._entries[-1][0]}"
            )
        self._entries.append((ts, total))

    @property
    def totals(self) -> List[int]:
        return [t for _, t in self._entries]

    @property
    def timestamps(self) -> List[int]:
        return [ts for ts, _ in self._entries]

    def __len__(self) -> int:
        return len(self._entries)


def smooth_count(window) -> float:
    """Median of the window totals; even lengths average the middle pair.

    Accepts a CountWindow or a plain sequence of totals.
    """
    totals = window.totals if isinstance(window, CountWindow) else list(window)
    if not totals:
        raise EmptyWindow("cannot smooth an empty window")
    return float(statistics.median(totals))


@dataclass(frozen=True)
class AnomalyEvent:
    segment_id: str
    cls: ObjectClass
    start_ts: int
    peak_confidence: float

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "class": self.cls.value,
            "start_ts": self.start_ts,
            "peak_confidence": self.peak_confidence,
        }


class AnomalyDebouncer:
    """Streaming k-of-n detector for anomaly classes on one segment.

    An event opens when at least ``k`` of the last ``n`` observations hold the
    class at or above the confidence threshold. It is not re-emitted until the
    condition has been false for at least one observation.
    """

    def __init__(self, segment_id: str, conf_threshold: float = DEFAULT_CONF_THRESHOLD,
                 k: int = DEFAULT_K, n: int = DEFAULT_N):
        if not 1 <= k <= n:
            raise ValueError(f"debounce needs 1 <= k <= n, got k={k} n={n}")
        self.segment_id = segment_id
        self.conf_threshold = conf_threshold
        self.k = k
        self.n = n
        # per class: last n peak confidences (None when absent)
        self._hist: Dict[ObjectClass, deque] = {
            c: deque(maxlen=n) for c in sorted(ANOMALY_CLASSES, key=lambda c: c.value)
        }
        self._open: Dict[ObjectClass, bool] = {c: False for c in self._hist}

    def observe(self, ts: int, detections: Iterable[Detection]) -> List[AnomalyEvent]:
        peaks: Dict[ObjectClass, float] = {}
        for det in detections:
            if det.cls in ANOMALY_CLASSES and det.confidence >= self.conf_threshold:
                peaks[det.cls] = max(peaks.get(det.cls, 0.0), det.confidence)
        events = []
        for cls, hist in self._hist.items():
            hist.append(peaks.get(cls))
            hits = [p for p in hist if p is not None]
            holds = len(hits) >= self.k
            if holds and not self._open[cls]:
                events.append(AnomalyEvent(self.segment_id, cls, ts, max(hits)))
            self._open[cls] = holds
        return events

    @property
    def active(self) -> List[ObjectClass]:
        return [c for c, on in self._open.items() if on]


def detect_anomaly_events(frames: Sequence[DetectionFrame], segment_id: str = "",
                          conf_threshold: float = DEFAULT_CONF_THRESHOLD,
                          k: int = DEFAULT_K, n: int = DEFAULT_N) -> List[AnomalyEvent]:
    deb = AnomalyDebouncer(segment_id, conf_threshold, k, n)
    events: List[AnomalyEvent] = []
    for frame in frames:
        events.extend(deb.observe(frame.timestamp_ms, frame.detections))
    return events
