"""Time-of-day occupancy baselines and short-horizon prediction.

History is bucketed by (weekday, 15-minute slot). The prediction for the next
bucket is a convex blend of the current ratio and that bucket's historical
mean.
"""
from __future__ import annotations

import json
import os
from collections import defaultdict, deque
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, Iterable, Optional, Tuple, Union
from zoneinfo import ZoneInfo

from .errors import MalformedRecord, NoHistory

SLOT_SECONDS = 900
SLOTS_PER_DAY = 86400 // SLOT_SECONDS
DEFAULT_RETENTION_DAYS = 28
DEFAULT_ALPHA = 0.5
DEFAULT_ADVISORY_EDGE = 1.0

Bucket = Tuple[int, int]  # (weekday 0=Mon..6=Sun, slot 0..95)
WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


def bucket_of(ts_ms: int, tz: str = "UTC", slot_seconds: int = SLOT_SECONDS) -> Bucket:
    zone = timezone.utc if tz == "UTC" else ZoneInfo(tz)
    dt = datetime.fromtimestamp(ts_ms / 1000, tz=zone)
    seconds = dt.hour * 3600 + dt.minute * 60 + dt.second
    return dt.weekday(), seconds // slot_seconds


def next_bucket(bucket: Bucket, slot_seconds: int = SLOT_SECONDS) -> Bucket:
    day, slot = bucket
    slot += 1
    if slot >= 86400 // slot_seconds:
        return (day + 1) % 7, 0
    return day, slot


class HistoryStore:
    """Per-segment, per-bucket occupancy samples with time-based retention.

    Samples older than ``retention_days`` relative to the newest sample in
    the same bucket are evicted on insert.
    """

    def __init__(self, retention_days: int = DEFAULT_RETENTION_DAYS, tz: str = "UTC",
                 slot_seconds: int = SLOT_SECONDS):
        self.retention_ms = retention_days * 86400 * 1000
        self.tz = tz
        self.slot_seconds = slot_seconds
        self._data: Dict[str, Dict[Bucket, deque]] = defaultdict(lambda: defaultdict(deque))

    def add(self, segment_id: str, ts_ms: int, ratio: float) -> None:
        if ratio < 0:
            raise ValueError(f"ratio must be >= 0, got {ratio}")
        samples = self._data[segment_id][bucket_of(ts_ms, self.tz, self.slot_seconds)]
        samples.append((ts_ms, ratio))
        if len(samples) > 1 and samples[-2][0] > ts_ms:
            # out-of-order replay; keep the deque time-sorted
            ordered = sorted(samples)
            samples.clear()
            samples.extend(ordered)
        horizon = samples[-1][0] - self.retention_ms
        while samples and samples[0][0] < horizon:
            samples.popleft()

    def samples(self, segment_id: str, bucket: Bucket) -> list:
        seg = self._data.get(segment_id)
        if not seg or bucket not in seg:
            return []
        return [r for _, r in seg[bucket]]

    def timestamps(self, segment_id: str, bucket: Bucket) -> list:
        seg = self._data.get(segment_id)
        if not seg or bucket not in seg:
            return []
        return [t for t, _ in seg[bucket]]

    def load(self, path: Union[str, os.PathLike]) -> int:
        """Replay an append-only history file; returns the number of records."""
        n = 0
        if not os.path.exists(path):
            return 0
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self.add(rec["segment_id"], int(rec["ts"]), float(rec["ratio"]))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise MalformedRecord(f"{path}:{lineno}: bad history record ({exc})") from None
                n += 1
        return n


def history_record(segment_id: str, ts_ms: int, ratio: float) -> str:
    return json.dumps({"segment_id": segment_id, "ts": ts_ms, "ratio": ratio}, separators=(",", ":"))


def baseline_ratio(store: HistoryStore, segment_id: str, bucket: Bucket) -> float:
    samples = store.samples(segment_id, bucket)
    if not samples:
        raise NoHistory(f"no history for {segment_id} in bucket {bucket}")
    return sum(samples) / len(samples)


def predict_ratio(current: float, baseline_next: float, alpha: float = DEFAULT_ALPHA) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return alpha * current + (1.0 - alpha) * baseline_next


@dataclass(frozen=True)
class Forecast:
    segment_id: str
    horizon_s: int
    predicted_ratio: float
    advisory: bool


def forecast_segment(store: HistoryStore, segment_id: str, current_ratio: float, ts_ms: int,
                     alpha: float = DEFAULT_ALPHA,
                     advisory_edge: float = DEFAULT_ADVISORY_EDGE) -> Forecast:
    """Next-bucket forecast; without history the current ratio is carried forward."""
    nxt = next_bucket(bucket_of(ts_ms, store.tz, store.slot_seconds), store.slot_seconds)
    try:
        predicted = predict_ratio(current_ratio, baseline_ratio(store, segment_id, nxt), alpha)
    except NoHistory:
        predicted = current_ratio
    return Forecast(segment_id, store.slot_seconds, predicted, predicted >= advisory_edge)
