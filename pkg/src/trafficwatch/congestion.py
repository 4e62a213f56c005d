"""Capacity thresholds, occupancy ratios and congestion levels with hysteresis."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple, Union

from .errors import ConfigError, InvalidGeometry, StaleUpdate, ZeroThreshold

# average vehicle length 4.5 m + jam headway 2.5 m
DEFAULT_SLOT_LENGTH_M = 7.0
DEFAULT_BAND_EDGES = (0.5, 0.8, 1.0)
DEFAULT_HYSTERESIS = 0.05


class CongestionLevel(IntEnum):
    FREE = 0
    MODERATE = 1
    HEAVY = 2
    OVERCROWDED = 3

    @property
    def label(self) -> str:
        return self.name

    @classmethod
    def from_label(cls, label: str) -> "CongestionLevel":
        return cls[label.upper()]


@dataclass(frozen=True)
class StreetSegment:
    segment_id: str
    name: str
    lanes: int
    length_m: float
    free_flow_speed_mps: float
    threshold: int

    def __post_init__(self):
        if self.lanes < 1:
            raise InvalidGeometry(f"{self.segment_id}: lanes must be >= 1")
        if not self.length_m > 0:
            raise InvalidGeometry(f"{self.segment_id}: length_m must be > 0")
        if not self.free_flow_speed_mps > 0:
            raise InvalidGeometry(f"{self.segment_id}: free_flow_speed_mps must be > 0")
        if self.threshold < 1:
            raise ZeroThreshold(f"{self.segment_id}: threshold must be >= 1")


def capacity_threshold(lanes: int, length_m: float, slot_length_m: float = DEFAULT_SLOT_LENGTH_M) -> int:
    """Jam-density capacity: ``lanes * floor(length_m / slot_length_m)``, at least 1."""
    if lanes < 1 or not length_m > 0 or not slot_length_m > 0:
        raise InvalidGeometry(
            f"need lanes >= 1 and positive lengths, got lanes={lanes} length_m={length_m}"
        )
    return max(1, int(lanes) * math.floor(length_m / slot_length_m))


def occupancy_ratio(smoothed_count: float, threshold: int) -> float:
    if threshold < 1:
        raise ZeroThreshold(f"threshold must be >= 1, got {threshold}")
    return smoothed_count / threshold


@dataclass(frozen=True)
class Bands:
    """Lower edges of Moderate, Heavy and Overcrowded plus the downward margin."""

    edges: Tuple[float, float, float] = DEFAULT_BAND_EDGES
    hysteresis: float = DEFAULT_HYSTERESIS

    def __post_init__(self):
        if len(self.edges) != 3 or list(self.edges) != sorted(self.edges) or self.edges[0] <= 0:
            raise ValueError(f"band edges must be three increasing positive values, got {self.edges}")
        if self.hysteresis < 0:
            raise ValueError("hysteresis margin must be >= 0")

    def lookup(self, ratio: float, offset: float = 0.0) -> CongestionLevel:
        level = CongestionLevel.FREE
        for i, edge in enumerate(self.edges, start=1):
            if ratio >= edge - offset:
                level = CongestionLevel(i)
        return level


def classify_level(ratio: float, previous: CongestionLevel = CongestionLevel.FREE,
                   bands: Bands = Bands()) -> CongestionLevel:
    """Band lookup going up; going down only once the ratio clears edge - margin."""
    up = bands.lookup(ratio)
    sticky = bands.lookup(ratio, offset=bands.hysteresis)
    return max(up, min(CongestionLevel(previous), sticky))


@dataclass(frozen=True)
class SegmentState:
    segment_id: str
    smoothed_count: float = 0.0
    ratio: float = 0.0
    level: CongestionLevel = CongestionLevel.FREE
    since_ts: Optional[int] = None
    updated_ts: Optional[int] = None

    @property
    def overcrowded(self) -> bool:
        return self.level == CongestionLevel.OVERCROWDED


@dataclass(frozen=True)
class Transition:
    ts: int
    segment_id: str
    from_level: CongestionLevel
    to_level: CongestionLevel
    ratio: float

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "segment_id": self.segment_id,
            "from": self.from_level.label,
            "to": self.to_level.label,
            "ratio": self.ratio,
        }


def step_segment_state(state: SegmentState, smoothed_count: float, ts: int,
                       segment: StreetSegment, bands: Bands = Bands()
                       ) -> Tuple[SegmentState, Optional[Transition]]:
    if state.updated_ts is not None and ts <= state.updated_ts:
        raise StaleUpdate(f"segment {state.segment_id}: update at {ts} not after {state.updated_ts}")
    ratio = occupancy_ratio(smoothed_count, segment.threshold)
    level = classify_level(ratio, state.level, bands)
    transition = None
    since = state.since_ts if state.since_ts is not None else ts
    if level != state.level:
        transition = Transition(ts, state.segment_id, state.level, level, ratio)
        since = ts
    new = replace(state, smoothed_count=smoothed_count, ratio=ratio, level=level,
                  since_ts=since, updated_ts=ts)
    return new, transition


def segment_from_dict(obj: dict, slot_length_m: float = DEFAULT_SLOT_LENGTH_M) -> StreetSegment:
    try:
        lanes = int(obj["lanes"])
        length_m = float(obj["length_m"])
        threshold = obj.get("threshold")
        if threshold is None:
            threshold = capacity_threshold(lanes, length_m, slot_length_m)
        return StreetSegment(
            segment_id=str(obj["segment_id"]),
            name=str(obj.get("name", obj["segment_id"])),
            lanes=lanes,
            length_m=length_m,
            free_flow_speed_mps=float(obj["free_flow_speed_mps"]),
            threshold=int(threshold),
        )
    except KeyError as exc:
        raise ConfigError(f"street entry missing key {exc.args[0]!r}: {obj!r}") from None


def load_streets(path: Union[str, os.PathLike],
                 slot_length_m: float = DEFAULT_SLOT_LENGTH_M) -> List[StreetSegment]:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ConfigError(f"{path}: streets file must be a JSON array")
    segments = [segment_from_dict(o, slot_length_m) for o in data]
    ids = [s.segment_id for s in segments]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{path}: duplicate segment_id")
    return segments
