"""Deterministic synthetic detection streams with ground truth.

Each segment's occupancy follows an M/M/inf process: Poisson arrivals at a
piecewise-constant rate, exponential dwell times. The process starts in its
stationary distribution for the first rate piece, so the long-run mean is
``rate * dwell`` from t=0.

Every (segment, purpose) pair owns its own RNG stream, so adding a segment
leaves the others' outputs unchanged.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CapacityExceeded, ConfigError
from .ingest import BoundingBox, Detection, DetectionFrame, ObjectClass, serialize_frame

SLOT_PX = 64
BOX_W = 48
BOX_H = 32

DEFAULT_CLASS_MIX = {
    "car": 0.70,
    "motorcycle": 0.10,
    "truck": 0.07,
    "bus": 0.05,
    "van": 0.06,
    "other": 0.02,
}


@dataclass(frozen=True)
class RatePiece:
    start_s: float
    rate_per_min: float


@dataclass(frozen=True)
class SegmentProfile:
    segment_id: str
    camera_id: str
    profile: Tuple[RatePiece, ...]
    dwell_s: float

    def rate_at(self, t_s: float) -> float:
        rate = 0.0
        for p in self.profile:
            if p.start_s <= t_s:
                rate = p.rate_per_min
        return rate


@dataclass(frozen=True)
class Incident:
    segment_id: str
    start_s: float
    duration_s: float
    cls: ObjectClass

    def active(self, t_s: float) -> bool:
        return self.start_s <= t_s < self.start_s + self.duration_s


@dataclass(frozen=True)
class NoiseModel:
    p_miss: float = 0.0
    p_false: float = 0.0
    jitter_px: int = 0
    conf_spread: float = 0.0

    def __post_init__(self):
        for name in ("p_miss", "p_false", "conf_spread"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"noise.{name} must be in [0, 1], got {v}")
        if self.jitter_px < 0:
            raise ConfigError("noise.jitter_px must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    duration_s: float
    frame_interval_ms: int
    segments: Tuple[SegmentProfile, ...]
    incidents: Tuple[Incident, ...] = ()
    noise: NoiseModel = NoiseModel()
    image_w: int = 640
    image_h: int = 640
    start_ts_ms: int = 0
    class_mix: Tuple[Tuple[str, float], ...] = tuple(DEFAULT_CLASS_MIX.items())

    @property
    def n_frames(self) -> int:
        return int(self.duration_s * 1000) // self.frame_interval_ms

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            segments = tuple(
                SegmentProfile(
                    segment_id=str(s["segment_id"]),
                    camera_id=str(s.get("camera_id", f"cam-{s['segment_id']}")),
                    profile=tuple(RatePiece(float(p["start_s"]), float(p["rate_per_min"]))
                                  for p in s["profile"]),
                    dwell_s=float(s["dwell_s"]),
                )
                for s in d["segments"]
            )
            incidents = tuple(
                Incident(str(i["segment_id"]), float(i["start_s"]), float(i["duration_s"]),
                         ObjectClass(i["class"]))
                for i in d.get("incidents", [])
            )
            noise = NoiseModel(**d.get("noise", {}))
            cfg = cls(
                seed=int(d["seed"]),
                duration_s=float(d["duration_s"]),
                frame_interval_ms=int(d["frame_interval_ms"]),
                segments=segments,
                incidents=incidents,
                noise=noise,
                image_w=int(d.get("image_w", 640)),
                image_h=int(d.get("image_h", 640)),
                start_ts_ms=int(d.get("start_ts_ms", 0)),
                class_mix=tuple(d.get("class_mix", DEFAULT_CLASS_MIX).items()),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if self.duration_s <= 0 or self.frame_interval_ms <= 0:
            raise ConfigError("duration_s and frame_interval_ms must be positive")
        seg_ids = [s.segment_id for s in self.segments]
        if len(set(seg_ids)) != len(seg_ids):
            raise ConfigError("duplicate segment_id in scenario")
        for s in self.segments:
            if s.dwell_s <= 0:
                raise ConfigError(f"{s.segment_id}: dwell_s must be > 0")
            if not s.profile or s.profile[0].start_s != 0:
                raise ConfigError(f"{s.segment_id}: profile must start at start_s=0")
            if any(p.rate_per_min < 0 for p in s.profile):
                raise ConfigError(f"{s.segment_id}: rates must be >= 0")
            starts = [p.start_s for p in s.profile]
            if starts != sorted(starts):
                raise ConfigError(f"{s.segment_id}: profile pieces must be time-ordered")
        for inc in self.incidents:
            if inc.segment_id not in seg_ids:
                raise ConfigError(f"incident on unknown segment {inc.segment_id!r}")
            if not inc.cls.is_anomaly:
                raise ConfigError(f"incident class must be an anomaly class, got {inc.cls.value}")
            if inc.start_s < 0 or inc.duration_s <= 0 or inc.start_s + inc.duration_s > self.duration_s:
                raise ConfigError("incident interval must lie within the scenario")
        weights = [w for _, w in self.class_mix]
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ConfigError("class_mix weights must be non-negative with positive sum")
        for name, _ in self.class_mix:
            if not ObjectClass(name).is_vehicle:
                raise ConfigError(f"class_mix entry {name!r} is not a vehicle class")


def stream_rng(seed: int, segment_id: str, purpose: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{segment_id}\x00{purpose}".encode()).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def frame_times_s(config: ScenarioConfig) -> np.ndarray:
    return np.arange(config.n_frames) * (config.frame_interval_ms / 1000.0)


def gen_arrivals(config: ScenarioConfig, segment: SegmentProfile,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """True occupancy at every frame time for one segment."""
    if rng is None:
        rng = stream_rng(config.seed, segment.segment_id, "arrivals")
    horizon = config.duration_s
    pieces = list(segment.profile)
    arrivals: List[np.ndarray] = []
    departures: List[np.ndarray] = []

    # stationary start: Poisson(rate * dwell) vehicles with exponential residual dwell
    n0 = rng.poisson(pieces[0].rate_per_min / 60.0 * segment.dwell_s)
    arrivals.append(np.full(n0, -np.inf))
    departures.append(rng.exponential(segment.dwell_s, size=n0))

    for i, piece in enumerate(pieces):
        start = piece.start_s
        end = pieces[i + 1].start_s if i + 1 < len(pieces) else horizon
        end = min(end, horizon)
        rate = piece.rate_per_min / 60.0
        if rate <= 0 or end <= start:
            continue
        n = rng.poisson(rate * (end - start))
        # conditional on the count, Poisson arrival times are iid uniform
        times = np.sort(rng.uniform(start, end, size=n))
        arrivals.append(times)
        departures.append(times + rng.exponential(segment.dwell_s, size=n))

    arr = np.sort(np.concatenate(arrivals))
    dep = np.sort(np.concatenate(departures))
    t = frame_times_s(config)
    return (np.searchsorted(arr, t, side="right") - np.searchsorted(dep, t, side="right")).astype(int)


@dataclass(frozen=True)
class RenderedFrame:
    frame: DetectionFrame
    true_count: int
    detected: int
    misses: int
    false_positives: int


def _grid(image_w: int, image_h: int) -> List[Tuple[int, int]]:
    cols = image_w // SLOT_PX
    rows = image_h // SLOT_PX
    return [(c * SLOT_PX, r * SLOT_PX) for r in range(rows) for c in range(cols)]


def render_detections(true_count: int, active_incidents: Sequence[ObjectClass], noise: NoiseModel,
                      image_w: int, image_h: int, rng: np.random.Generator,
                      camera_id: str = "cam", timestamp_ms: int = 0,
                      class_mix: Sequence[Tuple[str, float]] = tuple(DEFAULT_CLASS_MIX.items()),
                      ) -> RenderedFrame:
    kept = int(rng.binomial(true_count, 1.0 - noise.p_miss)) if true_count > 0 else 0
    spurious = int(rng.poisson(noise.p_false)) if noise.p_false > 0 else 0
    slots = _grid(image_w, image_h)
    needed = kept + spurious + len(active_incidents)
    if true_count > len(slots) or needed > len(slots):
        raise CapacityExceeded(
            f"{max(true_count, needed)} objects but only {len(slots)} grid slots in {image_w}x{image_h}"
        )
    names = [n for n, _ in class_mix]
    weights = np.array([w for _, w in class_mix], dtype=float)
    weights /= weights.sum()

    order = rng.permutation(len(slots))[:needed]
    classes = [ObjectClass(names[i]) for i in rng.choice(len(names), size=kept + spurious, p=weights)]
    classes += list(active_incidents)
    lo = 1.0 - noise.conf_spread
    confs = rng.uniform(lo, 1.0, size=needed) if noise.conf_spread > 0 else np.ones(needed)
    if noise.jitter_px > 0:
        jitter = rng.integers(-noise.jitter_px, noise.jitter_px + 1, size=(needed, 2))
    else:
        jitter = np.zeros((needed, 2), dtype=int)

    dets = []
    for i in range(needed):
        sx, sy = slots[order[i]]
        x = sx + (SLOT_PX - BOX_W) // 2 + int(jitter[i, 0])
        y = sy + (SLOT_PX - BOX_H) // 2 + int(jitter[i, 1])
        x = min(max(x, 0), image_w - BOX_W)
        y = min(max(y, 0), image_h - BOX_H)
        dets.append(Detection(classes[i], round(float(confs[i]), 4), BoundingBox(x, y, BOX_W, BOX_H)))
    frame = DetectionFrame(camera_id, timestamp_ms, image_w, image_h, tuple(dets))
    return RenderedFrame(frame, true_count, kept + spurious, true_count - kept, spurious)


@dataclass
class GroundTruth:
    counts: Dict[str, List[Tuple[int, int]]] = field(default_factory=dict)  # segment -> [(ts, count)]
    incidents: List[dict] = field(default_factory=list)
    records: List[dict] = field(default_factory=list)


def run_scenario(config: ScenarioConfig) -> Tuple[List[str], GroundTruth]:
    """Generate frame lines (time-major, segments in config order) and ground truth."""
    truth = GroundTruth()
    series = {s.segment_id: gen_arrivals(config, s) for s in config.segments}
    render_rngs = {s.segment_id: stream_rng(config.seed, s.segment_id, "render") for s in config.segments}
    times = frame_times_s(config)
    lines: List[str] = []
    for k, t in enumerate(times):
        ts = config.start_ts_ms + k * config.frame_interval_ms
        for seg in config.segments:
            active = [inc.cls for inc in config.incidents
                      if inc.segment_id == seg.segment_id and inc.active(t)]
            count = int(series[seg.segment_id][k])
            rendered = render_detections(count, active, config.noise, config.image_w, config.image_h,
                                         render_rngs[seg.segment_id], seg.camera_id, ts, config.class_mix)
            lines.append(serialize_frame(rendered.frame))
            truth.counts.setdefault(seg.segment_id, []).append((ts, count))
            truth.records.append({
                "type": "count",
                "segment_id": seg.segment_id,
                "camera_id": seg.camera_id,
                "timestamp_ms": ts,
                "count": count,
                "detected": rendered.detected,
                "misses": rendered.misses,
                "false_positives": rendered.false_positives,
            })
    for inc in config.incidents:
        rec = {
            "type": "incident",
            "segment_id": inc.segment_id,
            "class": inc.cls.value,
            "start_ms": config.start_ts_ms + int(round(inc.start_s * 1000)),
            "end_ms": config.start_ts_ms + int(round((inc.start_s + inc.duration_s) * 1000)),
        }
        truth.incidents.append(rec)
        truth.records.append(rec)
    return lines, truth


def write_scenario(config: ScenarioConfig, out_dir) -> Tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    lines, truth = run_scenario(config)
    frames_path = os.path.join(out_dir, "frames.jsonl")
    truth_path = os.path.join(out_dir, "truth.jsonl")
    with open(frames_path, "w") as fh:
        fh.writelines(line + "\n" for line in lines)
    with open(truth_path, "w") as fh:
        fh.writelines(json.dumps(r, separators=(",", ":")) + "\n" for r in truth.records)
    return frames_path, truth_path
