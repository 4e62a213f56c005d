"""Pipeline wiring: ingest -> counting -> congestion -> forecast -> display.

Frames for one segment are buffered until a later timestamp for that segment
arrives, so cameras sharing a segment are summed at the same instant before
the segment state advances. Frame timestamps are the only clock, which makes
file replay deterministic.
"""
from __future__ import annotations

import json
import logging
import os
import signal
import socket
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .config import RunConfig
from .congestion import Bands, SegmentState, StreetSegment, load_streets, step_segment_state
from .counting import AnomalyDebouncer, CountWindow, count_vehicles, smooth_count
from .display import BoardSpec, Publisher, compose_message, load_boards
from .errors import (
    BoxOutOfBounds,
    ConfigError,
    EndpointUnavailable,
    InvalidValue,
    MalformedRecord,
    StaleFrame,
    TrafficWatchError,
    UnknownCamera,
)
from .forecast import HistoryStore, forecast_segment, history_record
from .ingest import CameraRegistry, MonotonicGuard, parse_frame, resolve_segment, validate_frame
from .routing import RoadGraph

log = logging.getLogger(__name__)

ERROR_KINDS = (
    "malformed",
    "invalid_value",
    "out_of_bounds",
    "stale_frame",
    "unknown_camera",
    "stale_segment",
)


@dataclass
class RunStats:
    frames_in: int = 0
    frames_applied: int = 0
    errors: Counter = field(default_factory=Counter)
    transitions: int = 0
    anomaly_events: int = 0
    published: int = 0
    publish_failures: int = 0

    @property
    def reconciles(self) -> bool:
        return self.frames_in == self.frames_applied + sum(self.errors.values())

    def to_dict(self) -> dict:
        return {
            "frames_in": self.frames_in,
            "frames_applied": self.frames_applied,
            "errors": {k: self.errors.get(k, 0) for k in ERROR_KINDS},
            "transitions": self.transitions,
            "anomaly_events": self.anomaly_events,
            "published": self.published,
            "publish_failures": self.publish_failures,
            "reconciles": self.reconciles,
        }


def _load(what: str, path: str, loader):
    try:
        return loader(path)
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if path in msg else f"{path}: {msg}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None
    except (OSError, TrafficWatchError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{what} file {path}: {exc}") from None


class Engine:
    def __init__(self, config: RunConfig, record_series: bool = False):
        self.config = config
        tun = config.tunables
        self.bands = Bands(tuple(tun.band_edges), tun.hysteresis)
        segments = _load("streets", config.streets, lambda p: load_streets(p, tun.slot_length_m))
        self.segments: Dict[str, StreetSegment] = {s.segment_id: s for s in segments}
        self.registry: CameraRegistry = _load("cameras", config.cameras, CameraRegistry.load)
        for cam, seg in self.registry.items():
            if seg not in self.segments:
                raise ConfigError(f"{config.cameras}: camera {cam!r} maps to unknown segment {seg!r}")
        self.boards: List[BoardSpec] = _load("boards", config.boards, load_boards)
        self.graph: Optional[RoadGraph] = None
        if config.graph:
            self.graph = _load("graph", config.graph, RoadGraph.load)
            for b in self.boards:
                if b.location not in self.graph.nodes:
                    raise ConfigError(f"{config.boards}: board {b.board_id!r} location {b.location!r} not in graph")
        self.history = HistoryStore(tun.retention_days, tun.timezone)
        _load("history", config.history, self.history.load)

        self.states = {sid: SegmentState(sid) for sid in sorted(self.segments)}
        self.windows = {sid: CountWindow(sid, tun.window) for sid in self.segments}
        self.debouncers = {
            sid: AnomalyDebouncer(sid, tun.conf_threshold, tun.debounce_k, tun.debounce_n)
            for sid in self.segments
        }
        self.guard = MonotonicGuard()
        self.camera_counts: Dict[str, int] = {}
        self.pending: Dict[str, Tuple[int, list]] = {}
        self.last_history_ts: Dict[str, int] = {}
        self.publishers = {b.board_id: Publisher(b) for b in self.boards}
        self.stats = RunStats()
        self.last_ts: Optional[int] = None
        self.record_series = record_series
        self.series: Dict[str, List[Tuple[int, float]]] = {sid: [] for sid in self.segments}
        self.transition_records: List[dict] = []

        for p in (config.transitions_log, config.anomaly_log, config.history):
            d = os.path.dirname(p)
            if d:
                os.makedirs(d, exist_ok=True)
        self._tlog = open(config.transitions_log, "w")
        self._alog = open(config.anomaly_log, "w")
        self._hlog = open(config.history, "a")

    # -- ingestion -----------------------------------------------------------

    def process_line(self, line) -> None:
        if isinstance(line, str):
            line = line.encode()
        if not line.strip():
            return
        self.stats.frames_in += 1
        try:
            frame = validate_frame(parse_frame(line))
            segment_id = resolve_segment(frame.camera_id, self.registry)
            self.guard.check(frame)
            pending = self.pending.get(segment_id)
            if pending is not None and frame.timestamp_ms < pending[0]:
                # in order for its camera, but a sibling camera already moved the segment on
                self.stats.errors["stale_segment"] += 1
                log.warning("segment %s: frame from %s at %d behind %d", segment_id,
                            frame.camera_id, frame.timestamp_ms, pending[0])
                return
        except MalformedRecord:
            self.stats.errors["malformed"] += 1
            return
        except InvalidValue:
            self.stats.errors["invalid_value"] += 1
            return
        except BoxOutOfBounds:
            self.stats.errors["out_of_bounds"] += 1
            return
        except UnknownCamera:
            self.stats.errors["unknown_camera"] += 1
            return
        except StaleFrame as exc:
            self.stats.errors["stale_frame"] += 1
            log.warning("%s", exc)
            return

        ts = frame.timestamp_ms
        if pending is not None and ts > pending[0]:
            self._flush(segment_id)
            pending = None
        if pending is None:
            pending = (ts, [])
            self.pending[segment_id] = pending
        pending[1].extend(frame.detections)
        self.camera_counts[frame.camera_id] = count_vehicles(frame, self.config.tunables.conf_threshold).total
        self.stats.frames_applied += 1

    def _flush(self, segment_id: str) -> None:
        ts, detections = self.pending.pop(segment_id)
        tun = self.config.tunables
        total = sum(self.camera_counts.get(c, 0) for c in self.registry.cameras_of(segment_id))
        window = self.windows[segment_id]
        window.push(ts, total)
        smoothed = smooth_count(window)
        state, transition = step_segment_state(self.states[segment_id], smoothed, ts,
                                               self.segments[segment_id], self.bands)
        self.states[segment_id] = state
        if transition is not None:
            rec = transition.to_dict()
            self._tlog.write(json.dumps(rec, separators=(",", ":")) + "\n")
            self.transition_records.append(rec)
            self.stats.transitions += 1
            log.info("transition %s", rec)
        for event in self.debouncers[segment_id].observe(ts, detections):
            self._alog.write(json.dumps(event.to_dict(), separators=(",", ":")) + "\n")
            self.stats.anomaly_events += 1
        last_h = self.last_history_ts.get(segment_id)
        if last_h is None or ts - last_h >= tun.history_interval_s * 1000:
            self.history.add(segment_id, ts, state.ratio)
            self._hlog.write(history_record(segment_id, ts, state.ratio) + "\n")
            self.last_history_ts[segment_id] = ts
        if self.record_series:
            self.series[segment_id].append((ts, state.ratio))
        self.last_ts = ts if self.last_ts is None else max(self.last_ts, ts)
        self._refresh_boards(ts)

    # -- display -------------------------------------------------------------

    def _refresh_boards(self, ts: int) -> None:
        tun = self.config.tunables
        forecasts = {
            sid: forecast_segment(self.history, sid, st.ratio, ts, tun.alpha, tun.advisory_edge)
            for sid, st in self.states.items()
        }
        anomalies = {sid: [c.value for c in d.active] for sid, d in self.debouncers.items()}
        for board in self.boards:
            msg = compose_message(self.states, forecasts, board, ts, self.segments, self.graph,
                                  anomalies, tun.max_entries, tun.refresh_s, self.bands)
            self._publish(board, msg)

    def _publish(self, board: BoardSpec, msg) -> None:
        pub = self.publishers[board.board_id]
        try:
            ack = pub.publish(msg)
        except EndpointUnavailable as exc:
            # superseded by the next refresh; never stalls ingestion
            self.stats.publish_failures += 1
            log.warning("board %s: %s", board.board_id, exc)
            return
        if ack.published:
            self.stats.published += 1

    # -- lifecycle -----------------------------------------------------------

    def finish(self) -> RunStats:
        for sid in sorted(self.pending, key=lambda s: (self.pending[s][0], s)):
            self._flush(sid)
        ts = self.last_ts if self.last_ts is not None else 0
        for board in self.boards:
            if self.publishers[board.board_id].last is None:
                tun = self.config.tunables
                msg = compose_message(self.states, {}, board, ts, self.segments, self.graph,
                                      {}, tun.max_entries, tun.refresh_s, self.bands)
                self._publish(board, msg)
        self.close()
        return self.stats

    def close(self) -> None:
        for fh in (self._tlog, self._alog, self._hlog):
            if not fh.closed:
                fh.close()


def run_file(engine: Engine, path: str) -> RunStats:
    with open(path, "rb") as fh:
        for line in fh:
            engine.process_line(line)
    return engine.finish()


def serve_tcp(engine: Engine, host: str, port: int, stop: Optional[threading.Event] = None,
              ready: Optional[threading.Event] = None) -> RunStats:
    """Accept JSONL producers one connection at a time until ``stop`` is set or SIGINT/SIGTERM."""
    stop = stop or threading.Event()
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: stop.set())
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen()
        srv.settimeout(0.2)
        engine.bound_port = srv.getsockname()[1]
        if ready is not None:
            ready.set()
        while not stop.is_set():
            try:
                conn, _ = srv.accept()
            except socket.timeout:
                continue
            with conn:
                conn.settimeout(0.2)
                buf = b""
                while not stop.is_set():
                    try:
                        chunk = conn.recv(65536)
                    except socket.timeout:
                        continue
                    if not chunk:
                        break
                    buf += chunk
                    *lines, buf = buf.split(b"\n")
                    for line in lines:
                        engine.process_line(line)
                if buf.strip():
                    engine.process_line(buf)
    return engine.finish()


def run(config: RunConfig, record_series: bool = False) -> Tuple[Engine, RunStats]:
    engine = Engine(config, record_series=record_series)
    if config.input_is_file:
        stats = run_file(engine, config.input_path)
    else:
        host, _, port = config.input[len("tcp://"):].rpartition(":")
        stats = serve_tcp(engine, host, int(port))
    return engine, stats
