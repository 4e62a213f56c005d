"""Driver-facing board messages: composition, text rendering and publishing.

Published records are one JSON object per line, mirroring AlertMessage.
Sinks are ``file://path`` (append) or ``tcp://host:port`` (one connection
per record).
"""
from __future__ import annotations

import json
import logging
import math
import os
import socket
import time
import unicodedata
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .congestion import Bands, CongestionLevel, SegmentState, StreetSegment
from .errors import ConfigError, EndpointUnavailable, NoPath
from .forecast import Forecast
from .routing import RoadGraph, best_route, estimated_delay

log = logging.getLogger(__name__)

DEFAULT_MAX_ENTRIES = 3
DEFAULT_REFRESH_S = 30
NORMAL_TEXT = "TRAFFIC NORMAL"


@dataclass(frozen=True)
class BoardSpec:
    board_id: str
    location: str
    rows: int
    cols: int
    endpoint: str

    def __post_init__(self):
        if self.rows < 1 or self.cols < 8:
            raise ConfigError(f"board {self.board_id}: need rows >= 1 and cols >= 8")
        if not (self.endpoint.startswith("file://") or self.endpoint.startswith("tcp://")):
            raise ConfigError(f"board {self.board_id}: endpoint must be file:// or tcp://")


def load_boards(path) -> List[BoardSpec]:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ConfigError(f"{path}: boards file must be a JSON array")
    try:
        return [
            BoardSpec(str(b["board_id"]), str(b["location"]), int(b["rows"]), int(b["cols"]), str(b["endpoint"]))
            for b in data
        ]
    except KeyError as exc:
        raise ConfigError(f"{path}: board entry missing key {exc.args[0]!r}") from None


@dataclass(frozen=True)
class AlertEntry:
    name: str
    level: CongestionLevel
    delay_s: float
    alt_route: Optional[Tuple[str, ...]] = None
    advisory: bool = False
    anomaly: Optional[str] = None

    def sort_key(self):
        # level desc, anomaly-driven before threshold-driven, live before advisory,
        # delay desc, then name for determinism
        return (-int(self.level), self.anomaly is None, self.advisory, -self.delay_s, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "level": self.level.label,
            "delay_s": self.delay_s,
            "alt_route": list(self.alt_route) if self.alt_route is not None else None,
            "advisory": self.advisory,
            "anomaly": self.anomaly,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AlertEntry":
        alt = d.get("alt_route")
        return cls(d["name"], CongestionLevel.from_label(d["level"]), d["delay_s"],
                   tuple(alt) if alt is not None else None, d.get("advisory", False), d.get("anomaly"))


NORMAL_ENTRY = AlertEntry(NORMAL_TEXT, CongestionLevel.FREE, 0.0)


@dataclass(frozen=True)
class AlertMessage:
    board_id: str
    issued_at: int
    expires_at: int
    entries: Tuple[AlertEntry, ...]

    def __post_init__(self):
        if self.expires_at <= self.issued_at:
            raise ValueError("expires_at must be after issued_at")

    @property
    def severity(self) -> CongestionLevel:
        return max((e.level for e in self.entries), default=CongestionLevel.FREE)

    @property
    def is_normal(self) -> bool:
        return self.entries == (NORMAL_ENTRY,)

    def content_key(self):
        return (self.board_id, self.entries)

    def to_dict(self) -> dict:
        return {
            "board_id": self.board_id,
            "issued_at": self.issued_at,
            "expires_at": self.expires_at,
            "entries": [e.to_dict() for e in self.entries],
            "severity": self.severity.label,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "AlertMessage":
        return cls(d["board_id"], d["issued_at"], d["expires_at"],
                   tuple(AlertEntry.from_dict(e) for e in d["entries"]))


def alternative_route(graph: Optional[RoadGraph], board: BoardSpec, segment_id: str,
                      ratios: Mapping[str, float]) -> Optional[Tuple[str, ...]]:
    """Best route from the board to the segment's downstream node, if it avoids the segment."""
    if graph is None or board.location not in graph.nodes:
        return None
    seg_edges = graph.edges_of_segment(segment_id)
    if not seg_edges:
        return None
    dest = seg_edges[0].target
    if dest == board.location:
        return None
    try:
        route = best_route(graph, board.location, dest, ratios)
    except NoPath:
        return None
    if any(e.segment_id == segment_id for e in route.edges):
        return None
    return tuple(route.nodes)


def compose_message(states: Mapping[str, SegmentState], forecasts: Mapping[str, Forecast],
                    board: BoardSpec, ts: int, segments: Mapping[str, StreetSegment],
                    graph: Optional[RoadGraph] = None,
                    anomalies: Optional[Mapping[str, Sequence[str]]] = None,
                    max_entries: int = DEFAULT_MAX_ENTRIES,
                    refresh_s: float = DEFAULT_REFRESH_S,
                    bands: Bands = Bands()) -> AlertMessage:
    anomalies = anomalies or {}
    ratios = {sid: st.ratio for sid, st in states.items()}
    entries: List[AlertEntry] = []
    for sid in sorted(states):
        st = states[sid]
        seg = segments[sid]
        active = sorted(anomalies.get(sid, ()))
        anomaly = active[0] if active else None
        if st.level == CongestionLevel.OVERCROWDED:
            entries.append(AlertEntry(seg.name, st.level, estimated_delay(seg, st.ratio),
                                      alternative_route(graph, board, sid, ratios), False, anomaly))
            continue
        fc = forecasts.get(sid)
        if fc is not None and fc.advisory:
            predicted_level = bands.lookup(fc.predicted_ratio)
            if predicted_level == CongestionLevel.FREE:
                continue
            entries.append(AlertEntry(seg.name, predicted_level, estimated_delay(seg, fc.predicted_ratio),
                                      alternative_route(graph, board, sid, ratios), True, anomaly))
    entries.sort(key=AlertEntry.sort_key)
    entries = entries[:max_entries] or [NORMAL_ENTRY]
    return AlertMessage(board.board_id, ts, ts + int(round(refresh_s * 1000)), tuple(entries))


def _ascii_upper(text: str) -> str:
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii")
    return "".join(ch if ch.isprintable() else " " for ch in text).upper()


def render_entry(entry: AlertEntry, cols: int) -> str:
    if entry == NORMAL_ENTRY:
        return NORMAL_TEXT[:cols]
    suffix = f" {entry.level.label} +{int(round(entry.delay_s))}s"
    if entry.alt_route and len(entry.alt_route) > 1:
        suffix += f" VIA {entry.alt_route[1]}"
    suffix = _ascii_upper(suffix)
    name = _ascii_upper(entry.name)
    room = cols - len(suffix)
    if room <= 0:
        return (name + suffix)[:cols]
    return name[:room] + suffix


def render_board(message: AlertMessage, rows: int, cols: int) -> List[str]:
    """Exactly ``rows`` lines of at most ``cols`` uppercase ASCII characters."""
    lines = [render_entry(e, cols) for e in message.entries[:rows]]
    lines += [""] * (rows - len(lines))
    return lines


@dataclass(frozen=True)
class Ack:
    board_id: str
    published: bool
    reason: str = "sent"


class Publisher:
    """Delivers messages to one board, suppressing repeats within their validity window."""

    def __init__(self, board: BoardSpec, retries: int = 3, backoff_s: float = 0.05,
                 timeout_s: float = 1.0, sleep: Callable[[float], None] = time.sleep):
        self.board = board
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._sleep = sleep
        self.last: Optional[AlertMessage] = None
        self.published_count = 0
        self.failures = 0

    def should_publish(self, message: AlertMessage) -> bool:
        last = self.last
        if last is None:
            return True
        return message.content_key() != last.content_key() or message.issued_at >= last.expires_at

    def publish(self, message: AlertMessage) -> Ack:
        if not self.should_publish(message):
            return Ack(self.board.board_id, False, "suppressed")
        self._send(message.to_json() + "\n")
        self.last = message
        self.published_count += 1
        return Ack(self.board.board_id, True)

    def _send(self, record: str) -> None:
        endpoint = self.board.endpoint
        if endpoint.startswith("file://"):
            path = endpoint[len("file://"):]
            try:
                with open(path, "a") as fh:
                    fh.write(record)
            except OSError as exc:
                self.failures += 1
                raise EndpointUnavailable(f"{endpoint}: {exc}") from None
            return
        host, _, port = endpoint[len("tcp://"):].rpartition(":")
        last_exc: Optional[Exception] = None
        for attempt in range(self.retries):
            try:
                with socket.create_connection((host, int(port)), timeout=self.timeout_s) as sock:
                    sock.sendall(record.encode())
                return
            except OSError as exc:
                last_exc = exc
                if attempt + 1 < self.retries:
                    self._sleep(self.backoff_s * 2 ** attempt)
        self.failures += 1
        raise EndpointUnavailable(f"{endpoint}: {last_exc}")


def publish(message: AlertMessage, board: BoardSpec, publisher: Optional[Publisher] = None) -> Ack:
    return (publisher or Publisher(board)).publish(message)
