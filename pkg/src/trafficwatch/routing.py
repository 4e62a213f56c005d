"""Congestion-aware travel times and best-route search on a directed road graph."""
from __future__ import annotations

import heapq
import json
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import ConfigError, NoPath

BPR_A = 0.15
BPR_B = 4


@dataclass(frozen=True)
class Edge:
    edge_id: str
    source: str
    target: str
    length_m: float
    free_flow_speed_mps: float
    segment_id: Optional[str] = None

    def __post_init__(self):
        if not self.length_m > 0 or not self.free_flow_speed_mps > 0:
            raise ConfigError(f"edge {self.edge_id}: length and speed must be positive")

    @property
    def free_flow_time(self) -> float:
        return self.length_m / self.free_flow_speed_mps


class RoadGraph:
    def __init__(self, nodes: Iterable[str], edges: Iterable[Edge]):
        self.nodes = frozenset(nodes)
        self.edges: Tuple[Edge, ...] = tuple(sorted(edges, key=lambda e: e.edge_id))
        ids = [e.edge_id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate edge_id in graph")
        self._out: Dict[str, List[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            if e.source not in self.nodes or e.target not in self.nodes:
                raise ConfigError(f"edge {e.edge_id}: endpoint not in node set")
            self._out[e.source].append(e)

    def out_edges(self, node: str) -> List[Edge]:
        return self._out[node]

    def edges_of_segment(self, segment_id: str) -> List[Edge]:
        return [e for e in self.edges if e.segment_id == segment_id]

    @classmethod
    def from_dict(cls, data: Mapping) -> "RoadGraph":
        try:
            edges = [
                Edge(
                    edge_id=str(e["edge_id"]),
                    source=str(e["from"]),
                    target=str(e["to"]),
                    length_m=float(e["length_m"]),
                    free_flow_speed_mps=float(e["free_flow_speed_mps"]),
                    segment_id=e.get("segment_id"),
                )
                for e in data["edges"]
            ]
            return cls([str(n) for n in data["nodes"]], edges)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"graph: malformed entry ({exc})") from None

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "RoadGraph":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "nodes": sorted(self.nodes),
            "edges": [
                {
                    "edge_id": e.edge_id, "from": e.source, "to": e.target,
                    "segment_id": e.segment_id, "length_m": e.length_m,
                    "free_flow_speed_mps": e.free_flow_speed_mps,
                }
                for e in self.edges
            ],
        }


def edge_travel_time(edge, ratio: float = 0.0, a: float = BPR_A, b: float = BPR_B) -> float:
    """BPR volume-delay: ``t0 * (1 + a * ratio**b)`` with ``t0 = length / speed``.

    Works for anything with ``length_m`` and ``free_flow_speed_mps``, including
    StreetSegment.
    """
    t0 = edge.length_m / edge.free_flow_speed_mps
    return t0 * (1.0 + a * ratio ** b)


def estimated_delay(edge, ratio: float = 0.0, a: float = BPR_A, b: float = BPR_B) -> float:
    t0 = edge.length_m / edge.free_flow_speed_mps
    return max(0.0, edge_travel_time(edge, ratio, a, b) - t0)


@dataclass(frozen=True)
class Route:
    edges: Tuple[Edge, ...]
    total_time_s: float
    total_length_m: float

    @property
    def edge_ids(self) -> Tuple[str, ...]:
        return tuple(e.edge_id for e in self.edges)

    @property
    def nodes(self) -> List[str]:
        if not self.edges:
            return []
        return [self.edges[0].source] + [e.target for e in self.edges]


def _ratio_of(edge: Edge, ratios: Mapping[str, float]) -> float:
    if edge.segment_id is None:
        return 0.0
    return ratios.get(edge.segment_id, 0.0)


def route_from_edges(edges: Sequence[Edge], ratios: Mapping[str, float]) -> Route:
    time = 0.0
    length = 0.0
    for e in edges:
        time += edge_travel_time(e, _ratio_of(e, ratios))
        length += e.length_m
    return Route(tuple(edges), time, length)


def best_route(graph: RoadGraph, origin: str, dest: str,
               ratios: Optional[Mapping[str, float]] = None) -> Route:
    """Minimum travel-time route; ties go to the lexicographically smallest edge_id sequence."""
    ratios = dict(ratios or {})
    for node in (origin, dest):
        if node not in graph.nodes:
            raise NoPath(f"node {node!r} not in graph")
    # labels are (cost, edge_id path); with positive weights the first pop of a
    # node carries its minimal label
    heap: List[Tuple[float, Tuple[str, ...], str, Tuple[Edge, ...]]] = [(0.0, (), origin, ())]
    settled = set()
    while heap:
        cost, ids, node, path = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == dest:
            return route_from_edges(path, ratios)
        for e in graph.out_edges(node):
            if e.target in settled:
                continue
            heapq.heappush(
                heap,
                (cost + edge_travel_time(e, _ratio_of(e, ratios)), ids + (e.edge_id,), e.target, path + (e,)),
            )
    raise NoPath(f"no path from {origin!r} to {dest!r}")
