import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import best_path_bruteforce
from trafficwatch.errors import NoPath
from trafficwatch.routing import Edge, RoadGraph, best_route, edge_travel_time, estimated_delay

E300 = Edge("e", "A", "B", 3000.0, 10.0, "seg")


def test_bpr_values():
    assert edge_travel_time(E300, 0.0) == 300.0
    assert edge_travel_time(E300, 1.0) == pytest.approx(345.0)
    assert edge_travel_time(E300, 2.0) == pytest.approx(1020.0)


def test_delay_values():
    assert estimated_delay(E300, 0.0) == 0.0
    assert estimated_delay(E300, 1.0) == pytest.approx(45.0)
    pairs = [(0.2, 0.5), (0.5, 1.0), (1.0, 1.3), (1.3, 3.0)]
    assert all(estimated_delay(E300, a) <= estimated_delay(E300, b) for a, b in pairs)


def diamond():
    # A->B direct is short but its segment is congested; A->C->B is the detour
    edges = [
        Edge("ab", "A", "B", 1000, 10, "short"),
        Edge("ac", "A", "C", 800, 10, "d1"),
        Edge("cb", "C", "B", 800, 10, "d2"),
    ]
    return RoadGraph(["A", "B", "C"], edges)


def as_tuples(graph, ratios):
    return [(e.edge_id, e.source, e.target,
             edge_travel_time(e, ratios.get(e.segment_id, 0.0) if e.segment_id else 0.0))
            for e in graph.edges]


def test_single_edge():
    g = RoadGraph(["A", "B"], [Edge("x", "A", "B", 100, 10)])
    r = best_route(g, "A", "B")
    assert r.edge_ids == ("x",) and r.total_time_s == 10.0 and r.total_length_m == 100.0
    assert r.nodes == ["A", "B"]


def test_diamond_free_flow_takes_short_edge():
    g = diamond()
    r = best_route(g, "A", "B", {})
    assert r.edge_ids == ("ab",)
    assert (r.total_time_s, r.edge_ids) == best_path_bruteforce(as_tuples(g, {}), "A", "B")


def test_diamond_congested_takes_detour():
    g = diamond()
    ratios = {"short": 2.0}
    r = best_route(g, "A", "B", ratios)
    assert r.edge_ids == ("ac", "cb")
    assert (r.total_time_s, r.edge_ids) == best_path_bruteforce(as_tuples(g, ratios), "A", "B")


def test_tie_break_is_lexicographic():
    g = RoadGraph(["A", "B", "C", "D"], [
        Edge("z1", "A", "C", 100, 10), Edge("z2", "C", "B", 100, 10),
        Edge("a1", "A", "D", 100, 10), Edge("a2", "D", "B", 100, 10),
    ])
    assert best_route(g, "A", "B").edge_ids == ("a1", "a2")


def test_no_path_and_unknown_node():
    g = RoadGraph(["A", "B"], [Edge("x", "B", "A", 100, 10)])
    with pytest.raises(NoPath):
        best_route(g, "A", "B")
    with pytest.raises(NoPath):
        best_route(g, "A", "Q")


def test_origin_equals_dest():
    r = best_route(diamond(), "A", "A")
    assert r.edges == () and r.total_time_s == 0.0


def random_graph(rng, n_nodes=None):
    n = n_nodes or rng.randint(2, 8)
    nodes = [f"n{i}" for i in range(n)]
    edges = []
    for i in range(rng.randint(n - 1, n * 3)):
        a, b = rng.sample(nodes, 2)
        seg = f"s{rng.randint(0, 4)}" if rng.random() < 0.8 else None
        edges.append(Edge(f"e{i:02d}", a, b, float(rng.randint(50, 2000)), float(rng.choice([8, 11, 14, 17])), seg))
    ratios = {f"s{k}": rng.choice([0.0, 0.3, 0.8, 1.0, 1.5, 2.0, rng.random() * 3]) for k in range(5)}
    return RoadGraph(nodes, edges), ratios


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_matches_enumeration(seed):
    rng = random.Random(seed)
    g, ratios = random_graph(rng)
    o, d = rng.sample(sorted(g.nodes), 2)
    expected = best_path_bruteforce(as_tuples(g, ratios), o, d)
    if expected is None:
        with pytest.raises(NoPath):
            best_route(g, o, d, ratios)
        return
    r = best_route(g, o, d, ratios)
    assert (r.total_time_s, r.edge_ids) == expected


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.floats(0.01, 3.0))
def test_raising_a_ratio_never_lowers_cost(seed, bump):
    rng = random.Random(seed)
    g, ratios = random_graph(rng)
    target = rng.choice(sorted(ratios))
    raised = dict(ratios, **{target: ratios[target] + bump})
    for o in sorted(g.nodes):
        for d in sorted(g.nodes):
            try:
                before = best_route(g, o, d, ratios).total_time_s
            except NoPath:
                continue
            assert best_route(g, o, d, raised).total_time_s >= before


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_route_totals_are_edge_sums(seed):
    rng = random.Random(seed)
    g, ratios = random_graph(rng)
    o, d = rng.sample(sorted(g.nodes), 2)
    try:
        r = best_route(g, o, d, ratios)
    except NoPath:
        return
    for a, b in zip(r.edges, r.edges[1:]):
        assert a.target == b.source
    times = sum(edge_travel_time(e, ratios.get(e.segment_id, 0.0) if e.segment_id else 0.0) for e in r.edges)
    assert abs(r.total_time_s - times) <= 1e-9 * max(1.0, times)
    assert r.total_length_m == pytest.approx(sum(e.length_m for e in r.edges))


def test_graph_file_roundtrip(tmp_path):
    g = diamond()
    p = tmp_path / "g.json"
    import json
    p.write_text(json.dumps(g.to_dict()))
    g2 = RoadGraph.load(p)
    assert g2.edges == g.edges and g2.nodes == g.nodes
