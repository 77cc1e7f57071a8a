"""Region graph construction, counting numbers, and poset structure."""
from __future__ import annotations

import warnings
from fractions import Fraction

import numpy as np
import pytest

from kikuchi import (
    GraphError,
    Region,
    RegionGraph,
    build_bethe,
    build_cvm,
    is_singly_connected,
    load_region_graph,
    per_variable_counting_sums,
    recompute_overcounts,
    save_region_graph,
)

PLAQUETTES_3X3 = [(0, 1, 3, 4), (1, 2, 4, 5), (3, 4, 6, 7), (4, 5, 7, 8)]


def test_bethe_triangle_counts():
    g = build_bethe([(0, 1), (0, 2), (1, 2)], 3)
    assert len(g.outer_ids) == 3
    counts = {g.by_id[b].vars: g.by_id[b].overcount for b in g.subset_ids}
    assert counts == {(0,): -1, (1,): -1, (2,): -1}
    assert set(g.neg_ids) == set(g.subset_ids)
    assert g.pos_ids == () and g.zero_ids == ()


def test_bethe_single_membership_variable_has_zero_count():
    g = build_bethe([(0, 1), (1, 2), (3, 4)], 5)
    counts = {g.by_id[b].vars: g.by_id[b].overcount for b in g.subset_ids}
    assert counts == {(0,): 0, (1,): -1, (2,): 0, (3,): 0, (4,): 0}
    assert len(g.zero_ids) == 4


def test_bethe_singleton_outer_not_duplicated():
    g = build_bethe([(0, 1), (2,)], 3)
    assert len(g.outer_ids) == 2
    subset_vars = {g.by_id[b].vars for b in g.subset_ids}
    assert subset_vars == {(0,), (1,)}


def test_plaquette_cvm_counts_and_structure():
    g = build_cvm(PLAQUETTES_3X3, 9)
    by_vars = {r.vars: r for r in g.regions}
    assert len(g.regions) == 9
    for edge in [(1, 4), (3, 4), (4, 5), (4, 7)]:
        assert by_vars[edge].overcount == -1
    assert by_vars[(4,)].overcount == 1
    assert [g.by_id[b].vars for b in g.pos_ids] == [(4,)]
    sums = per_variable_counting_sums(g)
    assert all(s == 1 for s in sums.values())
    # the center is a direct intersection of diagonally opposite plaquettes
    center = next(b for b in g.subset_ids if g.by_id[b].vars == (4,))
    assert center in g.direct_intersection_ids
    # and its Hasse parents are the four edge regions, not the plaquettes
    parents = {p for p, c in g.hasse_edges if c == center}
    edge_ids = {b for b in g.subset_ids if len(g.by_id[b].vars) == 2}
    assert parents == edge_ids
    # every containing outer is still tracked for the center
    assert len(g.containing_outers[center]) == 4


def test_cvm_closes_under_repeated_intersection():
    # {3} only appears as an intersection of intersections
    g = build_cvm([(0, 1, 2, 3), (2, 3, 4, 5), (0, 3, 4, 6)], 7)
    varsets = {r.vars for r in g.regions}
    assert (2, 3) in varsets and (0, 3) in varsets and (3, 4) in varsets
    assert (3,) in varsets


def test_recompute_overcounts_matches_construction():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(4, 9))
        k = int(rng.integers(2, 6))
        clusters = []
        for _ in range(k):
            size = int(rng.integers(2, min(n, 4) + 1))
            clusters.append(tuple(np.sort(rng.choice(n, size=size, replace=False))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = build_cvm(clusters, n)
        rec = recompute_overcounts(g)
        for r in g.regions:
            assert rec[r.id] == r.overcount


def test_bethe_per_variable_sums_are_one():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(3, 8))
        k = min(int(rng.integers(2, 7)), n * (n - 1) // 2)
        clusters = set()
        while len(clusters) < k:
            pair = rng.choice(n, size=2, replace=False)
            clusters.add(tuple(np.sort(pair)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = build_bethe(sorted(clusters), n)
        sums = per_variable_counting_sums(g)
        for v in sorted({u for c in clusters for u in c}):
            assert sums[v] == 1


def test_contained_cluster_absorbed_with_warning():
    with pytest.warns(UserWarning):
        g = build_cvm([(0, 1, 2), (0, 1), (0, 1, 2)], 3)
    assert len(g.outer_ids) == 1


def test_cluster_validation_errors():
    with pytest.raises(GraphError):
        build_cvm([()], 3)
    with pytest.raises(GraphError):
        build_cvm([(0, 5)], 3)
    with pytest.raises(GraphError):
        build_cvm([], 3)


def test_region_validation():
    with pytest.raises(GraphError):
        Region(0, (1, 0), Fraction(1), "outer")
    with pytest.raises(GraphError):
        Region(0, (), Fraction(1), "outer")
    with pytest.raises(GraphError):
        Region(0, (0,), Fraction(2), "outer")
    with pytest.raises(GraphError):
        Region(0, (0,), Fraction(1), "middle")


def test_duplicate_variable_sets_rejected():
    regions = [
        Region(0, (0, 1), Fraction(1), "outer"),
        Region(1, (0, 1), Fraction(-1), "subset"),
    ]
    with pytest.raises(GraphError):
        RegionGraph(regions)


def test_strict_mode_requires_containing_outer():
    regions = [
        Region(0, (0, 1), Fraction(1), "outer"),
        Region(1, (2,), Fraction(-1), "subset"),
    ]
    with pytest.raises(GraphError):
        RegionGraph(regions)
    g = RegionGraph(regions, strict=False)
    assert g.containing_outers[1] == ()


def test_singly_connected():
    chain = build_bethe([(0, 1), (1, 2), (2, 3)], 4)
    assert is_singly_connected(chain)
    triangle = build_bethe([(0, 1), (0, 2), (1, 2)], 3)
    assert not is_singly_connected(triangle)
    forest = build_bethe([(0, 1), (1, 2), (3, 4)], 5)
    assert is_singly_connected(forest)


def test_plaquette_graph_not_singly_connected():
    assert not is_singly_connected(build_cvm(PLAQUETTES_3X3, 9))


def test_save_load_round_trip(tmp_path):
    g = build_cvm(PLAQUETTES_3X3, 9)
    path = tmp_path / "regions.txt"
    save_region_graph(g, path)
    h = load_region_graph(path)
    assert len(h.regions) == len(g.regions)
    for r, s in zip(g.regions, h.regions):
        assert (r.id, r.vars, r.overcount, r.kind) == (s.id, s.vars, s.overcount, s.kind)
    assert h.hasse_edges == g.hasse_edges


def test_load_fractional_counts(tmp_path):
    path = tmp_path / "regions.txt"
    path.write_text(
        "0 outer 1 0 1 2\n"
        "1 subset -1/2 0 1\n"
        "edge 0 1\n"
    )
    g = load_region_graph(path)
    assert g.by_id[1].overcount == Fraction(-1, 2)


def test_load_malformed_region_line(tmp_path):
    path = tmp_path / "regions.txt"
    path.write_text("0 outer 1\n")
    with pytest.raises(GraphError):
        load_region_graph(path)
