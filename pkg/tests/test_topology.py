import itertools

import numpy as np
import pytest
from scipy.stats import chisquare

from vipsim.topology import (Catalog, DuplicateLinkError, MissingReverseLinkError, NonPositiveCapacityError,
                             TopologyParseError, UnknownNodeError, assign_sources, bundled_topologies,
                             load_topology, parse_topology)

MB = 1e6


def test_two_node_edge_expands_to_both_directions():
    topo = parse_topology("nodes 2\n0 1 500\n")
    assert topo.num_nodes == 2
    assert topo.links == ((0, 1), (1, 0))
    assert topo.capacity_of(0, 1) == topo.capacity_of(1, 0) == 500 * MB


def test_non_positive_capacity_names_the_line():
    with pytest.raises(NonPositiveCapacityError) as err:
        parse_topology("nodes 2\n0 1 -3\n")
    assert err.value.lineno == 2


@pytest.mark.parametrize("text, exc, line", [
    ("nodes 2\n0 1 5\n1 0 5\n", DuplicateLinkError, 3),
    ("nodes 2\n0 7 5\n", UnknownNodeError, 2),
    ("nodes 2\nlink 0 1 5\n", MissingReverseLinkError, None),
])
def test_parse_errors_are_distinct(text, exc, line):
    with pytest.raises(exc) as err:
        parse_topology(text)
    assert isinstance(err.value, TopologyParseError)
    if line is not None:
        assert err.value.lineno == line


def test_comments_directed_overrides_and_cache_lines():
    text = """# a comment
nodes 3
0 1 100   # trailing comment
1 2 100
link 2 1 40
cache 1 1000
"""
    topo = parse_topology(text)
    assert topo.capacity_of(1, 2) == 100 * MB
    assert topo.capacity_of(2, 1) == 40 * MB
    assert topo.cache_size[1] == 8000.0  # bits
    assert topo.cache_size[0] == 0.0


@pytest.mark.parametrize("name, nodes", [("geant", 22), ("dtelekom", 68), ("line4", 4), ("ring5", 5)])
def test_bundled_topologies(name, nodes):
    topo = load_topology(name)
    assert topo.num_nodes == nodes
    assert topo.is_connected()
    assert name in bundled_topologies()
    for a, b in topo.links:
        assert topo.has_link(b, a)
        assert topo.capacity_of(b, a) > 0


def test_c_max_matches_exhaustive_max():
    topo = parse_topology("nodes 3\n0 1 100\n1 2 300\nlink 2 1 50\n")
    D = 25 * MB
    brute = max(topo.capacity_of(a, b) / D for a, b in topo.links)
    assert topo.c_max(D) == brute
    assert np.all(np.isfinite(topo.normalized_capacity(D)))
    assert np.all(topo.normalized_capacity(D) > 0)


def test_reverse_capacity_lookup():
    topo = parse_topology("nodes 2\n0 1 100\nlink 1 0 30\n")
    l = topo.link_index(0, 1)
    assert topo.reverse_capacity[l] == topo.capacity_of(1, 0) == 30 * MB


def test_hops_and_next_hop_on_line():
    topo = load_topology("line4")
    assert topo.hops[0, 3] == 3
    assert topo.next_hop[0, 3] == 1
    assert topo.next_hop[3, 0] == 2
    assert topo.next_hop[2, 2] == -1


def test_next_hop_is_on_a_shortest_path_everywhere():
    topo = load_topology("geant")
    for u, d in itertools.permutations(range(topo.num_nodes), 2):
        v = topo.next_hop[u, d]
        assert topo.has_link(u, v)
        assert topo.hops[v, d] == topo.hops[u, d] - 1


def test_catalog_chunking():
    cat = Catalog.from_chunk_size(3000, 40 * MB, 0.4 * MB)
    assert cat.chunks_per_object == 100
    assert cat.chunk_size * cat.chunks_per_object == pytest.approx(cat.object_size)
    with pytest.raises(ValueError):
        Catalog.from_chunk_size(10, 40 * MB, 0.3 * MB)


def test_cache_holding_the_whole_catalog_is_rejected():
    topo = parse_topology("nodes 2\n0 1 100\n").with_cache_size(10 * 8 * MB)
    with pytest.raises(ValueError):
        topo.check_catalog(Catalog(10, 8 * MB))
    topo.check_catalog(Catalog(11, 8 * MB))


def test_single_node_sources():
    topo = parse_topology("nodes 1\n")
    assert list(assign_sources(topo, Catalog(7, 1.0), 3)) == [0] * 7


def test_source_assignment_deterministic():
    topo = load_topology("geant")
    cat = Catalog(3000, 1.0)
    assert np.array_equal(assign_sources(topo, cat, 11), assign_sources(topo, cat, 11))
    assert not np.array_equal(assign_sources(topo, cat, 11), assign_sources(topo, cat, 12))


def test_source_assignment_uniform_chi_square():
    topo = load_topology("geant")
    cat = Catalog(3000, 1.0)
    pvalues = []
    for seed in range(10):
        counts = np.bincount(assign_sources(topo, cat, seed), minlength=22)
        pvalues.append(chisquare(counts).pvalue)
        expected = 3000 / 22
        sigma = np.sqrt(3000 * (1 / 22) * (21 / 22))
        assert np.all(np.abs(counts - expected) <= 3 * sigma)
    # ten independent uniform p-values; all tiny would indicate bias
    assert np.median(pvalues) > 0.05


def test_with_sources_validates():
    topo = load_topology("line4")
    with pytest.raises(ValueError):
        topo.with_sources([9])
    t = topo.with_sources([3, 0])
    assert t.source_mask().tolist() == [[False, True], [False, False], [False, False], [True, False]]
    assert t.allowed_mask().all()
