import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import count_walks
from pannet.errors import DuplicateEdge, FeatureShapeMismatch, OutOfRangeEndpoint, WalkCountOverflow
from pannet.graph import adjacency, build_graph, induced_subgraph, permute, walk_counts


def test_triangle_degrees(k3):
    assert k3.num_nodes == 3
    assert k3.degrees().tolist() == [2, 2, 2]


def test_reverse_pair_is_duplicate():
    with pytest.raises(DuplicateEdge, match="edge 1"):
        build_graph(2, [(0, 1), (1, 0)])


def test_single_node():
    g = build_graph(1, [])
    assert adjacency(g).tolist() == [[0.0]]
    assert g.num_edges == 0


def test_out_of_range_endpoint():
    with pytest.raises(OutOfRangeEndpoint, match=r"\(0, 3\)"):
        build_graph(3, [(0, 1), (0, 3)])


@pytest.mark.parametrize("nf, ef", [([[0], [1]], None), ([[0]] * 3, [[0], [1]])])
def test_feature_shape_mismatch(nf, ef):
    with pytest.raises(FeatureShapeMismatch):
        build_graph(3, [(0, 1)], nf, ef)


def test_self_loop_kept():
    g = build_graph(2, [(0, 0), (0, 1)])
    assert adjacency(g)[0, 0] == 1


def test_graph_arrays_are_read_only(k3):
    with pytest.raises(ValueError):
        k3.edges[0, 0] = 2


def test_adjacency_examples(k3, p2):
    assert adjacency(k3).tolist() == [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
    assert adjacency(p2).tolist() == [[0, 1], [1, 0]]
    assert adjacency(build_graph(2, [])).tolist() == [[0, 0], [0, 0]]


def test_walk_counts_examples(k3, p2):
    # K3 length-2 walks: i->x->i for both neighbours x, i->x->j through the third node
    expected = [[count_walks(3, [(0, 1), (1, 2), (0, 2)], i, j, 2) for j in range(3)] for i in range(3)]
    assert expected == [[2, 1, 1], [1, 2, 1], [1, 1, 2]]
    assert walk_counts(k3, 2).tolist() == expected
    assert walk_counts(p2, 3).tolist() == [[0, 1], [1, 0]]
    assert np.array_equal(walk_counts(k3, 0), np.eye(3))


def test_overflow_guard():
    n = 30
    g = build_graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])
    walk_counts(g, 5)
    with pytest.raises(WalkCountOverflow):
        walk_counts(g, 12)


graphs = st.integers(1, 8).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                 .filter(lambda e: e[0] < e[1]), unique=True, max_size=12),
    ))


@settings(max_examples=60, deadline=None)
@given(graphs, st.integers(0, 4))
def test_walk_counts_match_enumeration(case, l):
    n, edges = case
    g = build_graph(n, edges)
    w = walk_counts(g, l)
    oracle = np.array([[count_walks(n, edges, i, j, l) for j in range(n)] for i in range(n)])
    assert np.array_equal(w, oracle)
    assert np.array_equal(w, w.T)
    assert np.array_equal(walk_counts(g, l + 1), w @ adjacency(g))


def test_induced_subgraph_relabels():
    g = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)], [[i] for i in range(5)])
    sub = induced_subgraph(g, [1, 2, 4])
    assert sub.num_nodes == 3
    assert sub.edges.tolist() == [[0, 1]]
    assert sub.node_feat[:, 0].tolist() == [1, 2, 4]


def test_permute_maps_adjacency(rng):
    g = build_graph(4, [(0, 1), (1, 2), (2, 3)], [[0], [1], [2], [3]])
    perm = rng.permutation(4)
    h = permute(g, perm)
    P = np.eye(4)[perm].T  # P[perm[i], i] = 1
    assert np.array_equal(adjacency(h), P @ adjacency(g) @ P.T)
    assert h.node_feat[perm[2], 0] == 2
