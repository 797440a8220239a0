import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowkrim import build_complex, boundary_check, hodge_laplacian_1, load_network
from flowkrim.simplicial import NetworkError, SimplicialComplex2, format_network, parse_network

from conftest import random_complex


def test_kite_triangles(kite):
    assert kite.triangles == ((0, 1, 2),)
    assert kite.n2 == 1


def test_single_edge_incidence():
    sc = build_complex(2, [(0, 1)])
    np.testing.assert_array_equal(sc.b1, [[-1.0], [1.0]])
    assert sc.b2.shape == (1, 0)
    hl = hodge_laplacian_1(sc)
    np.testing.assert_array_equal(hl.lower, [[2.0]])
    np.testing.assert_array_equal(hl.upper, [[0.0]])


def test_edges_are_canonicalized():
    sc = build_complex(3, [(2, 0), (1, 0)])
    assert sc.edges == ((0, 2), (0, 1))
    assert sc.b1[0, 0] == -1 and sc.b1[2, 0] == 1


def test_b2_sign_convention(kite):
    col = kite.b2[:, 0]
    assert col[kite.edge_index(0, 1)] == 1
    assert col[kite.edge_index(0, 2)] == -1
    assert col[kite.edge_index(1, 2)] == 1
    assert col[kite.edge_index(2, 3)] == 0


def test_kite_laplacians(kite):
    hl = hodge_laplacian_1(kite)
    np.testing.assert_array_equal(np.diag(hl.lower), 2.0)
    assert np.linalg.matrix_rank(hl.upper) == 1
    assert np.trace(hl.upper) == 3
    np.testing.assert_array_equal(hl.full, hl.lower + hl.upper)


@pytest.mark.parametrize(
    "nodes, edges, tris",
    [
        (3, [(0, 5)], None),
        (3, [(0, 1), (1, 0)], None),
        (3, [(0, 1), (1, 2)], [(0, 1, 2)]),
        (3, [(0, 1), (1, 2), (0, 2)], [(0, 1, 2), (2, 1, 0)]),
        (3, [(1, 1)], None),
    ],
)
def test_build_errors(nodes, edges, tris):
    with pytest.raises(NetworkError):
        build_complex(nodes, edges, tris)


def test_boundary_check_detects_flipped_sign(kite):
    assert boundary_check(kite)
    bad_b2 = kite.b2.copy()
    bad_b2[kite.edge_index(0, 2), 0] = 1.0
    bad = SimplicialComplex2(kite.node_count, kite.edges, kite.triangles, kite.b1, bad_b2)
    assert not boundary_check(bad)
    # recomputed product confirms the corrupted column is nonzero
    assert np.abs(kite.b1 @ bad_b2).sum() > 0


def test_boundary_check_without_triangles():
    assert boundary_check(build_complex(3, [(0, 1), (1, 2)]))


def test_explicit_triangles_override_clique_fill():
    edges = [(0, 1), (0, 2), (1, 2)]
    assert build_complex(3, edges).n2 == 1
    assert build_complex(3, edges, []).n2 == 0


@pytest.mark.parametrize("name, counts", [("cherry_hills", (36, 40, 2)), ("sioux_falls", (24, 38, 2))])
def test_bundled_networks(name, counts):
    sc = load_network(name)
    assert (sc.n0, sc.n1, sc.n2) == counts
    assert boundary_check(sc)


def test_network_file_roundtrip(tmp_path, kite):
    p = tmp_path / "kite.net"
    p.write_text(format_network(kite))
    back = load_network(p)
    assert back.edges == kite.edges and back.triangles == kite.triangles


def test_network_file_is_one_based():
    sc = parse_network("nodes 2\nedge 1 2\n")
    assert sc.edges == ((0, 1),)


@pytest.mark.parametrize("text", ["edge 1 2\n", "nodes 2\nedge 1 3\n", "nodes 2\nedge 1 x\n", "nodes 2\nfoo 1\n"])
def test_network_file_errors(text):
    with pytest.raises(NetworkError):
        parse_network(text)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 14))
def test_random_complex_invariants(seed, n):
    rng = np.random.default_rng(seed)
    sc = random_complex(rng, n, p=rng.uniform(0.2, 0.9))
    assert not (sc.b1.astype(int) @ sc.b2.astype(int)).any()
    assert np.all((sc.b1 != 0).sum(axis=0) == 2)
    assert np.all(sc.b1.sum(axis=0) == 0)
    assert np.all((sc.b2 != 0).sum(axis=0) == 3)
    hl = hodge_laplacian_1(sc)
    for m in (hl.lower, hl.upper):
        np.testing.assert_array_equal(m, m.T)
        vs = rng.standard_normal((100, sc.n1))
        assert np.all(np.einsum("ij,jk,ik->i", vs, m, vs) >= -1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_laplacians_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    sc = random_complex(rng, 8, p=0.5)
    perm = rng.permutation(sc.n1)
    sc2 = build_complex(sc.node_count, [sc.edges[i] for i in perm])
    h1, h2 = hodge_laplacian_1(sc), hodge_laplacian_1(sc2)
    np.testing.assert_array_equal(h2.lower, h1.lower[np.ix_(perm, perm)])
    np.testing.assert_array_equal(h2.upper, h1.upper[np.ix_(perm, perm)])
