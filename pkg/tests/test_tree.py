import pytest
from hypothesis import given
from hypothesis import strategies as st

from drmpc.tree import TreeTooLarge, build_tree, node_history


@pytest.mark.parametrize("d, N, nodes", [(2, 3, 15), (1, 5, 6), (3, 2, 13)])
def test_node_counts(d, N, nodes):
    assert build_tree(0, N, d).n_nodes == nodes


def test_root_children_ordered_by_mode():
    t = build_tree(1, 2, 3)
    assert [int(t.mode[c]) for c in t.children(0)] == [0, 1, 2]


def test_histories():
    t = build_tree(1, 2, 2)
    assert node_history(t, 0) == [1]
    assert node_history(t, t.n_nodes - 1) == [1, 1, 1]
    assert node_history(t, t.n_nodes - 4) == [1, 0, 0]


def test_node_cap():
    with pytest.raises(TreeTooLarge):
        build_tree(0, 20, 3, cap=10_000)


def test_bad_arguments():
    with pytest.raises(ValueError):
        build_tree(2, 1, 2)
    with pytest.raises(ValueError):
        build_tree(0, -1, 2)
    with pytest.raises(IndexError):
        node_history(build_tree(0, 1, 2), 3)


def test_horizon_zero_is_single_leaf():
    t = build_tree(0, 0, 4)
    assert t.n_nodes == 1 and t.is_leaf(0) and len(t.nonleaf) == 0


@given(st.integers(1, 4), st.integers(0, 5), st.data())
def test_structure(d, N, data):
    w0 = data.draw(st.integers(0, d - 1))
    t = build_tree(w0, N, d)
    assert t.n_nodes == sum(d**k for k in range(N + 1))
    for k in range(N + 1):
        nodes = t.stage_nodes(k)
        assert len(nodes) == d**k
        assert all(t.stage[n] == k for n in nodes)
    for n in range(t.n_nodes):
        h = node_history(t, n)
        assert len(h) == t.stage[n] + 1 and h[0] == w0 and h[-1] == t.mode[n]
        assert t.is_leaf(n) == (t.stage[n] == N)
        for c in t.children(n):
            assert t.parent[c] == n
            assert node_history(t, c)[:-1] == h
    assert list(t.nonleaf) == [n for n in range(t.n_nodes) if not t.is_leaf(n)]


@given(st.integers(2, 3), st.integers(1, 4))
def test_histories_enumerate_all_sequences(d, N):
    t = build_tree(0, N, d)
    leaves = [tuple(node_history(t, n)[1:]) for n in t.stage_nodes(N)]
    assert len(set(leaves)) == d**N
    assert leaves == sorted(leaves)
