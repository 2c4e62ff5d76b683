"""Full scenario tree over mode sequences, numbered breadth-first."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_NODE_CAP = 1_000_000


class TreeTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioTree:
    """``d``-ary tree of depth ``N`` rooted at mode ``w0``.

    Node arrays are indexed by node id. Children of a node are contiguous and
    ordered by mode, so ``children[n] = first_child[n] + arange(d)``.
    """

    N: int
    d: int
    w0: int
    stage: np.ndarray
    mode: np.ndarray
    parent: np.ndarray
    first_child: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.stage)

    def children(self, n: int) -> range:
        c = self.first_child[n]
        return range(c, c + self.d) if c >= 0 else range(0)

    def is_leaf(self, n: int) -> bool:
        return self.first_child[n] < 0

    def stage_nodes(self, k: int) -> range:
        start = _count(self.d, k - 1) if k > 0 else 0
        return range(start, start + self.d**k)

    @property
    def nonleaf(self) -> range:
        return range(0, _count(self.d, self.N - 1)) if self.N > 0 else range(0)


def _count(d: int, N: int) -> int:
    """Number of nodes of a full d-ary tree with stages 0..N."""
    if N < 0:
        return 0
    return N + 1 if d == 1 else (d ** (N + 1) - 1) // (d - 1)


def build_tree(w0: int, N: int, d: int, cap: int = DEFAULT_NODE_CAP) -> ScenarioTree:
    if N < 0 or d < 1:
        raise ValueError("need N >= 0 and d >= 1")
    if not 0 <= w0 < d:
        raise ValueError(f"root mode {w0} outside 0..{d - 1}")
    total = _count(d, N)
    if total > cap:
        raise TreeTooLarge(f"scenario tree would have {total} nodes (cap {cap})")
    stage = np.empty(total, dtype=int)
    mode = np.empty(total, dtype=int)
    parent = np.full(total, -1, dtype=int)
    first_child = np.full(total, -1, dtype=int)
    stage[0], mode[0] = 0, w0
    nxt = 1
    for n in range(total):
        if stage[n] == N:
            continue
        first_child[n] = nxt
        for w in range(d):
            stage[nxt] = stage[n] + 1
            mode[nxt] = w
            parent[nxt] = n
            nxt += 1
    for arr in (stage, mode, parent, first_child):
        arr.setflags(write=False)
    return ScenarioTree(N, d, w0, stage, mode, parent, first_child)


def node_history(tree: ScenarioTree, n: int) -> list[int]:
    """Modes along the root-to-``n`` path, root first."""
    if not 0 <= n < tree.n_nodes:
        raise IndexError(f"node {n} not in tree of {tree.n_nodes} nodes")
    out = []
    while n >= 0:
        out.append(int(tree.mode[n]))
        n = tree.parent[n]
    return out[::-1]
