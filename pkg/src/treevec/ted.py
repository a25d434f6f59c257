"""Ordered tree edit distance with unit costs (Zhang & Shasha).

Slot groups are flattened into a plain ordered child sequence before the
distance is computed. A slow exhaustive variant is provided as a test
oracle for small trees.
"""

from __future__ import annotations

from dataclasses import dataclass

from .grammar import Tree, tree_size


@dataclass
class FlatTree:
    """Postorder view of a tree as used by the Zhang-Shasha recurrences."""

    labels: list[str]    # node labels in postorder
    lld: list[int]       # leftmost-leaf-descendant index per postorder node
    keyroots: list[int]  # postorder indices of keyroot nodes, ascending


def flatten(t: Tree) -> FlatTree:
    labels: list[str] = []
    lld: list[int] = []

    def walk(tree: Tree) -> int:
        first_leaf = None
        for child in tree.children():
            child_leaf = walk(child)
            if first_leaf is None:
                first_leaf = child_leaf
        index = len(labels)
        labels.append(tree.label)
        lld.append(first_leaf if first_leaf is not None else index)
        return lld[index]

    walk(t)
    n = len(labels)
    # a keyroot is a node that is not the leftmost child of its parent,
    # i.e. the highest node for each distinct leftmost-leaf value
    highest: dict[int, int] = {}
    for i in range(n):
        highest[lld[i]] = i
    keyroots = sorted(highest.values())
    return FlatTree(labels, lld, keyroots)


def ted(a: Tree, b: Tree) -> int:
    """Minimum number of unit-cost node edits transforming ``a`` into ``b``."""
    fa, fb = flatten(a), flatten(b)
    n, m = len(fa.labels), len(fb.labels)
    dist = [[0] * m for _ in range(n)]

    for i in fa.keyroots:
        for j in fb.keyroots:
            _treedist(fa, fb, i, j, dist)
    return dist[n - 1][m - 1]


def _treedist(fa: FlatTree, fb: FlatTree, i: int, j: int, dist: list[list[int]]) -> None:
    li, lj = fa.lld[i], fb.lld[j]
    rows, cols = i - li + 2, j - lj + 2
    fd = [[0] * cols for _ in range(rows)]
    for x in range(1, rows):
        fd[x][0] = fd[x - 1][0] + 1
    for y in range(1, cols):
        fd[0][y] = fd[0][y - 1] + 1
    for x in range(1, rows):
        ix = li + x - 1
        for y in range(1, cols):
            jy = lj + y - 1
            if fa.lld[ix] == li and fb.lld[jy] == lj:
                cost = 0 if fa.labels[ix] == fb.labels[jy] else 1
                fd[x][y] = min(fd[x - 1][y] + 1,
                               fd[x][y - 1] + 1,
                               fd[x - 1][y - 1] + cost)
                dist[ix][jy] = fd[x][y]
            else:
                px = fa.lld[ix] - li
                py = fb.lld[jy] - lj
                fd[x][y] = min(fd[x - 1][y] + 1,
                               fd[x][y - 1] + 1,
                               fd[px][py] + dist[ix][jy])


_ORACLE_LIMIT = 12


def ted_oracle(a: Tree, b: Tree) -> int:
    """Exhaustive memoized forest edit distance; only for tiny trees."""
    if tree_size(a) + tree_size(b) > _ORACLE_LIMIT:
        raise ValueError(f"ted_oracle limited to combined size {_ORACLE_LIMIT}")
    memo: dict = {}

    def forest_size(forest: tuple[Tree, ...]) -> int:
        return sum(tree_size(t) for t in forest)

    def dist(f1: tuple[Tree, ...], f2: tuple[Tree, ...]) -> int:
        if not f1:
            return forest_size(f2)
        if not f2:
            return forest_size(f1)
        key = (f1, f2)
        if key in memo:
            return memo[key]
        t1, rest1 = f1[0], f1[1:]
        t2, rest2 = f2[0], f2[1:]
        c1, c2 = t1.children(), t2.children()
        best = min(
            1 + dist(c1 + rest1, f2),                      # delete root of t1
            1 + dist(f1, c2 + rest2),                      # insert root of t2
            dist(c1, c2) + dist(rest1, rest2)
            + (0 if t1.label == t2.label else 1),          # match roots
        )
        memo[key] = best
        return best

    return dist((a,), (b,))
