"""Disjoint-set forest used for single linkage and threshold-graph components."""
from __future__ import annotations


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, v: int) -> int:
        root = v
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[v] != root:
            self.parent[v], v = root, self.parent[v]
        return root

    def union(self, a: int, b: int) -> int:
        """Merge the sets of ``a`` and ``b`` and return the surviving root."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return ra

    def components(self) -> list[list[int]]:
        """Groups of members, each sorted, ordered by smallest member."""
        groups: dict[int, list[int]] = {}
        for v in range(len(self.parent)):
            groups.setdefault(self.find(v), []).append(v)
        return sorted(groups.values(), key=lambda g: g[0])


def threshold_components(similarity, tau: float) -> list[list[int]]:
    """Connected components of the graph with an edge wherever ``similarity >= tau``."""
    n = len(similarity)
    uf = UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if similarity[i][j] >= tau:
                uf.union(i, j)
    return uf.components()
