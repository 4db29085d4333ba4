"""Undirected-graph machinery: decomposability, cliques, separators, separation.

Nodes are the contiguous integers ``1..d``; an edge is an unordered pair.
Graph values are immutable and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import EdgeAbsent, NotDecomposable, OverlappingSets

Edge = tuple[int, int]


def as_edge(pair: Iterable[int]) -> Edge:
    """Normalize a node pair to a sorted tuple, rejecting self-loops."""
    a, b = pair
    a, b = int(a), int(b)
    if a == b:
        raise ValueError(f"self-loop on node {a}")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class UndirectedGraph:
    """Undirected graph on nodes ``1..n_nodes`` with an explicit edge set."""

    n_nodes: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("graph needs at least one node")
        edges = frozenset(as_edge(e) for e in self.edges)
        for a, b in edges:
            if not (1 <= a <= self.n_nodes and 1 <= b <= self.n_nodes):
                raise ValueError(f"edge ({a},{b}) outside nodes 1..{self.n_nodes}")
        object.__setattr__(self, "edges", edges)

    @property
    def nodes(self) -> range:
        return range(1, self.n_nodes + 1)

    def has_edge(self, a: int, b: int) -> bool:
        return as_edge((a, b)) in self.edges

    @cached_property
    def _adjacency(self) -> dict[int, frozenset[int]]:
        nbrs: dict[int, set[int]] = {v: set() for v in self.nodes}
        for a, b in self.edges:
            nbrs[a].add(b)
            nbrs[b].add(a)
        return {v: frozenset(s) for v, s in nbrs.items()}

    def neighbors(self, v: int) -> frozenset[int]:
        return self._adjacency[v]

    def with_edge(self, a: int, b: int) -> "UndirectedGraph":
        return UndirectedGraph(self.n_nodes, self.edges | {as_edge((a, b))})

    def without_edge(self, a: int, b: int) -> "UndirectedGraph":
        return UndirectedGraph(self.n_nodes, self.edges - {as_edge((a, b))})

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    @classmethod
    def complete(cls, n: int) -> "UndirectedGraph":
        return cls(n, frozenset((a, b) for a in range(1, n + 1)
                                for b in range(a + 1, n + 1)))


@dataclass(frozen=True)
class JunctionDecomposition:
    """Cliques in a running-intersection order and their separators.

    ``separators[i]`` is ``cliques[i+1]`` intersected with the union of all
    earlier cliques, so there is one separator per clique after the first
    (multiset; repeats are kept).
    """

    cliques: tuple[frozenset[int], ...]
    separators: tuple[frozenset[int], ...]


def _mcs_order(g: UndirectedGraph) -> list[int]:
    """Maximum-cardinality search visit order (ties broken by smallest id)."""
    weight = {v: 0 for v in g.nodes}
    unvisited = set(g.nodes)
    order = []
    while unvisited:
        v = min(unvisited, key=lambda u: (-weight[u], u))
        order.append(v)
        unvisited.remove(v)
        for w in g.neighbors(v):
            if w in unvisited:
                weight[w] += 1
    return order


def is_decomposable(g: UndirectedGraph) -> bool:
    """True iff ``g`` is chordal, checked via MCS and earlier-neighbor cliques."""
    order = _mcs_order(g)
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        earlier = [w for w in g.neighbors(v) if pos[w] < pos[v]]
        for i, a in enumerate(earlier):
            for b in earlier[i + 1:]:
                if not g.has_edge(a, b):
                    return False
    return True


def decompose(g: UndirectedGraph) -> JunctionDecomposition:
    """Cliques and separators of a decomposable graph in junction-tree order."""
    order = _mcs_order(g)
    pos = {v: i for i, v in enumerate(order)}
    candidates: list[frozenset[int]] = []
    for v in order:
        earlier = frozenset(w for w in g.neighbors(v) if pos[w] < pos[v])
        for i, a in enumerate(sorted(earlier)):
            for b in sorted(earlier)[i + 1:]:
                if not g.has_edge(a, b):
                    raise NotDecomposable("graph is not decomposable")
        candidates.append(earlier | {v})
    cliques: list[frozenset[int]] = []
    for cand in candidates:
        # MCS yields candidate sets in an order where non-maximal candidates
        # are subsets of a neighbor discovered later; keep maximal ones only.
        if not any(cand < other for other in candidates):
            if cand not in cliques:
                cliques.append(cand)
    separators = []
    seen: set[int] = set()
    for i, c in enumerate(cliques):
        if i > 0:
            separators.append(frozenset(c & seen))
        seen |= c
    return JunctionDecomposition(tuple(cliques), tuple(separators))


def separates(g: UndirectedGraph, a: Iterable[int], b: Iterable[int],
              s: Iterable[int]) -> bool:
    """True iff every path between ``a`` and ``b`` passes through ``s``."""
    sa, sb, ss = set(a), set(b), set(s)
    if (sa & sb) or (sa & ss) or (sb & ss):
        raise OverlappingSets("a, b, s must be pairwise disjoint")
    blocked = ss
    frontier = list(sa)
    reached = set(sa)
    while frontier:
        v = frontier.pop()
        for w in g.neighbors(v):
            if w in blocked or w in reached:
                continue
            if w in sb:
                return False
            reached.add(w)
            frontier.append(w)
    return True


def common_neighbors(g: UndirectedGraph, edge: Iterable[int]) -> frozenset[int]:
    """Nodes adjacent to both endpoints of an existing edge."""
    e = as_edge(edge)
    if e not in g.edges:
        raise EdgeAbsent(f"edge {e} not in graph")
    return g.neighbors(e[0]) & g.neighbors(e[1])


def separator_edges(dec: JunctionDecomposition) -> frozenset[Edge]:
    """All edges lying inside some separator."""
    out: set[Edge] = set()
    for s in dec.separators:
        nodes = sorted(s)
        for i, a in enumerate(nodes):
            for b in nodes[i + 1:]:
                out.add((a, b))
    return frozenset(out)


def clique_of_edge(dec: JunctionDecomposition, edge: Edge) -> frozenset[int]:
    """The first junction-tree clique containing the edge."""
    a, b = edge
    for c in dec.cliques:
        if a in c and b in c:
            return c
    raise EdgeAbsent(f"edge {edge} not inside any clique")


def adjacency_matrix(g: UndirectedGraph) -> np.ndarray:
    """Boolean adjacency matrix (0-based indexing)."""
    m = np.zeros((g.n_nodes, g.n_nodes), dtype=bool)
    for a, b in g.edges:
        m[a - 1, b - 1] = True
        m[b - 1, a - 1] = True
    return m
