"""Stratified graphs and their context-partitioned dependence structure.

A stratum attaches to an edge a union of axis-aligned open boxes over the
edge's common-neighbor variables; inside the stratum the edge's conditional
dependence is switched off. This module owns:

* the stratified-graph types and decomposability validation,
* the per-clique discretization (breakpoints, coded intervals, discrete
  strata over parent outcomes),
* conditional-probability-table merging of parent outcomes and the derived
  partition of R^d into blocks with per-block dependence graphs,
* canonicalization to the maximal regular representative,
* parameter counting for the penalized score.

All types are immutable; derivations are pure functions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CliqueNotStratified, DimensionMismatch, NotDecomposableSG, NotRegular
from .graphs import (
    Edge,
    JunctionDecomposition,
    UndirectedGraph,
    as_edge,
    common_neighbors,
    decompose,
    is_decomposable,
    separator_edges,
)

NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True, order=True)
class IntervalCondition:
    """Open-interval condition ``lower < X_variable < upper``."""

    variable: int
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(
                f"condition on X{self.variable} needs lower < upper, "
                f"got ({self.lower}, {self.upper})")

    @property
    def vacuous(self) -> bool:
        return self.lower == NEG_INF and self.upper == POS_INF


@dataclass(frozen=True)
class StratumBox:
    """One box of a stratum: a conjunction of interval conditions.

    Conditions are stored sparsely: a variable without a stored condition is
    vacuously conditioned by (-inf, inf).
    """

    conditions: tuple[IntervalCondition, ...]

    def __post_init__(self):
        conds = tuple(sorted(c for c in self.conditions if not c.vacuous))
        if len({c.variable for c in conds}) != len(conds):
            raise ValueError("duplicate variable in stratum box")
        object.__setattr__(self, "conditions", conds)

    def bounds_for(self, variable: int) -> tuple[float, float]:
        for c in self.conditions:
            if c.variable == variable:
                return (c.lower, c.upper)
        return (NEG_INF, POS_INF)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(c.variable for c in self.conditions)

    @property
    def full_space(self) -> bool:
        return not self.conditions


def make_box(conditions: Mapping[int, tuple[float, float]]) -> StratumBox:
    """Build a box from ``{variable: (lower, upper)}``."""
    return StratumBox(tuple(IntervalCondition(v, float(lo), float(hi))
                            for v, (lo, hi) in sorted(conditions.items())))


@dataclass(frozen=True)
class Stratum:
    """The stratum of one edge: a nonempty union of boxes."""

    edge: Edge
    boxes: tuple[StratumBox, ...]

    def __post_init__(self):
        object.__setattr__(self, "edge", as_edge(self.edge))
        if not self.boxes:
            raise ValueError(f"stratum on edge {self.edge} needs at least one box")
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class StratifiedGraph:
    """A graph together with the collection of its edge strata."""

    graph: UndirectedGraph
    strata: tuple[Stratum, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.strata, key=lambda s: s.edge))
        edges = [s.edge for s in ordered]
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate stratum edge")
        object.__setattr__(self, "strata", ordered)

    @property
    def strata_map(self) -> dict[Edge, Stratum]:
        return {s.edge: s for s in self.strata}

    @property
    def stratified_edges(self) -> tuple[Edge, ...]:
        return tuple(s.edge for s in self.strata)

    def n_boxes(self) -> int:
        return sum(len(s.boxes) for s in self.strata)


def stratified_graph(
    graph: UndirectedGraph,
    strata: Mapping[Iterable[int], Sequence[Mapping[int, tuple[float, float]]]] | None = None,
) -> StratifiedGraph:
    """Convenience builder from ``{edge: [ {var: (lo, hi)}, ... ]}``."""
    out = []
    for edge, boxes in (strata or {}).items():
        out.append(Stratum(as_edge(edge), tuple(make_box(b) for b in boxes)))
    return StratifiedGraph(graph, tuple(out))


def validate_decomposable_sg(sg: StratifiedGraph) -> tuple[bool, list[str]]:
    """Check the three decomposable-SG conditions; returns (ok, violations)."""
    violations: list[str] = []
    g = sg.graph
    if not is_decomposable(g):
        return False, ["underlying graph is not decomposable"]
    dec = decompose(g)
    sep_edges = separator_edges(dec)
    for st in sg.strata:
        e = st.edge
        if e not in g.edges:
            violations.append(f"stratified edge {e} is not an edge of the graph")
            continue
        lset = common_neighbors(g, e)
        if not lset:
            violations.append(f"stratified edge {e} has no common neighbors")
            continue
        if e in sep_edges:
            sep = next(s for s in dec.separators if set(e) <= s)
            violations.append(
                f"stratified edge {e} lies in separator {set(sep) or '{}'}")
        for box in st.boxes:
            extra = set(box.variables) - lset
            if extra:
                violations.append(
                    f"stratum on {e} conditions non-common-neighbor "
                    f"variables {sorted(extra)}")
    stratified = set(sg.stratified_edges) & g.edges
    for c in dec.cliques:
        inside = [e for e in stratified if set(e) <= c]
        if len(inside) >= 2:
            shared = set(inside[0])
            for e in inside[1:]:
                shared &= set(e)
            if not shared:
                violations.append(
                    f"stratified edges in clique {sorted(c)} share no common node")
    return (not violations), violations


def check_decomposable_sg(sg: StratifiedGraph) -> JunctionDecomposition:
    """Raise :class:`NotDecomposableSG` unless valid; return the decomposition."""
    ok, violations = validate_decomposable_sg(sg)
    if not ok:
        raise NotDecomposableSG("; ".join(violations))
    return decompose(sg.graph)


@dataclass(frozen=True)
class Interval:
    """A real interval with explicit endpoint inclusion flags."""

    lower: float
    upper: float
    left_closed: bool
    right_closed: bool

    @property
    def degenerate(self) -> bool:
        return self.lower == self.upper

    def contains(self, x: float) -> bool:
        if x < self.lower or x > self.upper:
            return False
        if x == self.lower and not self.left_closed:
            return False
        if x == self.upper and not self.right_closed:
            return False
        return True

    def subset_of_open(self, lo: float, hi: float) -> bool:
        """Is this interval a subset of the open interval (lo, hi)?"""
        if self.lower < lo or (self.lower == lo and self.left_closed):
            return False
        if self.upper > hi or (self.upper == hi and self.right_closed):
            return False
        return True

    def subset_of(self, other: "Interval") -> bool:
        if self.lower < other.lower or self.upper > other.upper:
            return False
        if (self.lower == other.lower and self.left_closed
                and not other.left_closed):
            return False
        if (self.upper == other.upper and self.right_closed
                and not other.right_closed):
            return False
        return True

    def __str__(self) -> str:
        lb = "[" if self.left_closed else "("
        rb = "]" if self.right_closed else ")"
        fmt = lambda v: "-inf" if v == NEG_INF else ("inf" if v == POS_INF else f"{v:g}")
        return f"{lb}{fmt(self.lower)}, {fmt(self.upper)}{rb}"


FULL_INTERVAL = Interval(NEG_INF, POS_INF, False, False)


def _build_intervals(lower_pts: set[float], upper_pts: set[float]) -> tuple[Interval, ...]:
    """Coded intervals from breakpoint roles, following the open/closed rules:
    the first interval is left-open and the last right-open; an interval is
    right-open iff its upper endpoint acts as an upper limit in some
    condition; a value acting as both lower and upper limit is duplicated,
    yielding a degenerate single-point interval.
    """
    omega: list[float] = [NEG_INF]
    for v in sorted(lower_pts | upper_pts):
        omega.append(v)
        if v in lower_pts and v in upper_pts:
            omega.append(v)
    omega.append(POS_INF)
    intervals: list[Interval] = []
    prev_right_open = False
    for lo, hi in zip(omega[:-1], omega[1:]):
        left_closed = prev_right_open and lo != NEG_INF
        right_open = (lo != hi and hi in upper_pts) or hi == POS_INF
        intervals.append(Interval(lo, hi, left_closed, not right_open))
        prev_right_open = right_open
    return tuple(intervals)


@dataclass(frozen=True, eq=False)
class DiscretizedClique:
    """Discretization of a stratified clique.

    ``intervals[v][i]`` carries integer code ``i + 1``; ``discrete_strata``
    maps each stratified edge to the set of parent-outcome tuples (codes over
    ``parents``, in order) satisfying some box of its stratum.
    """

    clique: frozenset[int]
    common_node: int
    parents: tuple[int, ...]
    breakpoints: dict[int, tuple[float, ...]]
    intervals: dict[int, tuple[Interval, ...]]
    discrete_strata: dict[Edge, frozenset[tuple[int, ...]]]

    def n_codes(self, variable: int) -> int:
        return len(self.intervals[variable])

    def outcomes(self) -> list[tuple[int, ...]]:
        """All parent outcomes in lexicographic order (last parent fastest)."""
        ranges = [range(1, self.n_codes(p) + 1) for p in self.parents]
        return list(itertools.product(*ranges))

    def outcome_index(self, outcome: tuple[int, ...]) -> int:
        """1-based position of a parent outcome in the enumeration order."""
        idx = 0
        for p, code in zip(self.parents, outcome):
            idx = idx * self.n_codes(p) + (code - 1)
        return idx + 1


def _clique_strata(sg: StratifiedGraph, clique: frozenset[int]) -> list[Stratum]:
    return [s for s in sg.strata if set(s.edge) <= clique]


def discretize_clique(sg: StratifiedGraph, clique: Iterable[int]) -> DiscretizedClique:
    """Discretize one clique of a decomposable SG per the breakpoint rules."""
    cl = frozenset(int(v) for v in clique)
    strata = _clique_strata(sg, cl)
    if not strata:
        raise CliqueNotStratified(f"clique {sorted(cl)} has no stratified edges")
    shared = set(strata[0].edge)
    for st in strata[1:]:
        shared &= set(st.edge)
    if not shared:
        raise NotDecomposableSG(
            f"stratified edges in clique {sorted(cl)} share no common node")
    common = min(shared)
    parents = tuple(sorted(cl - {common}))

    lower_pts: dict[int, set[float]] = {v: set() for v in cl}
    upper_pts: dict[int, set[float]] = {v: set() for v in cl}
    for st in strata:
        lvars = cl - set(st.edge)
        for box in st.boxes:
            for v in lvars:
                lo, hi = box.bounds_for(v)
                if lo != NEG_INF:
                    lower_pts[v].add(lo)
                if hi != POS_INF:
                    upper_pts[v].add(hi)

    breakpoints: dict[int, tuple[float, ...]] = {}
    intervals: dict[int, tuple[Interval, ...]] = {}
    for v in sorted(cl):
        ivs = _build_intervals(lower_pts[v], upper_pts[v])
        intervals[v] = ivs
        omega: list[float] = [NEG_INF]
        for iv in ivs:
            omega.append(iv.upper)
        breakpoints[v] = tuple(omega)

    discrete: dict[Edge, frozenset[tuple[int, ...]]] = {}
    for st in strata:
        lvars = cl - set(st.edge)
        outcome_sets: set[tuple[int, ...]] = set()
        for box in st.boxes:
            per_parent: list[list[int]] = []
            feasible = True
            for p in parents:
                if p in lvars:
                    lo, hi = box.bounds_for(p)
                    codes = [i + 1 for i, iv in enumerate(intervals[p])
                             if iv.subset_of_open(lo, hi)]
                    if not codes:
                        feasible = False
                        break
                    per_parent.append(codes)
                else:
                    # the edge's own parent endpoint is unconstrained
                    per_parent.append(list(range(1, len(intervals[p]) + 1)))
            if feasible:
                outcome_sets.update(itertools.product(*per_parent))
        discrete[st.edge] = frozenset(outcome_sets)

    return DiscretizedClique(cl, common, parents, breakpoints, intervals, discrete)


@dataclass(frozen=True, eq=False)
class CliquePartition:
    """CPT merging result for one clique: blocks of parent outcomes and the
    stratified edges deleted within each block."""

    disc: DiscretizedClique
    blocks: tuple[frozenset[tuple[int, ...]], ...]
    deleted: tuple[frozenset[Edge], ...]


def clique_partition(sg: StratifiedGraph, clique: Iterable[int]) -> CliquePartition:
    """Merge parent outcomes per the discrete strata of one clique."""
    disc = discretize_clique(sg, clique)
    outcomes = disc.outcomes()
    parent_pos = {p: i for i, p in enumerate(disc.parents)}
    root: dict[tuple[int, ...], tuple[int, ...]] = {o: o for o in outcomes}

    def find(o):
        while root[o] != o:
            root[o] = root[root[o]]
            o = root[o]
        return o

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            root[max(ra, rb)] = min(ra, rb)

    for edge, dset in disc.discrete_strata.items():
        delta = next(v for v in edge if v != disc.common_node)
        dpos = parent_pos[delta]
        groups: dict[tuple[int, ...], tuple[int, ...]] = {}
        for o in sorted(dset):
            key = o[:dpos] + o[dpos + 1:]
            if key in groups:
                union(groups[key], o)
            else:
                groups[key] = o

    block_map: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    for o in outcomes:
        block_map.setdefault(find(o), []).append(o)
    ordered_roots = sorted(block_map, key=disc.outcome_index)
    blocks = tuple(frozenset(block_map[r]) for r in ordered_roots)
    deleted = tuple(
        frozenset(e for e, dset in disc.discrete_strata.items()
                  if block & dset)
        for block in blocks)
    return CliquePartition(disc, blocks, deleted)


@dataclass(frozen=True, eq=False)
class Axis:
    """Refined interval grid for one variable, codes 1..len(intervals)."""

    variable: int
    intervals: tuple[Interval, ...]

    def code_of(self, x: float) -> int:
        for i, iv in enumerate(self.intervals):
            if iv.contains(x):
                return i + 1
        raise ValueError(f"value {x} not covered on axis X{self.variable}")

    @cached_property
    def _lookup(self) -> tuple[np.ndarray, list[tuple[float, int]]]:
        inner = np.array([iv.upper for iv in self.intervals[:-1]], dtype=float)
        exact = []
        for v in sorted({b for b in inner.tolist()}):
            exact.append((v, self.code_of(v)))
        return inner, exact

    def codes_of(self, x: np.ndarray) -> np.ndarray:
        """Vectorized interval codes (1-based) for an array of values."""
        inner, exact = self._lookup
        codes = np.searchsorted(inner, x, side="right") + 1
        for v, code in exact:
            codes[x == v] = code
        return codes


@dataclass(frozen=True, eq=False)
class PartitionBlock:
    """One block of a context partition: a set of grid cells sharing a graph."""

    graph: UndirectedGraph
    cells: tuple[tuple[int, ...], ...]
    deleted_edges: frozenset[Edge]


@dataclass(frozen=True, eq=False)
class ContextPartition:
    """Partition of R^d into grid-cell unions, each with a dependence graph."""

    n_nodes: int
    axes: tuple[Axis, ...]
    blocks: tuple[PartitionBlock, ...]

    @cached_property
    def cell_block(self) -> dict[tuple[int, ...], int]:
        out: dict[tuple[int, ...], int] = {}
        for bi, blk in enumerate(self.blocks):
            for cell in blk.cells:
                out[cell] = bi
        return out

    @cached_property
    def _block_lut(self) -> np.ndarray:
        shape = tuple(len(ax.intervals) for ax in self.axes)
        lut = np.full(shape, -1, dtype=np.int64)
        for cell, bi in self.cell_block.items():
            lut[tuple(c - 1 for c in cell)] = bi
        return lut

    def classify_point(self, x: Sequence[float]) -> int:
        """Index of the unique block containing ``x``."""
        cell = tuple(ax.code_of(float(v)) for ax, v in zip(self.axes, x))
        return self.cell_block[cell]

    def classify_rows(self, X: np.ndarray) -> np.ndarray:
        """Vectorized block membership for the rows of ``X``."""
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_nodes:
            raise DimensionMismatch(
                f"data has {X.shape[1]} columns, partition expects {self.n_nodes}")
        idx = tuple(ax.codes_of(X[:, i]) - 1 for i, ax in enumerate(self.axes))
        return self._block_lut[idx]

    def cell_intervals(self, cell: tuple[int, ...]) -> tuple[Interval, ...]:
        return tuple(ax.intervals[c - 1] for ax, c in zip(self.axes, cell))


def _global_axes(sg: StratifiedGraph) -> tuple[Axis, ...]:
    d = sg.graph.n_nodes
    lower_pts: dict[int, set[float]] = {v: set() for v in range(1, d + 1)}
    upper_pts: dict[int, set[float]] = {v: set() for v in range(1, d + 1)}
    for st in sg.strata:
        for box in st.boxes:
            for cond in box.conditions:
                if cond.lower != NEG_INF:
                    lower_pts[cond.variable].add(cond.lower)
                if cond.upper != POS_INF:
                    upper_pts[cond.variable].add(cond.upper)
    return tuple(Axis(v, _build_intervals(lower_pts[v], upper_pts[v]))
                 for v in range(1, d + 1))


def derive_partition(sg: StratifiedGraph) -> ContextPartition:
    """Combine the per-clique CPT partitions into the global context partition."""
    dec = check_decomposable_sg(sg)
    axes = _global_axes(sg)
    cps = [clique_partition(sg, c) for c in dec.cliques if _clique_strata(sg, c)]

    # Map global axis codes to each clique's local codes.
    local_code: list[dict[int, list[int]]] = []
    for cp in cps:
        mapping: dict[int, list[int]] = {}
        for p in cp.disc.parents:
            ax = axes[p - 1]
            codes = []
            for giv in ax.intervals:
                loc = [i + 1 for i, liv in enumerate(cp.disc.intervals[p])
                       if giv.subset_of(liv)]
                if len(loc) != 1:
                    raise AssertionError("refined interval not aligned with clique grid")
                codes.append(loc[0])
            mapping[p] = codes
        local_code.append(mapping)

    outcome_block: list[dict[tuple[int, ...], int]] = []
    for cp in cps:
        omap: dict[tuple[int, ...], int] = {}
        for bi, blk in enumerate(cp.blocks):
            for o in blk:
                omap[o] = bi
        outcome_block.append(omap)

    shape = [len(ax.intervals) for ax in axes]
    signature_cells: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    for cell in itertools.product(*[range(1, s + 1) for s in shape]):
        sig = []
        for ci, cp in enumerate(cps):
            local = tuple(local_code[ci][p][cell[p - 1] - 1]
                          for p in cp.disc.parents)
            sig.append(outcome_block[ci][local])
        signature_cells.setdefault(tuple(sig), []).append(cell)

    ordered = sorted(signature_cells.items(), key=lambda kv: kv[1][0])
    blocks = []
    for sig, cells in ordered:
        deleted: set[Edge] = set()
        for ci, cp in enumerate(cps):
            deleted |= cp.deleted[sig[ci]]
        graph = UndirectedGraph(sg.graph.n_nodes,
                                sg.graph.edges - frozenset(deleted))
        blocks.append(PartitionBlock(graph, tuple(cells), frozenset(deleted)))
    return ContextPartition(sg.graph.n_nodes, axes, tuple(blocks))


def partitions_equal(a: ContextPartition, b: ContextPartition) -> bool:
    """True iff both partitions assign the same graph everywhere.

    The comparison runs on the fully refined common grid: every boundary
    value becomes its own degenerate cell, so endpoint-flag conventions of
    the two partitions cannot influence the outcome.
    """
    if a.n_nodes != b.n_nodes:
        raise DimensionMismatch(
            f"partitions over {a.n_nodes} vs {b.n_nodes} nodes")

    refined: list[list[Interval]] = []
    for i in range(a.n_nodes):
        values = sorted({iv.upper for iv in a.axes[i].intervals[:-1]}
                        | {iv.upper for iv in b.axes[i].intervals[:-1]})
        pieces: list[Interval] = []
        prev = NEG_INF
        for v in values:
            pieces.append(Interval(prev, v, False, False))
            pieces.append(Interval(v, v, True, True))
            prev = v
        pieces.append(Interval(prev, POS_INF, False, False))
        refined.append(pieces)

    def code_maps(part: ContextPartition, i: int) -> list[int]:
        out = []
        for piece in refined[i]:
            hits = [j + 1 for j, iv in enumerate(part.axes[i].intervals)
                    if piece.subset_of(iv)]
            if len(hits) != 1:
                raise AssertionError("refined piece not aligned with partition grid")
            out.append(hits[0])
        return out

    amaps = [code_maps(a, i) for i in range(a.n_nodes)]
    bmaps = [code_maps(b, i) for i in range(b.n_nodes)]
    for cell in itertools.product(*[range(len(p)) for p in refined]):
        acell = tuple(amaps[i][cell[i]] for i in range(a.n_nodes))
        bcell = tuple(bmaps[i][cell[i]] for i in range(b.n_nodes))
        ga = a.blocks[a.cell_block[acell]].graph
        gb = b.blocks[b.cell_block[bcell]].graph
        if ga.edges != gb.edges:
            return False
    return True


def _boxes_as_dicts(stratum: Stratum) -> list[dict[int, tuple[float, float]]]:
    return [{c.variable: (c.lower, c.upper) for c in box.conditions}
            for box in stratum.boxes]


def _interval_subset(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return b[0] <= a[0] and a[1] <= b[1]


def _normalize_boxes(boxes: list[dict[int, tuple[float, float]]]) -> list[dict[int, tuple[float, float]]]:
    """Drop subsumed boxes and merge overlapping neighbours along one axis."""
    def full(box, v):
        return box.get(v, (NEG_INF, POS_INF))

    changed = True
    while changed:
        changed = False
        # subsumption (identical boxes included)
        keep: list[dict[int, tuple[float, float]]] = []
        for i, bx in enumerate(boxes):
            subsumed = False
            for j, other in enumerate(boxes):
                if i == j:
                    continue
                allvars = set(bx) | set(other)
                if all(_interval_subset(full(bx, v), full(other, v)) for v in allvars):
                    if not (j > i and all(
                            _interval_subset(full(other, v), full(bx, v))
                            for v in allvars)):
                        subsumed = True
                        break
            if not subsumed:
                keep.append(bx)
        if len(keep) != len(boxes):
            boxes = keep
            changed = True
            continue
        # pairwise merge along a single differing axis with proper overlap
        merged = None
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                allvars = sorted(set(boxes[i]) | set(boxes[j]))
                diff = [v for v in allvars
                        if full(boxes[i], v) != full(boxes[j], v)]
                if len(diff) != 1:
                    continue
                v = diff[0]
                (a1, b1), (a2, b2) = full(boxes[i], v), full(boxes[j], v)
                if max(a1, a2) < min(b1, b2):  # open intervals overlap
                    newbox = dict(boxes[i])
                    lo, hi = min(a1, a2), max(b1, b2)
                    if lo == NEG_INF and hi == POS_INF:
                        newbox.pop(v, None)
                    else:
                        newbox[v] = (lo, hi)
                    merged = (i, j, newbox)
                    break
            if merged:
                break
        if merged:
            i, j, newbox = merged
            boxes = [b for k, b in enumerate(boxes) if k not in (i, j)] + [newbox]
            changed = True
    return boxes


def canonicalize(sg: StratifiedGraph) -> StratifiedGraph:
    """Reduce an SG to its maximal regular counterpart.

    Applies, to a fixed point: box normalization (subsumption + merging of
    overlapping boxes), and deletion of any stratified edge whose stratum is
    satisfied in every block of its clique partition (together with the
    now-dangling conditions of other strata). Raises :class:`NotRegular`
    when an implied edge deletion cannot be represented as a decomposable SG
    without altering the dependence structure.
    """
    check_decomposable_sg(sg)
    cur = sg
    while True:
        # box-level normalization
        new_strata = []
        for st in cur.strata:
            boxes = _normalize_boxes(_boxes_as_dicts(st))
            new_strata.append(Stratum(st.edge, tuple(make_box(b) for b in boxes)))
        cur = StratifiedGraph(cur.graph, tuple(new_strata))

        # edges whose stratum is satisfied somewhere in every block
        dec = decompose(cur.graph)
        doomed: set[Edge] = set()
        for clique in dec.cliques:
            if not _clique_strata(cur, clique):
                continue
            cp = clique_partition(cur, clique)
            for edge in cp.disc.discrete_strata:
                if all(edge in dset for dset in cp.deleted):
                    doomed.add(edge)
        if not doomed:
            return cur

        graph = UndirectedGraph(cur.graph.n_nodes, cur.graph.edges - doomed)
        if not is_decomposable(graph):
            raise NotRegular(
                f"deleting edges {sorted(doomed)} leaves a non-decomposable graph")
        strata = []
        for st in cur.strata:
            if st.edge in doomed:
                continue
            lset = common_neighbors(graph, st.edge)
            for box in st.boxes:
                gone = set(box.variables) - lset
                if gone:
                    raise NotRegular(
                        f"stratum on {st.edge} conditions departed "
                        f"neighbors {sorted(gone)}")
            strata.append(st)
        cand = StratifiedGraph(graph, tuple(strata))
        ok, violations = validate_decomposable_sg(cand)
        if not ok:
            raise NotRegular("; ".join(violations))
        cur = cand


def count_parameters(sg: StratifiedGraph) -> int:
    """Cardinality of the parameter space: free covariance/mean entries minus
    missing edges plus two endpoints per conditioning variable per box."""
    d = sg.graph.n_nodes
    missing = d * (d - 1) // 2 - len(sg.graph.edges)
    k = (d * d + d) // 2 + d - missing
    for st in sg.strata:
        lsize = len(common_neighbors(sg.graph, st.edge))
        k += len(st.boxes) * 2 * lsize
    return k


def _round_sig(x: float, digits: int = 12) -> float:
    if x == 0.0 or not math.isfinite(x):
        return x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def canonical_key(sg: StratifiedGraph) -> tuple:
    """Hashable identity of a (canonical) SG; bounds rounded to 12 significant
    digits so float noise cannot split ledger entries."""
    strata = []
    for st in sg.strata:
        boxes = sorted(
            tuple((c.variable, _round_sig(c.lower), _round_sig(c.upper))
                  for c in box.conditions)
            for box in st.boxes)
        strata.append((st.edge, tuple(boxes)))
    return (sg.graph.n_nodes, tuple(sorted(sg.graph.edges)), tuple(strata))
