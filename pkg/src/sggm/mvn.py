"""Multivariate-normal machinery for piecewise-Gaussian models.

Means are fixed at zero throughout; centering the data is a preprocessing
step. Box probabilities marginalize unbounded dimensions exactly, use the
closed-form normal CDF in one bounded dimension, an exact bivariate scheme in
two, and a randomized-lattice separation-of-variables rule beyond that. By
default the lattice shifts come from a fixed stream, which makes repeated
evaluations deterministic and lets nearby covariances share integration
noise; pass an ``rng`` for independently randomized estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .errors import (
    DimensionMismatch,
    NoConvergence,
    NotDecomposable,
    NotPositiveDefinite,
    ToleranceUnreachable,
)
from .graphs import JunctionDecomposition, UndirectedGraph, decompose, is_decomposable
from .strata import ContextPartition, StratifiedGraph, derive_partition

NEG_INF = float("-inf")
POS_INF = float("inf")
LOG_2PI = math.log(2.0 * math.pi)

_SHIFT_SEED = 20260811
_QMC_LADDER = (509, 1021, 2039, 4093, 8191, 16381, 32749, 65521, 131071, 262139)
_QMC_SHIFTS = 8


def _is_pd(matrix: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(matrix)
        return True
    except np.linalg.LinAlgError:
        return False


@dataclass(frozen=True)
class Covariance:
    """A symmetric positive definite covariance matrix (mean fixed at zero)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"covariance must be square, got shape {m.shape}")
        scale = max(1.0, float(np.abs(m).max()))
        if float(np.abs(m - m.T).max()) > 1e-12 * scale:
            raise NotPositiveDefinite("matrix is not symmetric within 1e-12 relative")
        m = 0.5 * (m + m.T)
        if not _is_pd(m):
            raise NotPositiveDefinite("symmetric factorization failed")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def as_covariance(sigma) -> Covariance:
    return sigma if isinstance(sigma, Covariance) else Covariance(sigma)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-variable (lower, upper) extended reals."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bnds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        for lo, hi in bnds:
            if lo > hi:
                raise ValueError(f"box bound ({lo}, {hi}) has lower > upper")
        object.__setattr__(self, "bounds", bnds)

    @property
    def dim(self) -> int:
        return len(self.bounds)


def _clique_index_arrays(dec: JunctionDecomposition) -> tuple[np.ndarray, np.ndarray]:
    nodes: list[int] = []
    offsets = [0]
    for c in dec.cliques:
        nodes.extend(v - 1 for v in sorted(c))
        offsets.append(len(nodes))
    return np.asarray(nodes, dtype=np.int64), np.asarray(offsets, dtype=np.int64)


def ipf_fit_matrix(
    target: np.ndarray,
    dec: JunctionDecomposition,
    tol: float = 1e-10,
    max_sweeps: int = 10_000,
    prec0: np.ndarray | None = None,
) -> np.ndarray:
    """Raw IPF onto a decomposition; needs only clique-marginal invertibility.

    ``prec0`` warm-starts the iteration with a precision matrix that already
    has the graph's zero pattern (e.g. the previous solution for the same
    graph); by default the iteration starts from the diagonal.
    """
    if prec0 is None:
        prec0 = np.diag(1.0 / np.diag(target))
    nodes, offsets = _clique_index_arrays(dec)
    sigma, sweeps = _kernels.ipf_sweeps(
        np.ascontiguousarray(target, dtype=float),
        np.ascontiguousarray(prec0, dtype=float),
        nodes, offsets, tol, max_sweeps)
    if sweeps < 0:
        raise NoConvergence(f"IPF did not converge within {max_sweeps} sweeps")
    return 0.5 * (sigma + sigma.T)


def ipf_project(sigma, g: UndirectedGraph, tol: float = 1e-10,
                max_sweeps: int = 10_000) -> Covariance:
    """Project a covariance onto the set with zero precision on non-edges.

    Clique-marginal blocks are preserved; only entries of missing edges move.
    """
    cov = as_covariance(sigma)
    if cov.dim != g.n_nodes:
        raise DimensionMismatch(
            f"covariance is {cov.dim}x{cov.dim}, graph has {g.n_nodes} nodes")
    if not is_decomposable(g):
        raise NotDecomposable("IPF projection requires a decomposable graph")
    if len(g.edges) == g.n_nodes * (g.n_nodes - 1) // 2:
        return cov
    dec = decompose(g)
    return Covariance(ipf_fit_matrix(cov.matrix, dec, tol, max_sweeps))


def _sorted_for_integration(sub: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    sd = np.sqrt(np.diag(sub))
    width = ndtr(hi / sd) - ndtr(lo / sd)
    order = np.argsort(width, kind="stable")
    ix = np.ix_(order, order)
    return sub[ix], lo[order], hi[order]


def _box_prob_raw(cov: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                  tol: float, rng=None) -> float:
    """Box probability for a raw covariance matrix (caller validates)."""
    if np.any(lo == hi):
        return 0.0
    active = np.flatnonzero((lo > NEG_INF) | (hi < POS_INF))
    if active.size == 0:
        return 1.0
    sub = cov[np.ix_(active, active)]
    alo, ahi = lo[active], hi[active]
    m = active.size
    if m == 1:
        sd = math.sqrt(sub[0, 0])
        return float(ndtr(ahi[0] / sd) - ndtr(alo[0] / sd))
    if m == 2:
        s0, s1 = math.sqrt(sub[0, 0]), math.sqrt(sub[1, 1])
        r = sub[0, 1] / (s0 * s1)
        r = min(1.0, max(-1.0, r))
        return float(_kernels.bvn_rect(alo[0], ahi[0], alo[1], ahi[1], s0, s1, r))
    sub, alo, ahi = _sorted_for_integration(sub, alo, ahi)
    try:
        chol = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("marginal covariance not positive definite") from exc
    q = _kernels.lattice_generator(m - 1)
    shift_rng = rng if rng is not None else np.random.default_rng(_SHIFT_SEED)
    est = err = math.nan
    for npts in _QMC_LADDER:
        shifts = shift_rng.random((_QMC_SHIFTS, m - 1))
        batches = _kernels.qmc_mvn_batches(chol, alo, ahi, q, shifts, npts)
        est = float(batches.mean())
        err = 3.0 * float(batches.std(ddof=1)) / math.sqrt(_QMC_SHIFTS)
        if err <= tol:
            return min(1.0, max(0.0, est))
    raise ToleranceUnreachable(
        f"box probability error estimate {err:.2e} above tol {tol:.2e}")


def box_probability(sigma, box, tol: float = 1e-6, rng=None) -> float:
    """P(X in box) for X ~ N(0, sigma), absolute error at most ``tol``.

    Dimensions bounded on neither side are marginalized out exactly. With the
    default ``rng=None`` the randomized lattice uses a fixed shift stream, so
    the value is a deterministic function of (sigma, box, tol).
    """
    cov = as_covariance(sigma)
    if not isinstance(box, Box):
        box = Box(tuple(box))
    if box.dim != cov.dim:
        raise DimensionMismatch(
            f"box has {box.dim} dimensions, covariance {cov.dim}")
    lo = np.array([b[0] for b in box.bounds])
    hi = np.array([b[1] for b in box.bounds])
    return _box_prob_raw(cov.matrix, lo, hi, tol, rng)


def _cell_box(partition: ContextPartition, cell: tuple[int, ...]) -> Box:
    return Box(tuple((iv.lower, iv.upper)
                     for iv in partition.cell_intervals(cell)))


@dataclass(frozen=True, eq=False)
class PiecewiseGaussian:
    """The piecewise density: per-block projected covariances and log Z."""

    sg: StratifiedGraph
    sigma: Covariance
    partition: ContextPartition
    per_block_sigma: tuple[Covariance, ...]
    log_z: float
    block_probs: tuple[float, ...]
    cell_probs: tuple[tuple[float, ...], ...]

    @cached_property
    def _precisions(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linalg.inv(c.matrix) for c in self.per_block_sigma)

    @cached_property
    def _logdet_prec(self) -> tuple[float, ...]:
        return tuple(-float(np.linalg.slogdet(c.matrix)[1])
                     for c in self.per_block_sigma)

    @property
    def dim(self) -> int:
        return self.sigma.dim


def build_piecewise(sg: StratifiedGraph, sigma, box_tol: float = 1e-6,
                    ipf_tol: float = 1e-10) -> PiecewiseGaussian:
    """Derive the partition, project the covariance per block, and normalize."""
    cov = as_covariance(sigma)
    if cov.dim != sg.graph.n_nodes:
        raise DimensionMismatch(
            f"covariance is {cov.dim}x{cov.dim}, graph has {sg.graph.n_nodes} nodes")
    partition = derive_partition(sg)
    by_edges: dict[frozenset, Covariance] = {}
    per_block = []
    for blk in partition.blocks:
        key = blk.graph.edges
        if key not in by_edges:
            by_edges[key] = ipf_project(cov, blk.graph, tol=ipf_tol)
        per_block.append(by_edges[key])
    cell_probs = []
    block_probs = []
    for blk, bsig in zip(partition.blocks, per_block):
        probs = []
        for cell in blk.cells:
            ivs = partition.cell_intervals(cell)
            if any(iv.degenerate for iv in ivs):
                probs.append(0.0)
            else:
                probs.append(box_probability(bsig, _cell_box(partition, cell),
                                             tol=box_tol))
        cell_probs.append(tuple(probs))
        block_probs.append(float(sum(probs)))
    z = float(sum(block_probs))
    return PiecewiseGaussian(sg, cov, partition, tuple(per_block),
                             math.log(z), tuple(block_probs), tuple(cell_probs))


def log_density(model: PiecewiseGaussian, x: Sequence[float]) -> float:
    """Log density at one point; boundary points resolve via the grid flags."""
    xv = np.asarray(x, dtype=float)
    if xv.shape != (model.dim,):
        raise DimensionMismatch(f"point has shape {xv.shape}, expected ({model.dim},)")
    bi = model.partition.classify_point(xv)
    prec = model._precisions[bi]
    quad = float(xv @ prec @ xv)
    return (-0.5 * model.dim * LOG_2PI + 0.5 * model._logdet_prec[bi]
            - 0.5 * quad - model.log_z)


def log_density_many(model: PiecewiseGaussian, X: np.ndarray) -> np.ndarray:
    """Vectorized log density over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise DimensionMismatch(
            f"data has shape {X.shape}, expected (n, {model.dim})")
    block_ids = model.partition.classify_rows(X)
    out = np.empty(X.shape[0])
    const = -0.5 * model.dim * LOG_2PI - model.log_z
    for bi in np.unique(block_ids):
        mask = block_ids == bi
        rows = X[mask]
        prec = model._precisions[bi]
        quad = np.einsum("ij,jk,ik->i", rows, prec, rows)
        out[mask] = const + 0.5 * model._logdet_prec[bi] - 0.5 * quad
    return out


def log_likelihood(model: PiecewiseGaussian, data) -> float:
    """Sum of log densities; the normalizer enters once as ``-n log Z``."""
    X = np.asarray(getattr(data, "values", data), dtype=float)
    return float(log_density_many(model, X).sum())


def conditional_density(model: PiecewiseGaussian, target: int,
                        x: Sequence[float]) -> float:
    """Density of coordinate ``target`` (1-based) at x given the others.

    The normalizer is exact: along the target axis the density is piecewise
    Gaussian, so each segment integrates in closed form.
    """
    xv = np.asarray(x, dtype=float)
    if xv.shape != (model.dim,):
        raise DimensionMismatch(f"point has shape {xv.shape}, expected ({model.dim},)")
    t = target - 1
    others = [i for i in range(model.dim) if i != t]
    cell = [ax.code_of(float(v)) for ax, v in zip(model.partition.axes, xv)]
    bi = model.partition.cell_block[tuple(cell)]
    prec = model._precisions[bi]
    quad = float(xv @ prec @ xv)
    num = math.exp(-0.5 * model.dim * LOG_2PI + 0.5 * model._logdet_prec[bi]
                   - 0.5 * quad)
    den = 0.0
    xo = xv[others]
    taxis = model.partition.axes[t]
    for code in range(1, len(taxis.intervals) + 1):
        seg = taxis.intervals[code - 1]
        if seg.degenerate:
            continue
        cell[t] = code
        sb = model.partition.cell_block[tuple(cell)]
        smat = model.per_block_sigma[sb].matrix
        soo = smat[np.ix_(others, others)]
        sto = smat[t, others]
        w = np.linalg.solve(soo, xo)
        mu = float(sto @ w)
        var = float(smat[t, t] - sto @ np.linalg.solve(soo, sto))
        sd = math.sqrt(var)
        sign, logdet_oo = np.linalg.slogdet(soo)
        f_marg = math.exp(-0.5 * len(others) * LOG_2PI - 0.5 * logdet_oo
                          - 0.5 * float(xo @ w))
        den += f_marg * float(ndtr((seg.upper - mu) / sd) - ndtr((seg.lower - mu) / sd))
    return num / den
