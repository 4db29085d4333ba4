"""Maximum-likelihood estimation of the covariance under a stratified graph.

The optimizer follows the cyclic scheme: probe each free element at +-eps/2
to pick a direction, take steps of size delta halved down to eps/2 until one
improves, re-probe, and move to the next element; after each full cycle the
covariance is re-projected onto the underlying graph so the non-edge entries
stay consistent with the free ones. Candidate matrices that are not positive
definite are rejected outright.

Free elements are the diagonal plus the edges; entries of missing edges are
determined by the rest. The likelihood depends on the candidate only through
its clique entries (each block covariance is the IPF projection onto a
subgraph of the underlying graph), so per-block results are cached and only
blocks whose graph contains the perturbed element are recomputed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, DimensionMismatch
from .graphs import decompose
from .mvn import Covariance, _box_prob_raw, _is_pd, ipf_fit_matrix
from .strata import StratifiedGraph, check_decomposable_sg, derive_partition

LOG_2PI = math.log(2.0 * math.pi)

IndexPair = tuple[int, int]


@dataclass(frozen=True)
class ElementClass:
    """Covariance entries split by their role across the block matrices."""

    shared: tuple[IndexPair, ...]
    optimized: tuple[IndexPair, ...]
    determined: tuple[IndexPair, ...]


def classify_elements(sg: StratifiedGraph) -> ElementClass:
    """Diagonal and unstratified edges are shared by every block covariance,
    stratified edges vary across blocks, non-edges are implied."""
    d = sg.graph.n_nodes
    stratified = set(sg.stratified_edges)
    shared = [(i, i) for i in range(1, d + 1)]
    determined = []
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            if (i, j) in stratified:
                continue
            if sg.graph.has_edge(i, j):
                shared.append((i, j))
            else:
                determined.append((i, j))
    return ElementClass(tuple(sorted(shared)), tuple(sorted(stratified)),
                        tuple(determined))


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    ``epsilon`` and ``delta`` are scale factors: the probe half-step for
    element (i, j) is ``epsilon * sqrt(s_ii * s_jj) / 2`` and the initial
    step ``delta * sqrt(s_ii * s_jj)``, keeping behaviour unit-independent.
    """

    epsilon: float = 1e-4
    delta: float = 0.1
    loglik_tol: float = 1e-6
    max_cycles: int = 500
    ipf_tol: float = 1e-10
    box_tol: float = 1e-6

    def __post_init__(self):
        if not (0 < self.epsilon < self.delta):
            raise ValueError("need 0 < epsilon < delta")
        if self.loglik_tol <= 0 or self.max_cycles < 1:
            raise ValueError("loglik_tol must be positive, max_cycles >= 1")


@dataclass(frozen=True)
class FitResult:
    sigma_hat: Covariance
    log_likelihood: float
    cycles: int
    converged: bool


class _Objective:
    """Piecewise log-likelihood of a candidate covariance, with caching.

    Block membership of the data is fixed by the stratified graph, so the
    per-block scatter matrices are precomputed once. A candidate evaluation
    IPF-projects the covariance onto each distinct block graph; projections
    warm-start from the last precision computed for the same graph.
    """

    def __init__(self, sg: StratifiedGraph, X: np.ndarray, cfg: FitConfig):
        self.cfg = cfg
        self.d = sg.graph.n_nodes
        self.n = X.shape[0]
        self.partition = derive_partition(sg)
        block_ids = self.partition.classify_rows(X)
        self.block_count = np.bincount(block_ids,
                                       minlength=len(self.partition.blocks))
        self.scatter = []
        for bi in range(len(self.partition.blocks)):
            rows = X[block_ids == bi]
            self.scatter.append(rows.T @ rows if rows.size else
                                np.zeros((self.d, self.d)))

        self.graph_keys: list[frozenset] = []
        self.block_graph: list[int] = []
        self.graph_dec = []
        self.graph_edges: list[frozenset] = []
        for blk in self.partition.blocks:
            key = blk.graph.edges
            if key not in self.graph_keys:
                self.graph_keys.append(key)
                self.graph_dec.append(decompose(blk.graph))
                self.graph_edges.append(key)
            self.block_graph.append(self.graph_keys.index(key))

        # cells per block, dropping degenerate (probability-zero) ones
        self.block_cells: list[list[tuple[np.ndarray, np.ndarray]]] = []
        for blk in self.partition.blocks:
            cells = []
            for cell in blk.cells:
                ivs = self.partition.cell_intervals(cell)
                if any(iv.degenerate for iv in ivs):
                    continue
                cells.append((np.array([iv.lower for iv in ivs]),
                              np.array([iv.upper for iv in ivs])))
            self.block_cells.append(cells)

        self._warm: dict[int, np.ndarray] = {}

    def graphs_with(self, elem: IndexPair | None) -> set[int]:
        """Graph indices whose projection depends on the perturbed element."""
        if elem is None or elem[0] == elem[1]:
            return set(range(len(self.graph_keys)))
        e = (min(elem) + 1, max(elem) + 1)
        return {gi for gi, edges in enumerate(self.graph_edges) if e in edges}

    def evaluate(self, sigma: np.ndarray, base=None, changed: IndexPair | None = None):
        """Log-likelihood of ``sigma``; reuses ``base`` results for blocks
        whose graph does not involve the changed element."""
        if base is None:
            affected = set(range(len(self.graph_keys)))
            graph_res: list = [None] * len(self.graph_keys)
            block_ll = np.zeros(len(self.partition.blocks))
            block_p = np.zeros(len(self.partition.blocks))
        else:
            base_graph_res, base_ll, base_p = base
            affected = self.graphs_with(changed)
            graph_res = list(base_graph_res)
            block_ll = base_ll.copy()
            block_p = base_p.copy()

        for gi in affected:
            sigma_r = ipf_fit_matrix(sigma, self.graph_dec[gi],
                                     tol=self.cfg.ipf_tol,
                                     prec0=self._warm.get(gi))
            prec = np.linalg.inv(sigma_r)
            prec = 0.5 * (prec + prec.T)
            self._warm[gi] = prec
            sign, logdet_sigma = np.linalg.slogdet(sigma_r)
            graph_res[gi] = (sigma_r, prec, -logdet_sigma)

        for bi in range(len(self.partition.blocks)):
            gi = self.block_graph[bi]
            if gi not in affected:
                continue
            sigma_r, prec, logdet_prec = graph_res[gi]
            nb = self.block_count[bi]
            if nb:
                quad = float(np.sum(prec * self.scatter[bi]))
                block_ll[bi] = nb * (-0.5 * self.d * LOG_2PI
                                     + 0.5 * logdet_prec) - 0.5 * quad
            else:
                block_ll[bi] = 0.0
            p = 0.0
            for lo, hi in self.block_cells[bi]:
                p += _box_prob_raw(sigma_r, lo, hi, self.cfg.box_tol)
            block_p[bi] = p

        z = float(block_p.sum())
        ll = float(block_ll.sum()) - self.n * math.log(z)
        return (graph_res, block_ll, block_p), ll


def _perturbed(sigma: np.ndarray, i: int, j: int, step: float) -> np.ndarray:
    cand = sigma.copy()
    cand[i, j] += step
    if i != j:
        cand[j, i] += step
    return cand


def _optimize_element(obj: _Objective, sigma, state, ll, i, j, cfg: FitConfig,
                      max_rounds: int = 200):
    scale = math.sqrt(sigma[i, i] * sigma[j, j])
    eps = cfg.epsilon * scale
    delta = cfg.delta * scale
    for _ in range(max_rounds):
        best = None
        for sign in (1.0, -1.0):
            cand = _perturbed(sigma, i, j, sign * eps / 2.0)
            if not _is_pd(cand):
                continue
            st, cll = obj.evaluate(cand, base=state, changed=(i, j))
            if cll > ll and (best is None or cll > best[3]):
                best = (sign, cand, st, cll)
        if best is None:
            return sigma, state, ll
        sign, probe_cand, probe_state, probe_ll = best
        while True:
            if delta <= eps / 2.0 * (1.0 + 1e-12):
                sigma, state, ll = probe_cand, probe_state, probe_ll
                break
            cand = _perturbed(sigma, i, j, sign * delta)
            if _is_pd(cand):
                st, cll = obj.evaluate(cand, base=state, changed=(i, j))
                if cll > ll:
                    sigma, state, ll = cand, st, cll
                    break
            delta = max(eps / 2.0, delta / 2.0)
    return sigma, state, ll


def fit_mle(sg: StratifiedGraph, data, cfg: FitConfig | None = None) -> FitResult:
    """Fit the covariance by cyclic coordinate optimization of the likelihood.

    Starts from the sample covariance projected onto the underlying graph;
    accepted steps never decrease the log-likelihood. Returns with
    ``converged=False`` when the cycle cap is reached before the per-cycle
    improvement drops below ``loglik_tol``.
    """
    cfg = cfg or FitConfig()
    X = np.asarray(getattr(data, "values", data), dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch("data must be a 2-d matrix")
    n, d = X.shape
    if d != sg.graph.n_nodes:
        raise DimensionMismatch(
            f"data has {d} columns, graph has {sg.graph.n_nodes} nodes")
    check_decomposable_sg(sg)
    if n <= d:
        warnings.warn(f"n={n} <= d={d}: sample covariance may be degenerate",
                      stacklevel=2)
    S = X.T @ X / n
    if np.any(np.diag(S) <= 0.0):
        raise DegenerateData("a column has zero variance")
    dec = decompose(sg.graph)
    try:
        sigma = ipf_fit_matrix(S, dec, tol=cfg.ipf_tol)
    except np.linalg.LinAlgError as exc:
        raise DegenerateData("singular clique marginal in the sample covariance") from exc
    if not _is_pd(sigma):
        raise DegenerateData("projected sample covariance is not positive definite")

    obj = _Objective(sg, X, cfg)
    state, ll = obj.evaluate(sigma)
    elements = classify_elements(sg)
    sweep = [(i - 1, j - 1) for i, j in elements.shared + elements.optimized]

    cycles = 0
    converged = False
    for _ in range(cfg.max_cycles):
        cycles += 1
        ll_start = ll
        for i, j in sweep:
            new_sigma, new_state, new_ll = _optimize_element(
                obj, sigma, state, ll, i, j, cfg)
            if new_ll < ll - 1e-9 * (1.0 + abs(ll)):
                raise AssertionError("accepted step decreased the log-likelihood")
            sigma, state, ll = new_sigma, new_state, new_ll
        # refresh determined entries; clique entries (hence the likelihood)
        # are preserved up to the IPF tolerance
        sigma = ipf_fit_matrix(sigma, dec, tol=cfg.ipf_tol)
        state, ll = obj.evaluate(sigma)
        if ll - ll_start < cfg.loglik_tol:
            converged = True
            break
    return FitResult(Covariance(sigma), ll, cycles, converged)
