"""Penalized model scores: BIC and extended BIC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimate import FitConfig, fit_mle
from .strata import StratifiedGraph, count_parameters


@dataclass(frozen=True)
class ScoreResult:
    """A fitted score; always ``score = log_likelihood - penalty``."""

    score: float
    log_likelihood: float
    k: int
    penalty: float
    kind: str
    kappa: float | None = None


def bic_score(sg: StratifiedGraph, data, cfg: FitConfig | None = None) -> ScoreResult:
    """Maximized log-likelihood penalized by (k/2) log n."""
    X = np.asarray(getattr(data, "values", data), dtype=float)
    fit = fit_mle(sg, X, cfg)
    k = count_parameters(sg)
    penalty = 0.5 * k * math.log(X.shape[0])
    return ScoreResult(fit.log_likelihood - penalty, fit.log_likelihood,
                       k, penalty, "bic")


def extended_bic_score(sg: StratifiedGraph, data, kappa: float,
                       cfg: FitConfig | None = None) -> ScoreResult:
    """BIC with the sparsity term (|E|/2) log(kappa |Delta|) subtracted."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    base = bic_score(sg, data, cfg)
    extra = 0.5 * len(sg.graph.edges) * math.log(kappa * sg.graph.n_nodes)
    return ScoreResult(base.score - extra, base.log_likelihood, base.k,
                       base.penalty + extra, "extended_bic", kappa)
