"""Merged selective test across intervening clusters.

When other clusters sit between ``C_k`` and ``C_l`` on the tested variable,
perturbing ``x_g`` along the direct contrast rarely preserves the clustering
and the direct test loses power.  Instead each pair of adjacent clusters on
the path from ``k`` to ``l`` is tested and the p-values are combined with the
harmonic-mean merger, which is valid under arbitrary dependence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from postclust.clustering import Partition
from postclust.selective import (
    NO_PRESERVED,
    DegenerateVarianceError,
    PValueResult,
    contrast_vector,
    pooled_variance,
    selective_p_value,
    test_statistic,
    variance_all,
)


@dataclass(frozen=True)
class BetweenSet:
    """Clusters whose mean on ``x_g`` lies between those of ``k`` and ``l``.

    ``ordered_clusters`` is sorted by ascending mean and starts and ends
    with the two endpoints.
    """

    ordered_clusters: tuple
    g: int | None
    endpoints: tuple
    means: tuple

    @property
    def M(self) -> int:
        return len(self.ordered_clusters)


def cluster_means(x_g, part: Partition) -> np.ndarray:
    x = np.asarray(x_g, dtype=np.float64).ravel()
    return np.array([x[part.mask(c)].mean() for c in range(1, part.K + 1)])


def between_set(x_g, part: Partition, k: int, l: int, g: int | None = None) -> BetweenSet:
    """All clusters with mean in the closed interval spanned by ``k`` and ``l``.

    Clusters are sorted by mean.  On ties the endpoints stay at the ends of
    the order and the remaining clusters follow their ids.
    """
    if k == l:
        raise ValueError("k and l must differ")
    means = cluster_means(x_g, part)
    low, high = (k, l) if (means[k - 1], k) <= (means[l - 1], l) else (l, k)
    lo, hi = means[low - 1], means[high - 1]
    inside = [c for c in range(1, part.K + 1) if lo <= means[c - 1] <= hi]
    rank = {low: 0, high: 2}
    ordered = sorted(inside, key=lambda c: (means[c - 1], rank.get(c, 1), c))
    return BetweenSet(tuple(ordered), g, (k, l), tuple(float(means[c - 1]) for c in ordered))


def adjacent_pairs(bs: BetweenSet) -> list:
    """The ``M - 1`` consecutive pairs, walking from endpoint ``k`` to ``l``.

    With ``M = 2`` this is exactly ``[(k, l)]``.
    """
    if bs.M < 2:
        raise ValueError("between-set needs at least two clusters")
    order = list(bs.ordered_clusters)
    if order[0] != bs.endpoints[0]:
        order.reverse()
    return list(zip(order[:-1], order[1:]))


def between_mask(part: Partition, bs: BetweenSet) -> np.ndarray:
    mask = np.zeros(part.n, dtype=bool)
    for c in bs.ordered_clusters:
        mask |= part.mask(c)
    return mask


def variance_path(x_g, part: Partition, bs: BetweenSet) -> float:
    """Variance of ``x_g`` over every observation in the between-set."""
    return pooled_variance(x_g, between_mask(part, bs))


def harmonic_merge(pvals) -> float:
    """Harmonic-mean merger ``min(e ln(M-1) (M-1) / sum(1/p_i), 1)``.

    A single p-value is returned unchanged.
    """
    pvals = [float(p) for p in pvals]
    if not pvals:
        raise ValueError("need at least one p-value")
    if any(not p > 0 for p in pvals):
        raise ValueError("p-values must be positive")
    if len(pvals) == 1:
        return pvals[0]
    m1 = len(pvals)
    return min(math.e * math.log(m1) * m1 / math.fsum(1.0 / p for p in pvals), 1.0)


def merged_selective_p_value(
    X,
    g: int,
    part: Partition,
    k: int,
    l: int,
    clusterer,
    sigma_sq="estimate",
    N: int = 2000,
    rng=None,
    variance: str = "pair",
) -> PValueResult:
    """Harmonic merge of selective tests between adjacent clusters.

    The variance is estimated once over the whole between-set and shared by
    every sub-test.  With a single pair (``M = 2``) the generator is used
    directly, so the result equals :func:`selective_p_value` with the same
    seed; otherwise each pair gets its own child generator, in pair order.
    """
    rng = np.random.default_rng(rng)
    x = X.values[:, g]
    bs = between_set(x, part, k, l, g)
    if isinstance(sigma_sq, str):
        if sigma_sq != "estimate":
            raise ValueError(f"sigma_sq must be a number or 'estimate', got {sigma_sq!r}")
        sigma_sq = variance_path(x, part, bs) if variance == "pair" else variance_all(x)
    if not sigma_sq > 0:
        raise DegenerateVarianceError()
    pairs = adjacent_pairs(bs)
    rngs = [rng] if len(pairs) == 1 else rng.spawn(len(pairs))
    subs = [
        selective_p_value(X, g, part, a, b, clusterer, sigma_sq=sigma_sq, N=N, rng=r)
        for (a, b), r in zip(pairs, rngs)
    ]
    p = harmonic_merge([s.p for s in subs])
    warned = [f"{a}-{b}" for (a, b), s in zip(pairs, subs) if s.warning]
    statistic = test_statistic(x, contrast_vector(part, k, l))
    return PValueResult(
        p=p,
        statistic=statistic,
        method="merged",
        n_samples=N * len(pairs),
        n_preserved=sum(s.n_preserved for s in subs),
        sigma_sq=float(sigma_sq),
        warning=f"{NO_PRESERVED} in pairs {', '.join(warned)}" if warned else None,
        details={
            "between_set": list(bs.ordered_clusters),
            "pairs": [[a, b] for a, b in pairs],
            "pair_p": [s.p for s in subs],
        },
    )
