"""Hartigan's dip statistic and a multimodality test between clusters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from postclust import kernels
from postclust.clustering import Partition
from postclust.merging import between_mask, between_set
from postclust.selective import PValueResult


@dataclass(frozen=True)
class DipResult:
    """Dip of one sample.

    ``modal_interval`` holds 0-based positions in the sorted sample.  ``p``
    is None until a calibration has been run.
    """

    dip: float
    n: int
    modal_interval: tuple
    p: float | None = None


def dip_statistic(sample) -> DipResult:
    """Sup-distance between the empirical CDF and the closest unimodal CDF.

    Ties are kept as they are.  A sample with a single distinct value has dip 0.
    """
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    if x.size < 2:
        raise ValueError("dip needs at least two observations")
    if not np.isfinite(x).all():
        raise ValueError("dip needs finite values")
    d, lo, hi = kernels.dip_sorted(x)
    return DipResult(float(d), int(x.size), (int(lo), int(hi)))


def uniform_dips(n: int, B: int, rng=None) -> np.ndarray:
    """Dips of ``B`` samples of size ``n`` from Uniform(0, 1)."""
    if n < 2 or B < 1:
        raise ValueError("need n >= 2 and B >= 1")
    rng = np.random.default_rng(rng)
    return kernels.dip_uniform_many(rng.random((B, n)))


def p_from_null(dip_obs: float, null_dips) -> float:
    """Add-one Monte Carlo p-value ``(1 + #{d_b >= dip_obs}) / (B + 1)``."""
    null_dips = np.asarray(null_dips)
    return (1 + int(np.count_nonzero(null_dips >= dip_obs))) / (null_dips.size + 1)


def dip_p_value(dip_obs: float, n: int, B: int = 2000, rng=None) -> float:
    """Calibrate an observed dip against uniform samples of the same size."""
    if dip_obs < 0:
        raise ValueError("dip must be nonnegative")
    return p_from_null(dip_obs, uniform_dips(n, B, rng))


def dip_test_between(X, g: int, part: Partition, k: int, l: int, B: int = 2000, rng=None) -> PValueResult:
    """Dip test on ``x_g`` restricted to the clusters between ``k`` and ``l``."""
    x = X.values[:, g]
    bs = between_set(x, part, k, l, g)
    sample = x[between_mask(part, bs)]
    if sample.size < 2:
        raise ValueError("restricted sample too small for a dip test")
    res = dip_statistic(sample)
    p = dip_p_value(res.dip, res.n, B, rng)
    return PValueResult(
        p=p,
        statistic=res.dip,
        method="dip",
        n_samples=B,
        details={"n": res.n, "between_set": list(bs.ordered_clusters)},
    )
