"""Selective test for a mean shift between two estimated clusters.

The test conditions on the clustering event: the observed column ``x_g`` is
moved only along the contrast direction ``eta`` and the data are re-clustered;
only perturbations that keep both clusters of interest count.  P-values are
estimated by importance-sampled Monte Carlo centred on the observed statistic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from postclust.clustering import Partition, clusters_preserved
from postclust.dataset import DataMatrix

METHODS = ("direct", "merged", "dip", "ttest")
NO_PRESERVED = "no preserved samples"


class DegenerateVarianceError(ValueError):
    """The variance plug-in is zero, so the sampling distribution collapses."""

    def __init__(self, msg="degenerate variance"):
        super().__init__(msg)


@dataclass(frozen=True)
class ContrastVector:
    """Contrast between clusters ``k`` and ``l``.

    ``eta @ x`` is the mean of ``x`` over cluster ``k`` minus its mean over
    cluster ``l``.
    """

    eta: np.ndarray
    k: int
    l: int
    norm_sq: float


@dataclass(frozen=True)
class PValueResult:
    """A p-value with the diagnostics needed to audit it.

    Attributes
    ----------
    p : float
        In ``(0, 1]``.
    statistic : float
        Observed mean difference, or the dip for the multimodality test.
    method : str
        One of ``direct``, ``merged``, ``dip`` or ``ttest``.
    n_samples, n_preserved : int
        Monte Carlo draws and how many of them kept both clusters.
        ``n_preserved`` is None where it has no meaning.
    sigma_sq : float or None
        Variance plug-in (absent for the dip test).
    warning : str or None
    details : dict
        Method-specific extras (per-pair p-values, t statistic...).
    """

    p: float
    statistic: float
    method: str
    n_samples: int = 0
    n_preserved: int | None = None
    sigma_sq: float | None = None
    warning: str | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "statistic": self.statistic,
            "method": self.method,
            "n_samples": self.n_samples,
            "n_preserved": self.n_preserved,
            "sigma_sq": self.sigma_sq,
            "warning": self.warning,
            "details": self.details,
        }


def _column(x_g) -> np.ndarray:
    return np.asarray(x_g, dtype=np.float64).ravel()


def contrast_vector(part: Partition, k: int, l: int) -> ContrastVector:
    """Build the contrast vector for clusters ``k`` and ``l`` of ``part``."""
    if k == l:
        raise ValueError("k and l must differ")
    for c in (k, l):
        if not 1 <= c <= part.K:
            raise ValueError(f"cluster id {c} out of range 1..{part.K}")
    nk, nl = part.size(k), part.size(l)
    if nk == 0 or nl == 0:
        raise ValueError("empty cluster")
    eta = np.zeros(part.n)
    eta[part.mask(k)] = 1.0 / nk
    eta[part.mask(l)] = -1.0 / nl
    return ContrastVector(eta, k, l, 1.0 / nk + 1.0 / nl)


def test_statistic(x_g, cv: ContrastVector) -> float:
    """``x_g @ eta``: difference of the two cluster means."""
    x = _column(x_g)
    if x.shape != cv.eta.shape:
        raise ValueError(f"length mismatch: column has {x.size} rows, contrast has {cv.eta.size}")
    return float(x @ cv.eta)


# pytest would otherwise try to collect this as a test function
test_statistic.__test__ = False


def perturb_column(X: DataMatrix, g: int, cv: ContrastVector, phi: float) -> DataMatrix:
    """Replace column ``g`` so that its contrast statistic becomes ``phi``.

    The new column is ``x_g + eta * (phi - x_g @ eta) / ||eta||^2``; the part
    of ``x_g`` orthogonal to ``eta`` is untouched and with
    ``phi == x_g @ eta`` the data come back unchanged.
    """
    x = X.values[:, g]
    shift = (phi - test_statistic(x, cv)) / cv.norm_sq
    return X.with_column(g, x + cv.eta * shift)


def pooled_variance(x_g, mask) -> float:
    """Squared deviations from the grand mean over ``mask``, over count - 1."""
    xs = _column(x_g)[np.asarray(mask, dtype=bool)]
    if xs.size < 2:
        raise ValueError("need at least two observations to estimate a variance")
    d = xs - xs.mean()
    return float(d @ d) / (xs.size - 1)


def variance_pair(x_g, part: Partition, k: int, l: int) -> float:
    """Variance of ``x_g`` over the union of clusters ``k`` and ``l``."""
    return pooled_variance(x_g, part.mask(k) | part.mask(l))


def variance_all(x_g) -> float:
    """Variance over every observation (overestimates under the alternative)."""
    return pooled_variance(x_g, np.ones(len(_column(x_g)), dtype=bool))


def resolve_variance(x_g, part, k, l, sigma_sq="estimate", variance="pair") -> float:
    if isinstance(sigma_sq, str):
        if sigma_sq != "estimate":
            raise ValueError(f"sigma_sq must be a number or 'estimate', got {sigma_sq!r}")
        if variance == "pair":
            sigma_sq = variance_pair(x_g, part, k, l)
        elif variance == "all":
            sigma_sq = variance_all(x_g)
        else:
            raise ValueError(f"unknown variance estimator {variance!r}")
    sigma_sq = float(sigma_sq)
    if not sigma_sq > 0:
        raise DegenerateVarianceError()
    return sigma_sq


def preservation_flags(X, g, part, k, l, clusterer, cv, shifts) -> np.ndarray:
    """Which perturbations ``x_g + eta * shift`` keep clusters ``k`` and ``l``.

    Uses the clusterer's batched ``preservation_flags`` when it has one and
    otherwise re-clusters each perturbed matrix.
    """
    x = X.values[:, g]
    fast = getattr(clusterer, "preservation_flags", None)
    if fast is not None:
        return fast(X, g, x, cv.eta, shifts, part.rows(k), part.rows(l))
    out = np.empty(len(shifts), dtype=bool)
    for i, c in enumerate(shifts):
        out[i] = clusters_preserved(part, k, l, clusterer(X.with_column(g, x + cv.eta * c)))
    return out


def importance_p_value(m, s2, omega, preserved):
    """Monte Carlo estimate from draws ``omega ~ N(m, s2)``.

    Returns ``(p, n_preserved)``.  Weights are ``exp((m^2 - 2 m omega) / (2 s2))``
    evaluated relative to their largest preserved value; the ratio does not
    depend on the common scale.
    """
    preserved = np.asarray(preserved, dtype=bool)
    n_pres = int(preserved.sum())
    if n_pres == 0:
        return 1.0, 0
    logw = (m * m - 2.0 * m * omega) / (2.0 * s2)
    w = np.exp(logw - logw[preserved].max())
    exceed = np.abs(omega) >= abs(m)
    total = math.fsum(w[preserved])
    pibar = total / len(omega)
    num = math.fsum(w[preserved & exceed]) + pibar
    return min(num / (total + pibar), 1.0), n_pres


def selective_p_value(
    X: DataMatrix,
    g: int,
    part: Partition,
    k: int,
    l: int,
    clusterer,
    sigma_sq="estimate",
    N: int = 2000,
    rng=None,
    variance: str = "pair",
    method: str = "direct",
) -> PValueResult:
    """Selective p-value for ``H0: mean_k(x_g) = mean_l(x_g)``.

    Parameters
    ----------
    X : DataMatrix
    g : int
        Column index of the tested variable.
    part : Partition
        ``clusterer(X)``; the caller is responsible for consistency.
    k, l : int
        Cluster ids (1-based).
    clusterer : callable
        Maps a DataMatrix to a Partition.
    sigma_sq : float or "estimate"
        Variance of ``x_g``; estimated once from the observed data by default.
    N : int
        Monte Carlo draws.
    rng : numpy Generator, int or None
    variance : {"pair", "all"}
        Estimator used when ``sigma_sq="estimate"``.

    Returns
    -------
    PValueResult
        ``p = 1`` with a warning when no draw preserves the clusters.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(rng)
    x = X.values[:, g]
    cv = contrast_vector(part, k, l)
    m = test_statistic(x, cv)
    sigma_sq = resolve_variance(x, part, k, l, sigma_sq, variance)
    s2 = sigma_sq * cv.norm_sq
    # drawing m + sign(m) * s * z makes the swapped test (l, k) see exactly -omega,
    # hence the same perturbed data and the same p-value
    omega = m + math.copysign(math.sqrt(s2), m) * rng.standard_normal(N)
    shifts = (omega - m) / cv.norm_sq
    preserved = preservation_flags(X, g, part, k, l, clusterer, cv, shifts)
    p, n_pres = importance_p_value(m, s2, omega, preserved)
    return PValueResult(
        p=p,
        statistic=m,
        method=method,
        n_samples=N,
        n_preserved=n_pres,
        sigma_sq=sigma_sq,
        warning=NO_PRESERVED if n_pres == 0 else None,
    )


def t_test_p_value(x_g, part: Partition, k: int, l: int, equal_var: bool = False) -> PValueResult:
    """Two-sided two-sample t-test between clusters, ignoring the clustering step.

    Welch's unequal-variance version by default; ``equal_var=True`` gives the
    pooled Student test.
    """
    x = _column(x_g)
    a, b = x[part.mask(k)], x[part.mask(l)]
    if a.size < 2 or b.size < 2:
        raise ValueError("each cluster needs at least two members for a t-test")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        raise DegenerateVarianceError("zero within-cluster variance")
    res = stats.ttest_ind(a, b, equal_var=equal_var)
    return PValueResult(
        # keep p strictly positive even when the tail underflows
        p=max(float(res.pvalue), np.finfo(float).tiny),
        statistic=float(a.mean() - b.mean()),
        method="ttest",
        details={"t": float(res.statistic), "equal_var": equal_var},
    )
