"""Simulation scenarios, replication engine and calibration summaries.

Every replication draws its data from ``SeedSequence(seed, spawn_key=(rep,))``
and each test from ``SeedSequence(seed, spawn_key=(rep, comparison, slot))``.
The direct and merged tests share slot 0 (so they coincide exactly when only
two clusters are involved) and the dip test uses slot 1.  None of these
depend on ``K``, which makes runs with different cuts comparable
replication by replication.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from postclust.clustering import Partition, WardClusterer
from postclust.dataset import DataMatrix
from postclust.dip import dip_test_between
from postclust.merging import between_set, merged_selective_p_value
from postclust.selective import METHODS, selective_p_value, t_test_p_value

GENERATORS = ("null_gaussian", "three_clusters", "contamination", "intervening", "robustness")

# Stand-in set of unimodal distributions for the robustness scenario.
ROBUSTNESS_DISTRIBUTIONS = (
    "gaussian",
    "student_t5",
    "uniform",
    "exponential",
    "laplace",
    "logistic",
    "beta22",
)

CONTAMINATION_DELTAS = (0.5, 1, 2, 3, 4, 5, 6)
INTERVENING_DELTAS = (0.5, 1, 1.5, 3, 6, 12, 15, 18, 19, 19.5)


def _names(p):
    return [f"X{j + 1}" for j in range(p)]


def gen_null_gaussian(n: int, p: int, rng) -> DataMatrix:
    """``n x p`` independent standard normal draws."""
    rng = np.random.default_rng(rng)
    return DataMatrix(rng.standard_normal((n, p)), _names(p))


def gen_three_clusters(n_per_cluster: int, rng):
    """Three unit-variance clusters centred at (-5, 0), (5, 0) and (0, 10).

    Returns ``(data, labels)``; the labels are for evaluation only.
    """
    rng = np.random.default_rng(rng)
    centres = np.array([[-5.0, 0.0], [5.0, 0.0], [0.0, 10.0]])
    labels = np.repeat(np.arange(1, 4), n_per_cluster)
    values = centres[labels - 1] + rng.standard_normal((3 * n_per_cluster, 2))
    return DataMatrix(values, _names(2)), labels


def gen_contamination(n: int, delta: float, rng, return_labels: bool = False):
    """Univariate mixture ``0.5 N(0, 1) + 0.5 N(delta, 1)``."""
    rng = np.random.default_rng(rng)
    comp = rng.random(n) < 0.5
    x = rng.standard_normal(n) + delta * comp
    m = DataMatrix(x[:, None], ["X1"])
    return (m, comp.astype(int) + 1) if return_labels else m


def gen_intervening(n: int, delta: float, rng, return_labels: bool = False):
    """Three equally likely groups separated on ``X1`` only.

    ``X1`` means are 0, ``delta`` and ``delta / 2`` (the intervening group);
    ``X2`` is pure noise.
    """
    rng = np.random.default_rng(rng)
    comp = rng.integers(0, 3, size=n)
    means = np.array([0.0, delta, delta / 2])
    values = rng.standard_normal((n, 2))
    values[:, 0] += means[comp]
    m = DataMatrix(values, _names(2))
    return (m, comp + 1) if return_labels else m


def gen_robustness(n: int, distribution: str, rng, p: int = 1) -> DataMatrix:
    """Unimodal non-Gaussian null data, ``n x p`` independent draws."""
    rng = np.random.default_rng(rng)
    size = (n, p)
    draw = {
        "gaussian": lambda: rng.standard_normal(size),
        "student_t5": lambda: rng.standard_t(5, size),
        "uniform": lambda: rng.random(size),
        "exponential": lambda: rng.exponential(1.0, size),
        "laplace": lambda: rng.laplace(0.0, 1.0, size),
        "logistic": lambda: rng.logistic(0.0, 1.0, size),
        "beta22": lambda: rng.beta(2.0, 2.0, size),
    }
    if distribution not in draw:
        raise ValueError(f"unknown distribution {distribution!r}")
    return DataMatrix(draw[distribution](), _names(p))


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation setting.

    ``comparisons`` is ``"all"`` (every cluster pair on every variable) or
    ``"extreme"`` (the two clusters with the lowest and highest ``X1`` mean,
    tested on ``X1``).
    """

    generator: str = "null_gaussian"
    n: int = 200
    p: int = 2
    delta: float = 0.0
    K: int = 3
    n_reps: int = 500
    alpha: float = 0.05
    mc_samples: int = 2000
    dip_reps: int = 2000
    seed: int = 42
    methods: tuple = METHODS
    comparisons: str = "all"
    distribution: str = "gaussian"
    variance: str = "pair"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown scenario {self.generator!r}")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.K < 2:
            raise ValueError("need at least two clusters")
        if self.comparisons not in ("all", "extreme"):
            raise ValueError("comparisons must be 'all' or 'extreme'")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        if self.generator == "robustness" and self.distribution not in ROBUSTNESS_DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")

    @classmethod
    def preset(cls, generator: str, **overrides) -> "ScenarioConfig":
        """Defaults for each generator, with keyword overrides."""
        base = {
            "null_gaussian": dict(p=2, K=3, comparisons="all"),
            "three_clusters": dict(n=201, p=2, K=3, comparisons="all"),
            "contamination": dict(p=1, K=2, comparisons="extreme", mc_samples=1000),
            "intervening": dict(p=2, K=3, comparisons="extreme", mc_samples=1000),
            "robustness": dict(p=1, K=2, comparisons="all"),
        }
        if generator not in base:
            raise ValueError(f"unknown scenario {generator!r}")
        kw = dict(base[generator], generator=generator)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


def generate(cfg: ScenarioConfig, rng) -> DataMatrix:
    """Draw one data set for ``cfg``; true labels are never returned."""
    if cfg.generator == "null_gaussian":
        return gen_null_gaussian(cfg.n, cfg.p, rng)
    if cfg.generator == "three_clusters":
        return gen_three_clusters(cfg.n // 3, rng)[0]
    if cfg.generator == "contamination":
        return gen_contamination(cfg.n, cfg.delta, rng)
    if cfg.generator == "intervening":
        return gen_intervening(cfg.n, cfg.delta, rng)
    return gen_robustness(cfg.n, cfg.distribution, rng, cfg.p)


def comparisons_for(cfg: ScenarioConfig, m: DataMatrix, part: Partition) -> list:
    """``(k, l, g)`` triples tested in one replication, in canonical order."""
    if cfg.comparisons == "all":
        return [(k, l, g) for k, l in itertools.combinations(range(1, part.K + 1), 2) for g in range(m.p)]
    x = m.values[:, 0]
    means = [x[part.mask(c)].mean() for c in range(1, part.K + 1)]
    lo = min(range(part.K), key=lambda c: (means[c], c)) + 1
    hi = max(range(part.K), key=lambda c: (means[c], -c)) + 1
    return [(min(lo, hi), max(lo, hi), 0)]


def ks_to_uniform(pvals) -> float:
    """Kolmogorov-Smirnov distance between the p-values' ECDF and Uniform(0, 1)."""
    p = np.sort(np.asarray(pvals, dtype=np.float64).ravel())
    if p.size == 0:
        raise ValueError("need at least one p-value")
    m = p.size
    i = np.arange(1, m + 1)
    return float(max((i / m - p).max(), (p - (i - 1) / m).max()))


def _seed(cfg, *key):
    return np.random.SeedSequence(cfg.seed, spawn_key=key)


def run_replication(cfg: ScenarioConfig, rep: int) -> list:
    """All test records for replication ``rep``."""
    records = []

    def failed(exc, k=None, l=None, g=None, methods=cfg.methods):
        for method in methods:
            records.append(dict(rep=rep, method=method, k=k, l=l, variable=g, p=None,
                                statistic=None, n_preserved=None, warning=None,
                                error=f"{type(exc).__name__}: {exc}"))

    try:
        m = generate(cfg, np.random.default_rng(_seed(cfg, rep)))
        clusterer = WardClusterer(cfg.K)
        part = clusterer(m)
        comps = comparisons_for(cfg, m, part)
    except Exception as exc:
        failed(exc)
        return records

    for ci, (k, l, g) in enumerate(comps):
        direct = None
        for method in cfg.methods:
            try:
                if method == "direct":
                    res = direct = selective_p_value(
                        m, g, part, k, l, clusterer, N=cfg.mc_samples,
                        rng=np.random.default_rng(_seed(cfg, rep, ci, 0)), variance=cfg.variance)
                elif method == "merged":
                    bs = between_set(m.values[:, g], part, k, l, g)
                    if bs.M == 2 and direct is not None:
                        # identical computation: same pair, variance and generator
                        res = replace(direct, method="merged", details={
                            "between_set": list(bs.ordered_clusters), "pairs": [[k, l]],
                            "pair_p": [direct.p]})
                    else:
                        res = merged_selective_p_value(
                            m, g, part, k, l, clusterer, N=cfg.mc_samples,
                            rng=np.random.default_rng(_seed(cfg, rep, ci, 0)), variance=cfg.variance)
                elif method == "dip":
                    res = dip_test_between(m, g, part, k, l, B=cfg.dip_reps,
                                           rng=np.random.default_rng(_seed(cfg, rep, ci, 1)))
                else:
                    res = t_test_p_value(m.values[:, g], part, k, l)
            except Exception as exc:
                failed(exc, k, l, g, methods=(method,))
                continue
            records.append(dict(rep=rep, method=method, k=k, l=l, variable=g, p=res.p,
                                statistic=res.statistic, n_preserved=res.n_preserved,
                                warning=res.warning, error=None))
    return records


def _method_order(method):
    return METHODS.index(method)


@dataclass
class SimulationReport:
    """Replication-level p-values and their summaries.

    ``records`` has one entry per replication x method x comparison.  Runtime
    is kept out of :meth:`to_dict` so equal seeds give byte-identical JSON.
    """

    config: ScenarioConfig
    records: list
    runtime_seconds: float = 0.0
    summary: dict = field(init=False)

    def __post_init__(self):
        self.records = sorted(
            self.records,
            key=lambda r: (r["rep"], r["k"] or 0, r["l"] or 0, r["variable"] or 0, _method_order(r["method"])),
        )
        self.summary = {m: self._summarise(m) for m in self.config.methods}

    def pvalues(self, method: str, k=None, l=None, variable=None) -> list:
        """Non-failed p-values of ``method``, optionally for one comparison."""
        return [
            r["p"] for r in self.records
            if r["method"] == method and r["p"] is not None
            and (k is None or r["k"] == k) and (l is None or r["l"] == l)
            and (variable is None or r["variable"] == variable)
        ]

    def by_rep(self, method: str) -> dict:
        """``{rep: p}`` for single-comparison scenarios."""
        return {r["rep"]: r["p"] for r in self.records if r["method"] == method and r["p"] is not None}

    def rejection_rate(self, method: str, **which) -> float:
        p = self.pvalues(method, **which)
        return float(np.mean(np.asarray(p) <= self.config.alpha)) if p else math.nan

    def _summarise(self, method):
        p = self.pvalues(method)
        n_failed = sum(1 for r in self.records if r["method"] == method and r["p"] is None)
        return {
            "n": len(p),
            "n_failed": n_failed,
            "rejection_rate": self.rejection_rate(method) if p else None,
            "ks_to_uniform": ks_to_uniform(p) if p else None,
        }

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "summary": self.summary, "records": self.records}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        cols = ["rep", "method", "k", "l", "variable", "p", "statistic", "n_preserved", "warning", "error"]
        w.writerow(cols)
        for r in self.records:
            w.writerow(["" if r[c] is None else r[c] for c in cols])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationReport":
        names = {f.name for f in fields(ScenarioConfig)}
        cfg = ScenarioConfig(**{k: v for k, v in d["config"].items() if k in names})
        return cls(cfg, d["records"])


def run_scenario(cfg: ScenarioConfig, methods=None, n_jobs: int = 1) -> SimulationReport:
    """Run every replication of ``cfg``.

    Parameters
    ----------
    cfg : ScenarioConfig
    methods : sequence of str, optional
        Overrides ``cfg.methods``.
    n_jobs : int
        Worker processes; results do not depend on it.
    """
    if methods is not None:
        cfg = replace(cfg, methods=tuple(sorted(methods, key=_method_order)))
    start = time.perf_counter()
    reps = range(cfg.n_reps)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(run_replication, [cfg] * cfg.n_reps, reps))
    else:
        chunks = [run_replication(cfg, r) for r in reps]
    records = [r for chunk in chunks for r in chunk]
    return SimulationReport(cfg, records, runtime_seconds=time.perf_counter() - start)
